#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "advsim/error.hpp"
#include "advsim/geometry.hpp"

namespace advsim {

/// Simulation timestep of the traffic layer (10 Hz).
inline constexpr double kSimDt = 0.1;

struct VehicleState {
  Vec2 position{};
  double heading = 0.0;  // radians, (-pi, pi], counterclockwise from +x
  double speed = 0.0;    // m/s, never negative
  double time = 0.0;     // seconds since episode start

  friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

struct Extent {
  double length = 4.5;
  double width = 1.9;

  friend bool operator==(const Extent&, const Extent&) = default;
};

/// Uniformly sampled sequence of states.
struct Trajectory {
  double dt = kSimDt;
  std::vector<VehicleState> states;

  [[nodiscard]] std::size_t size() const { return states.size(); }
  [[nodiscard]] bool empty() const { return states.empty(); }
  [[nodiscard]] const VehicleState& front() const { return states.front(); }
  [[nodiscard]] const VehicleState& back() const { return states.back(); }
  [[nodiscard]] double start_time() const { return states.front().time; }
  [[nodiscard]] double end_time() const { return states.back().time; }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct KinematicLimits {
  double a_max = 8.0;         // m/s^2
  double a_min = -9.0;        // m/s^2
  double yaw_rate_max = 1.2;  // rad/s
  double j_max = 15.0;        // m/s^3, also the jerk normalizer of the adversarial score

  void validate() const {
    if (!(a_min < 0.0 && a_max > 0.0)) throw ValidationError("limits: need a_min < 0 < a_max");
    if (!(yaw_rate_max > 0.0)) throw ValidationError("limits: yaw_rate_max must be positive");
    if (!(j_max > 0.0)) throw ValidationError("limits: j_max must be positive");
  }
};

inline bool is_finite(const VehicleState& s) {
  return std::isfinite(s.position.x) && std::isfinite(s.position.y) && std::isfinite(s.heading) &&
         std::isfinite(s.speed) && std::isfinite(s.time);
}

/// Throws ValidationError if the trajectory is not uniformly sampled or contains non-finite values.
inline void validate_trajectory(const Trajectory& traj) {
  if (!(traj.dt > 0.0) || !std::isfinite(traj.dt)) throw ValidationError("trajectory: dt must be positive");
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto& s = traj.states[i];
    if (!is_finite(s)) throw ValidationError("trajectory: non-finite state at index " + std::to_string(i));
    if (s.speed < 0.0) throw ValidationError("trajectory: negative speed at index " + std::to_string(i));
    const double expected = traj.states.front().time + static_cast<double>(i) * traj.dt;
    if (std::abs(s.time - expected) > 1e-6)
      throw ValidationError("trajectory: non-uniform timestamps at index " + std::to_string(i));
  }
}

/// Linear interpolation between two states; heading goes along the shorter arc.
inline VehicleState interpolate_state(const VehicleState& a, const VehicleState& b, double s) {
  return {lerp(a.position, b.position, s), lerp_angle(a.heading, b.heading, s),
          a.speed + (b.speed - a.speed) * s, a.time + (b.time - a.time) * s};
}

/// One integration step of the execution model: the chord follows the mean of the two headings,
/// which reproduces constant-speed circular arcs exactly.
inline Vec2 integrate_step(Vec2 position, double heading_from, double heading_to, double speed_to, double dt) {
  return position + unit_from_angle(lerp_angle(heading_from, heading_to, 0.5)) * (speed_to * dt);
}

/// Rolls out a speed/heading profile from `initial` (profile index 0 is ignored: the initial state wins).
inline Trajectory integrate_profile(const VehicleState& initial, std::span<const double> speeds,
                                    std::span<const double> headings, double dt) {
  Trajectory out{dt, {}};
  out.states.reserve(speeds.size());
  out.states.push_back(initial);
  for (std::size_t k = 1; k < speeds.size(); ++k) {
    const auto& prev = out.states.back();
    VehicleState next;
    next.speed = std::max(0.0, speeds[k]);
    next.heading = normalize_angle(headings[k]);
    next.position = integrate_step(prev.position, prev.heading, next.heading, next.speed, dt);
    next.time = initial.time + static_cast<double>(k) * dt;
    out.states.push_back(next);
  }
  return out;
}

namespace detail {

inline bool integer_ratio(double a, double b) {
  const double r = a / b;
  return std::abs(r - std::round(r)) <= 1e-9 * std::max(1.0, std::abs(r));
}

// Cubic Hermite between two samples with tangents along the sample headings, scaled to the
// chord length. Falls back to the chord when a heading points backwards or the chord is tiny.
inline Vec2 hermite_position(const VehicleState& a, const VehicleState& b, double u) {
  const Vec2 chord = b.position - a.position;
  const double len = norm(chord);
  const Vec2 ta = unit_from_angle(a.heading);
  const Vec2 tb = unit_from_angle(b.heading);
  if (len < 1e-9 || dot(ta, chord) <= 0.0 || dot(tb, chord) <= 0.0) return lerp(a.position, b.position, u);
  const double u2 = u * u, u3 = u2 * u;
  const double h00 = 2 * u3 - 3 * u2 + 1, h10 = u3 - 2 * u2 + u;
  const double h01 = -2 * u3 + 3 * u2, h11 = u3 - u2;
  return a.position * h00 + ta * (len * h10) + b.position * h01 + tb * (len * h11);
}

}  // namespace detail

/// Resamples to a new timestep that divides, or is divided by, the current one.
/// Positions follow a heading-tangent Hermite spline through the samples (exactly linear on
/// straight segments), headings are interpolated on the circle, and speeds are recomputed from
/// consecutive output positions.
inline Trajectory resample_trajectory(const Trajectory& traj, double dt_out) {
  if (traj.size() < 2) throw InvalidArgument("resample_trajectory: need at least 2 states");
  if (!(dt_out > 0.0)) throw InvalidArgument("resample_trajectory: dt_out must be positive");
  if (!detail::integer_ratio(traj.dt, dt_out) && !detail::integer_ratio(dt_out, traj.dt))
    throw InvalidArgument("resample_trajectory: dt_out must divide or be a multiple of dt");
  if (std::abs(dt_out - traj.dt) <= 1e-9) return traj;

  const double t0 = traj.start_time();
  const double span = traj.end_time() - t0;
  const auto n_out = static_cast<std::size_t>(std::floor(span / dt_out + 1e-9)) + 1;
  Trajectory out{dt_out, {}};
  out.states.reserve(n_out);
  for (std::size_t j = 0; j < n_out; ++j) {
    const double rel = static_cast<double>(j) * dt_out;
    const double f = rel / traj.dt;
    auto i = static_cast<std::size_t>(std::floor(f + 1e-9));
    i = std::min(i, traj.size() - 2);
    const double u = std::clamp(f - static_cast<double>(i), 0.0, 1.0);
    const auto& a = traj.states[i];
    const auto& b = traj.states[i + 1];
    VehicleState s;
    s.position = u <= 1e-12 ? a.position : (u >= 1.0 - 1e-12 ? b.position : detail::hermite_position(a, b, u));
    s.heading = lerp_angle(a.heading, b.heading, u);
    s.time = t0 + rel;
    out.states.push_back(s);
  }
  for (std::size_t j = 1; j < out.size(); ++j)
    out.states[j].speed = distance(out.states[j].position, out.states[j - 1].position) / dt_out;
  out.states[0].speed = out.size() > 1 ? out.states[1].speed : traj.front().speed;
  return out;
}

/// Forward pass that limits per-step acceleration to [a_min, a_max] and yaw rate to
/// yaw_rate_max, treating the input speeds and headings as the desired profile, then
/// re-integrates positions. The first state is kept as is.
inline Trajectory clamp_kinematics(const Trajectory& traj, const KinematicLimits& limits) {
  if (traj.empty()) return traj;
  Trajectory out{traj.dt, {}};
  out.states.reserve(traj.size());
  out.states.push_back(traj.front());
  const double dt = traj.dt;
  const double max_turn = limits.yaw_rate_max * dt;
  for (std::size_t k = 1; k < traj.size(); ++k) {
    const auto& prev = out.states.back();
    const auto& want = traj.states[k];
    VehicleState next;
    next.speed = std::clamp(want.speed, prev.speed + limits.a_min * dt, prev.speed + limits.a_max * dt);
    next.speed = std::max(0.0, next.speed);
    const double turn = std::clamp(angle_diff(want.heading, prev.heading), -max_turn, max_turn);
    next.heading = normalize_angle(prev.heading + turn);
    next.position = integrate_step(prev.position, prev.heading, next.heading, next.speed, dt);
    next.time = want.time;
    out.states.push_back(next);
  }
  return out;
}

/// Oriented rectangle centred on the state, long axis along the heading. Corners are
/// counterclockwise starting at front-right.
inline Quad footprint(const VehicleState& state, const Extent& extent) {
  const Vec2 fwd = unit_from_angle(state.heading) * (extent.length / 2.0);
  const Vec2 left = perp(unit_from_angle(state.heading)) * (extent.width / 2.0);
  const Vec2 c = state.position;
  return {c + fwd - left, c + fwd + left, c - fwd + left, c - fwd - left};
}

/// Separating-axis overlap test; touching rectangles overlap.
inline bool obb_overlap(const Quad& a, const Quad& b) { return convex_quads_overlap(a, b); }

inline double footprint_distance(const VehicleState& a, const Extent& ea, const VehicleState& b, const Extent& eb) {
  return convex_quads_distance(footprint(a, ea), footprint(b, eb));
}

/// Finite-difference accelerations of a trajectory's speed profile.
inline std::vector<double> speed_accelerations(const Trajectory& traj) {
  std::vector<double> acc;
  for (std::size_t k = 1; k < traj.size(); ++k)
    acc.push_back((traj.states[k].speed - traj.states[k - 1].speed) / traj.dt);
  return acc;
}

}  // namespace advsim
