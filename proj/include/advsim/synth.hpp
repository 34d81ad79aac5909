#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "advsim/dynamics.hpp"
#include "advsim/error.hpp"
#include "advsim/idm.hpp"
#include "advsim/scenario.hpp"

namespace advsim {

enum class ScenarioKind { straight, cut_in, intersection, merge };

inline ScenarioKind parse_scenario_kind(std::string_view name) {
  if (name == "straight") return ScenarioKind::straight;
  if (name == "cut_in") return ScenarioKind::cut_in;
  if (name == "intersection") return ScenarioKind::intersection;
  if (name == "merge") return ScenarioKind::merge;
  throw InvalidArgument("unknown scenario kind: " + std::string(name));
}

inline std::string_view to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::straight: return "straight";
    case ScenarioKind::cut_in: return "cut_in";
    case ScenarioKind::intersection: return "intersection";
    case ScenarioKind::merge: return "merge";
  }
  return "?";
}

using SynthParams = std::map<std::string, double, std::less<>>;

/// Documented parameter ranges (inclusive) per kind. Parameters not given explicitly take
/// their default, jittered by the seed for gaps and speeds.
struct SynthParamSpec {
  std::string_view name;
  double lo;
  double hi;
  double fallback;
  double jitter;  // relative half-width of seed jitter applied to the default
};

inline std::vector<SynthParamSpec> synth_param_specs(ScenarioKind kind) {
  std::vector<SynthParamSpec> common = {
      {"duration_steps", 20, 400, 80, 0.0},
      {"ego_speed", 3, 20, 11.0, 0.06},
  };
  std::vector<SynthParamSpec> extra;
  switch (kind) {
    case ScenarioKind::straight:
      extra = {{"lead_gap", 8, 80, 25.0, 0.15},
               {"lead_speed", 0, 25, -1.0, 0.0},  // -1: match ego_speed
               {"brake_time", -1, 40, -1.0, 0.0},  // -1: lead never brakes
               {"brake_decel", 0.5, 9, 6.0, 0.0}};
      break;
    case ScenarioKind::cut_in:
      extra = {{"cut_gap", 5, 40, 14.0, 0.15},
               {"cut_speed", 3, 25, -1.0, 0.0},  // -1: ego_speed + 1
               {"cut_time", 0, 10, 1.5, 0.2},
               {"cut_duration", 1.5, 6, 3.0, 0.1}};
      break;
    case ScenarioKind::intersection:
      extra = {{"cross_speed", 3, 20, 10.0, 0.08},
               {"cross_lead_time", 1, 6, 3.0, 0.15},
               {"junction_x", 30, 120, 60.0, 0.1}};
      break;
    case ScenarioKind::merge:
      extra = {{"merge_gap", 5, 40, 16.0, 0.15},
               {"merge_speed", 3, 25, -1.0, 0.0}};  // -1: match ego_speed
      break;
  }
  common.insert(common.end(), extra.begin(), extra.end());
  return common;
}

namespace detail {

inline constexpr double kLaneWidth = 3.5;
inline constexpr Extent kCarExtent{4.6, 1.9};

class SynthRng {
 public:
  explicit SynthRng(std::uint64_t seed) : gen_(seed * 0x9E3779B97F4A7C15ULL + 0x2545F4914F6CDD1DULL) {}
  double uniform(double lo, double hi) {
    const double u = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

 private:
  std::mt19937_64 gen_;
};

inline SynthParams resolve_params(ScenarioKind kind, const SynthParams& given, SynthRng& rng) {
  const auto specs = synth_param_specs(kind);
  for (const auto& [key, value] : given) {
    const auto it = std::find_if(specs.begin(), specs.end(), [&](const auto& s) { return s.name == key; });
    if (it == specs.end()) throw InvalidArgument("unknown parameter '" + key + "' for kind " + std::string(to_string(kind)));
    if (!(value >= it->lo && value <= it->hi))
      throw InvalidArgument("parameter '" + key + "' out of range [" + std::to_string(it->lo) + ", " +
                            std::to_string(it->hi) + "]");
  }
  SynthParams out;
  for (const auto& spec : specs) {
    // Draw unconditionally so the random stream does not depend on which keys were given.
    const double jitter = 1.0 + rng.uniform(-spec.jitter, spec.jitter);
    if (const auto it = given.find(spec.name); it != given.end()) {
      out[std::string(spec.name)] = it->second;
    } else {
      out[std::string(spec.name)] = spec.fallback > 0.0 ? spec.fallback * jitter : spec.fallback;
    }
  }
  return out;
}

inline std::vector<std::optional<VehicleState>> to_track(const Trajectory& traj, std::size_t first_step, std::size_t n) {
  std::vector<std::optional<VehicleState>> out(n);
  for (std::size_t i = 0; i < traj.size() && first_step + i < n; ++i) {
    VehicleState s = traj.states[i];
    s.time = static_cast<double>(first_step + i) * kSimDt;
    out[first_step + i] = s;
  }
  return out;
}

// Straight travel along heading 0 with a given speed profile.
inline Trajectory straight_run(Vec2 start, double heading, const std::vector<double>& speeds) {
  std::vector<double> headings(speeds.size(), heading);
  return integrate_profile({start, heading, speeds.front(), 0.0}, speeds, headings, kSimDt);
}

// Pure-pursuit rollout along a dense path, consistent with the execution integrator.
inline Trajectory follow_path(const Polyline& path, double start_arc, const std::vector<double>& speeds) {
  const KinematicLimits limits;
  const auto start = sample_polyline(path, start_arc);
  Trajectory traj{kSimDt, {}};
  traj.states.push_back({start.point, start.heading, speeds.front(), 0.0});
  for (std::size_t k = 1; k < speeds.size(); ++k) {
    const auto& prev = traj.states.back();
    const double lookahead = std::max(5.0, 0.8 * speeds[k]);
    const auto proj = project_onto_polyline(path, prev.position);
    const Vec2 target = sample_polyline(path, proj.arc_length + lookahead).point;
    const double want = std::atan2(target.y - prev.position.y, target.x - prev.position.x);
    const double max_turn = 0.8 * limits.yaw_rate_max * kSimDt;
    const double turn = std::clamp(angle_diff(want, prev.heading), -max_turn, max_turn);
    VehicleState next;
    next.speed = speeds[k];
    next.heading = normalize_angle(prev.heading + turn);
    next.position = integrate_step(prev.position, prev.heading, next.heading, next.speed, kSimDt);
    next.time = static_cast<double>(k) * kSimDt;
    traj.states.push_back(next);
  }
  return traj;
}

// Cosine-blended lateral shift from y0 to y1 between x0 and x1, sampled every metre.
inline Polyline lane_change_path(double x_begin, double x0, double x1, double x_end, double y0, double y1) {
  Polyline p;
  for (double x = x_begin; x < x0; x += 1.0) p.push_back({x, y0});
  for (double x = x0; x < x1; x += 1.0) {
    const double u = (x - x0) / (x1 - x0);
    p.push_back({x, y0 + (y1 - y0) * 0.5 * (1.0 - std::cos(std::numbers::pi * u))});
  }
  for (double x = x1; x <= x_end; x += 1.0) p.push_back({x, y1});
  return p;
}

inline Polygon rect(double x0, double y0, double x1, double y1) { return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}; }

// Logged ego: IDM cruising along y = 0, reacting to any present agent overlapping its lane.
inline Trajectory log_ego(const std::vector<AgentTrack>& others, double speed0, std::size_t n) {
  const KinematicLimits limits;
  IdmParams idm;
  idm.desired_speed = speed0;
  std::vector<double> speeds{speed0};
  Trajectory traj{kSimDt, {}};
  traj.states.push_back({{0.0, 0.0}, 0.0, speed0, 0.0});
  for (std::size_t k = 1; k < n; ++k) {
    const auto& prev = traj.states.back();
    std::optional<IdmLeader> leader;
    for (const auto& a : others) {
      const auto* s = a.at(k - 1);
      if (s == nullptr) continue;
      if (std::abs(s->position.y) > 0.5 * (kCarExtent.width + a.extent.width) + 0.5) continue;
      const double gap = s->position.x - prev.position.x - 0.5 * (kCarExtent.length + a.extent.length);
      if (s->position.x <= prev.position.x) continue;
      const double lead_speed = std::max(0.0, s->speed * std::cos(s->heading));
      if (!leader || gap < leader->gap) leader = IdmLeader{gap, lead_speed};
    }
    const double a = std::clamp(idm_accel(idm, prev.speed, leader), limits.a_min * 0.9, limits.a_max * 0.5);
    VehicleState next;
    next.speed = std::max(0.0, prev.speed + a * kSimDt);
    next.heading = 0.0;
    next.position = integrate_step(prev.position, 0.0, 0.0, next.speed, kSimDt);
    next.time = static_cast<double>(k) * kSimDt;
    traj.states.push_back(next);
  }
  return traj;
}

inline std::vector<double> constant_speeds(double v, std::size_t n) { return std::vector<double>(n, v); }

}  // namespace detail

/// Deterministic synthetic scenario for (kind, seed, params). The ego always drives along
/// y = 0 in the +x direction starting at the origin; lanes are 3.5 m wide.
inline Scenario synth_scenario(ScenarioKind kind, std::uint64_t seed, const SynthParams& params = {}) {
  using namespace detail;
  SynthRng rng(seed ^ (static_cast<std::uint64_t>(kind) << 56));
  const SynthParams p = resolve_params(kind, params, rng);
  const auto n = static_cast<std::size_t>(std::lround(p.at("duration_steps")));
  const double v_ego = p.at("ego_speed");
  const double horizon_x = v_ego * static_cast<double>(n) * kSimDt;

  Scenario s;
  s.id = std::string(to_string(kind)) + "_" + std::to_string(seed);
  s.duration_steps = n;
  s.ego_id = "ego";
  std::vector<AgentTrack> others;
  double road_end = horizon_x + 80.0;

  switch (kind) {
    case ScenarioKind::straight: {
      const double v_lead = p.at("lead_speed") < 0.0 ? v_ego : p.at("lead_speed");
      const double brake_time = p.at("brake_time");
      std::vector<double> speeds(n, v_lead);
      if (brake_time >= 0.0) {
        for (std::size_t k = 0; k < n; ++k) {
          const double t = static_cast<double>(k) * kSimDt;
          if (t > brake_time) speeds[k] = std::max(0.0, v_lead - p.at("brake_decel") * (t - brake_time));
        }
      }
      const auto lead = straight_run({p.at("lead_gap") + kCarExtent.length, 0.0}, 0.0, speeds);
      others.push_back({"lead", kCarExtent, to_track(lead, 0, n)});
      s.map.lanes = {{{-30.0, 0.0}, {road_end, 0.0}}, {{-30.0, kLaneWidth}, {road_end, kLaneWidth}}};
      s.map.drivable_area = {rect(-30.0, -kLaneWidth / 2, road_end, 1.5 * kLaneWidth)};
      break;
    }
    case ScenarioKind::cut_in: {
      const double v_cut = p.at("cut_speed") < 0.0 ? v_ego + 1.0 : p.at("cut_speed");
      const double x_start = p.at("cut_gap") + kCarExtent.length;
      const double x0 = x_start + v_cut * p.at("cut_time");
      const double x1 = x0 + v_cut * p.at("cut_duration");
      const Polyline path = lane_change_path(x_start - 10.0, x0, x1, road_end + 50.0, kLaneWidth, 0.0);
      const auto cutter = follow_path(path, 10.0, constant_speeds(v_cut, n));
      others.push_back({"cutter", kCarExtent, to_track(cutter, 0, n)});
      // Slow traffic in the adjacent lane behind the cutter.
      const auto side = straight_run({-12.0, kLaneWidth}, 0.0, constant_speeds(v_ego * 0.95, n));
      others.push_back({"side", kCarExtent, to_track(side, 0, n)});
      s.map.lanes = {{{-30.0, 0.0}, {road_end, 0.0}}, {{-30.0, kLaneWidth}, {road_end, kLaneWidth}}};
      s.map.drivable_area = {rect(-30.0, -kLaneWidth / 2, road_end, 1.5 * kLaneWidth)};
      break;
    }
    case ScenarioKind::intersection: {
      const double jx = p.at("junction_x");
      const double v_cross = p.at("cross_speed");
      // The crossing car clears the junction centre cross_lead_time seconds before the ego reaches it.
      const double t_centre = std::max(0.5, jx / v_ego - p.at("cross_lead_time"));
      const double cross_x = jx - kLaneWidth / 2;
      const auto cross = straight_run({cross_x, -v_cross * t_centre}, std::numbers::pi / 2, constant_speeds(v_cross, n));
      others.push_back({"cross", kCarExtent, to_track(cross, 0, n)});
      // Opposing crossing car that spawns late and reaches the ego lane after the ego has left.
      const std::size_t spawn = n / 2;
      const double t_arrive = static_cast<double>(n) * kSimDt + 2.0;
      const double y_spawn = v_cross * (t_arrive - static_cast<double>(spawn) * kSimDt);
      const auto opposing = straight_run({jx + kLaneWidth / 2, y_spawn}, -std::numbers::pi / 2,
                                         constant_speeds(v_cross, n - spawn));
      others.push_back({"opposing", kCarExtent, to_track(opposing, spawn, n)});
      const double reach = std::max(v_cross * static_cast<double>(n) * kSimDt + 60.0, y_spawn + 20.0);
      s.map.lanes = {{{-30.0, 0.0}, {road_end, 0.0}},
                     {{road_end, kLaneWidth}, {-30.0, kLaneWidth}},
                     {{cross_x, -reach}, {cross_x, reach}},
                     {{jx + kLaneWidth / 2, reach}, {jx + kLaneWidth / 2, -reach}}};
      s.map.drivable_area = {rect(-30.0, -kLaneWidth / 2, road_end, 1.5 * kLaneWidth),
                             rect(jx - kLaneWidth - 2.0, -reach, jx + kLaneWidth + 2.0, reach)};
      break;
    }
    case ScenarioKind::merge: {
      const double v_merge = p.at("merge_speed") < 0.0 ? v_ego : p.at("merge_speed");
      const double x_start = p.at("merge_gap") + kCarExtent.length;
      const double ramp_y = -3.0 * kLaneWidth;
      const double x0 = x_start + 10.0;
      const double x1 = x0 + 50.0;
      const Polyline path = lane_change_path(x_start - 10.0, x0, x1, road_end + 50.0, ramp_y, 0.0);
      const auto merger = follow_path(path, 10.0, constant_speeds(v_merge, n));
      others.push_back({"merger", kCarExtent, to_track(merger, 0, n)});
      const auto side = straight_run({25.0, kLaneWidth}, 0.0, constant_speeds(v_ego, n));
      others.push_back({"side", kCarExtent, to_track(side, 0, n)});
      s.map.lanes = {{{-30.0, 0.0}, {road_end, 0.0}}, {{-30.0, kLaneWidth}, {road_end, kLaneWidth}}, path};
      // Ramp corridor as a chain of quads around the blend; union with the main road.
      s.map.drivable_area = {rect(-30.0, -kLaneWidth / 2, road_end, 1.5 * kLaneWidth),
                             rect(x_start - 15.0, ramp_y - 2.5, x0 + 2.0, ramp_y + 2.5),
                             {{x0 - 2.0, ramp_y - 2.5}, {x1 + 4.0, -kLaneWidth / 2 - 0.5}, {x1 + 4.0, 0.5},
                              {x0 - 2.0, ramp_y + 2.5}}};
      break;
    }
  }

  const auto ego = log_ego(others, v_ego, n);
  AgentTrack ego_track{"ego", kCarExtent, to_track(ego, 0, n)};
  s.agents.push_back(std::move(ego_track));
  for (auto& a : others) s.agents.push_back(std::move(a));
  s.ego_route = {{0.0, 0.0}, {std::max(ego.back().position.x, 1.0), 0.0}};
  validate_scenario(s);
  return s;
}

}  // namespace advsim
