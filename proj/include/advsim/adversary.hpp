#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "advsim/dynamics.hpp"
#include "advsim/error.hpp"
#include "advsim/scenario.hpp"

namespace advsim {

struct AdversaryConfig {
  double gamma = 0.9;         // decay of the collision term per step of delay
  double w_c = 1.0;           // collision weight
  double w_j = 0.5;           // jerk weight
  int horizon = 50;           // steps at 10 Hz
  double near_miss_d0 = 2.0;  // m
  int num_candidates = 32;
  double prior_lambda = 0.5;  // softmax temperature on deviation from the log (1/m)
  std::optional<std::string> agent_id;  // force the adversarial vehicle

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("adversary.gamma: must lie in (0, 1)");
    if (!(w_c >= 0.0) || !(w_j >= 0.0)) throw ValidationError("adversary: weights must be non-negative");
    if (horizon < 1) throw ValidationError("adversary.horizon: must be at least 1");
    if (!(near_miss_d0 > 0.0)) throw ValidationError("adversary.near_miss_d0: must be positive");
    if (num_candidates < 2) throw ValidationError("adversary.num_candidates: need at least 2");
    if (!(prior_lambda >= 0.0)) throw ValidationError("adversary.prior_lambda: must be non-negative");
  }
};

enum class ManeuverTemplate { log_replay, lane_follow, cut_toward_ego, brake };

inline const char* to_string(ManeuverTemplate m) {
  switch (m) {
    case ManeuverTemplate::log_replay: return "log_replay";
    case ManeuverTemplate::lane_follow: return "lane_follow";
    case ManeuverTemplate::cut_toward_ego: return "cut_toward_ego";
    case ManeuverTemplate::brake: return "brake";
  }
  return "?";
}

struct Candidate {
  Trajectory trajectory;
  double prior = 0.0;
  ManeuverTemplate maneuver = ManeuverTemplate::log_replay;
  double deviation = 0.0;  // mean distance to the logged path, m
};

/// K candidate trajectories with priors summing to one.
struct CandidateSet {
  std::vector<Candidate> candidates;

  [[nodiscard]] std::size_t size() const { return candidates.size(); }
};

struct ScoredCandidate {
  std::size_t index = 0;
  double score = 0.0;
  double prior = 0.0;
  double collision_term = 0.0;  // c_i
  std::optional<int> first_collision;  // t_c, 1-based
  double jerk = 0.0;  // normalized, [0, 1]
  double min_distance = 0.0;  // closest footprint approach to the ego, m
};

// ---------------------------------------------------------------------------
// Score terms

/// Collision term for a candidate that first collides at 1-based step t_c.
inline double collision_term(int t_c, double gamma) { return std::pow(gamma, t_c - 1); }

/// Collision term for a candidate that never collides within the horizon: strictly below
/// any colliding candidate's term and increasing as the closest approach shrinks.
inline double near_miss_term(double gamma, int horizon, double d0, double d_min) {
  return std::pow(gamma, horizon) * d0 / (d0 + std::max(d_min, 0.0));
}

/// Score = p * c^w_c * exp(-w_j * J).
inline double score_terms(double prior, double collision, double w_c, double w_j, double jerk) {
  return prior * std::pow(collision, w_c) * std::exp(-w_j * jerk);
}

// ---------------------------------------------------------------------------
// Trajectory measurements

namespace detail {

inline std::optional<std::size_t> aligned_index(const Trajectory& traj, double time) {
  if (traj.empty()) return std::nullopt;
  const double f = (time - traj.start_time()) / traj.dt;
  const double r = std::round(f);
  if (std::abs(f - r) > 1e-6 || r < 0.0 || r >= static_cast<double>(traj.size())) return std::nullopt;
  return static_cast<std::size_t>(r);
}

inline void require_same_dt(const Trajectory& a, const Trajectory& b) {
  if (std::abs(a.dt - b.dt) > 1e-9) throw InvalidArgument("trajectories have different dt");
}

}  // namespace detail

/// First 1-based step at which the two footprints touch, comparing time-aligned samples plus
/// the midpoint between consecutive samples. Contact at the initial sample reports step 1.
inline std::optional<int> first_collision_step(const Trajectory& traj, const Trajectory& ego, const Extent& traj_extent,
                                               const Extent& ego_extent, int horizon = std::numeric_limits<int>::max()) {
  detail::require_same_dt(traj, ego);
  const VehicleState* prev_a = nullptr;
  const VehicleState* prev_b = nullptr;
  const std::size_t last = std::min<std::size_t>(traj.size(), static_cast<std::size_t>(horizon) + 1);
  for (std::size_t k = 0; k < last; ++k) {
    const auto& a = traj.states[k];
    const auto j = detail::aligned_index(ego, a.time);
    if (!j) {
      prev_a = prev_b = nullptr;
      continue;
    }
    const auto& b = ego.states[*j];
    const int step = std::max<int>(1, static_cast<int>(k));
    if (prev_a != nullptr) {
      const auto mid_a = interpolate_state(*prev_a, a, 0.5);
      const auto mid_b = interpolate_state(*prev_b, b, 0.5);
      if (obb_overlap(footprint(mid_a, traj_extent), footprint(mid_b, ego_extent))) return step;
    }
    if (obb_overlap(footprint(a, traj_extent), footprint(b, ego_extent))) return step;
    prev_a = &a;
    prev_b = &b;
  }
  return std::nullopt;
}

/// Closest footprint distance over time-aligned samples within the horizon.
inline double min_footprint_distance(const Trajectory& traj, const Trajectory& ego, const Extent& traj_extent,
                                     const Extent& ego_extent, int horizon = std::numeric_limits<int>::max()) {
  detail::require_same_dt(traj, ego);
  double best = std::numeric_limits<double>::infinity();
  const std::size_t last = std::min<std::size_t>(traj.size(), static_cast<std::size_t>(horizon) + 1);
  for (std::size_t k = 0; k < last; ++k) {
    const auto j = detail::aligned_index(ego, traj.states[k].time);
    if (!j) continue;
    best = std::min(best, footprint_distance(traj.states[k], traj_extent, ego.states[*j], ego_extent));
  }
  return best;
}

/// Mean magnitude of the third finite difference of position, divided by j_max and capped at 1.
inline double jerk_penalty(const Trajectory& traj, const KinematicLimits& limits) {
  if (traj.size() < 4) throw InvalidArgument("jerk_penalty: need at least 4 states");
  const double dt3 = traj.dt * traj.dt * traj.dt;
  double sum = 0.0;
  for (std::size_t k = 0; k + 3 < traj.size(); ++k) {
    const Vec2 j = (traj.states[k + 3].position - traj.states[k + 2].position * 3.0 +
                    traj.states[k + 1].position * 3.0 - traj.states[k].position) *
                   (1.0 / dt3);
    sum += norm(j);
  }
  const double mean = sum / static_cast<double>(traj.size() - 3);
  return std::min(1.0, mean / limits.j_max);
}

/// Scores one candidate against the recorded ego trajectory.
inline ScoredCandidate adversarial_score(const Trajectory& candidate, double prior, const Trajectory& ego_log,
                                         const AdversaryConfig& cfg, const Extent& candidate_extent,
                                         const Extent& ego_extent, const KinematicLimits& limits = {},
                                         std::size_t index = 0) {
  ScoredCandidate out;
  out.index = index;
  out.prior = prior;
  out.first_collision = first_collision_step(candidate, ego_log, candidate_extent, ego_extent, cfg.horizon);
  out.min_distance = out.first_collision ? 0.0
                                         : min_footprint_distance(candidate, ego_log, candidate_extent, ego_extent,
                                                                  cfg.horizon);
  out.collision_term = out.first_collision
                           ? collision_term(*out.first_collision, cfg.gamma)
                           : near_miss_term(cfg.gamma, cfg.horizon, cfg.near_miss_d0, out.min_distance);
  out.jerk = candidate.size() >= 4 ? jerk_penalty(candidate, limits) : 0.0;
  out.score = score_terms(prior, out.collision_term, cfg.w_c, cfg.w_j, out.jerk);
  return out;
}

/// Strict ordering used by the argmax: higher score, then earlier t_c, then higher prior, then lower index.
inline bool ranks_above(const ScoredCandidate& a, const ScoredCandidate& b) {
  const double tol = 1e-12 * std::max({1.0, std::abs(a.score), std::abs(b.score)});
  if (std::abs(a.score - b.score) > tol) return a.score > b.score;
  const int ta = a.first_collision.value_or(std::numeric_limits<int>::max());
  const int tb = b.first_collision.value_or(std::numeric_limits<int>::max());
  if (ta != tb) return ta < tb;
  if (a.prior != b.prior) return a.prior > b.prior;
  return a.index < b.index;
}

struct Selection {
  std::size_t selected = 0;
  std::vector<ScoredCandidate> scored;
};

inline Selection select_adversarial(const CandidateSet& set, const Trajectory& ego_log, const AdversaryConfig& cfg,
                                    const Extent& candidate_extent, const Extent& ego_extent,
                                    const KinematicLimits& limits = {}) {
  if (set.candidates.empty()) throw InvalidArgument("select_adversarial: empty candidate set");
  Selection sel;
  sel.scored.reserve(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto& c = set.candidates[i];
    sel.scored.push_back(adversarial_score(c.trajectory, c.prior, ego_log, cfg, candidate_extent, ego_extent, limits, i));
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < sel.scored.size(); ++i)
    if (ranks_above(sel.scored[i], sel.scored[best])) best = i;
  sel.selected = best;
  return sel;
}

// ---------------------------------------------------------------------------
// Candidate generation: maneuver-template lattice with softmax priors

namespace detail {

struct ManeuverSpec {
  ManeuverTemplate maneuver;
  double a = 0.0;  // lane_follow: speed factor; cut_toward_ego: intercept time (s); brake: onset (s)
  double b = 0.0;  // lane_follow: lateral offset (m); cut_toward_ego: aim offset ahead of ego (m); brake: decel
};

inline std::vector<ManeuverSpec> maneuver_lattice() {
  std::vector<ManeuverSpec> lattice{{ManeuverTemplate::log_replay}};
  for (double factor : {0.5, 0.8, 1.2, 1.5})
    for (double offset : {-3.5, 0.0, 3.5}) lattice.push_back({ManeuverTemplate::lane_follow, factor, offset});
  for (double t_hit : {1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0})
    for (double ahead : {0.0, 4.0}) lattice.push_back({ManeuverTemplate::cut_toward_ego, t_hit, ahead});
  for (double onset : {0.5, 1.5, 2.5})
    for (double decel : {3.0, 6.0, 9.0}) lattice.push_back({ManeuverTemplate::brake, onset, decel});
  return lattice;
}

class CandidateRng {
 public:
  explicit CandidateRng(std::uint64_t seed) : gen_(seed ^ 0xA5A5A5A5DEADBEEFULL) {}
  double uniform(double lo, double hi) { return lo + (hi - lo) * (static_cast<double>(gen_() >> 11) * 0x1.0p-53); }

 private:
  std::mt19937_64 gen_;
};

// Logged positions from the start step, extended at constant velocity to cover the horizon.
inline Trajectory reference_track(const AgentTrack& track, std::size_t start, std::size_t steps) {
  Trajectory ref = logged_trajectory(track, start);
  while (ref.size() < steps + 1) {
    VehicleState next = ref.back();
    next.position += unit_from_angle(next.heading) * (next.speed * kSimDt);
    next.time += kSimDt;
    ref.states.push_back(next);
  }
  ref.states.resize(steps + 1);
  return ref;
}

inline Polyline path_of(const Trajectory& ref) {
  Polyline path;
  for (const auto& s : ref.states)
    if (path.empty() || distance(path.back(), s.position) > 0.05) path.push_back(s.position);
  const auto& last = ref.back();
  // Extend well past the end so lookahead never runs out.
  path.push_back(last.position + unit_from_angle(last.heading) * 200.0);
  if (path.size() < 2) path.insert(path.begin(), last.position - unit_from_angle(last.heading) * 1.0);
  return path;
}

// Rollout that steers toward an aim point and tracks a desired speed under kinematic limits.
template <typename AimFn>
Trajectory steer_rollout(const VehicleState& start, std::size_t steps, const KinematicLimits& limits, AimFn&& aim) {
  Trajectory out{kSimDt, {start}};
  for (std::size_t k = 1; k <= steps; ++k) {
    const auto& prev = out.states.back();
    const auto [target, want_speed] = aim(prev, k);
    const Vec2 d = target - prev.position;
    const double want_heading = norm(d) > 0.3 ? std::atan2(d.y, d.x) : prev.heading;
    const double max_turn = limits.yaw_rate_max * kSimDt;
    const double turn = std::clamp(angle_diff(want_heading, prev.heading), -max_turn, max_turn);
    VehicleState next;
    next.speed = std::clamp(want_speed, prev.speed + limits.a_min * kSimDt, prev.speed + limits.a_max * kSimDt);
    next.speed = std::max(0.0, next.speed);
    next.heading = normalize_angle(prev.heading + turn);
    next.position = integrate_step(prev.position, prev.heading, next.heading, next.speed, kSimDt);
    next.time = start.time + static_cast<double>(k) * kSimDt;
    out.states.push_back(next);
  }
  return out;
}

struct AimResult {
  Vec2 target;
  double speed;
};

inline Trajectory roll_maneuver(const ManeuverSpec& m, const Trajectory& ref, const Trajectory& ego_log,
                                std::size_t steps, const KinematicLimits& limits) {
  const VehicleState& start = ref.front();
  const Polyline path = path_of(ref);
  const double v0 = start.speed;
  auto follow = [&](const VehicleState& s, double lateral, double speed) {
    const auto proj = project_onto_polyline(path, s.position);
    const auto ahead = sample_polyline(path, proj.arc_length + std::max(6.0, 0.8 * s.speed));
    return AimResult{ahead.point + perp(unit_from_angle(ahead.heading)) * lateral, speed};
  };
  auto ego_at = [&](double t) {
    if (ego_log.empty()) return start;
    const double f = std::clamp((t - ego_log.start_time()) / ego_log.dt, 0.0, static_cast<double>(ego_log.size() - 1));
    const auto i = std::min(static_cast<std::size_t>(f), ego_log.size() - 1);
    if (i + 1 >= ego_log.size()) {
      VehicleState s = ego_log.back();
      s.position += unit_from_angle(s.heading) * (s.speed * (t - s.time));
      return s;
    }
    return interpolate_state(ego_log.states[i], ego_log.states[i + 1], f - static_cast<double>(i));
  };

  switch (m.maneuver) {
    case ManeuverTemplate::log_replay:
      return ref;
    case ManeuverTemplate::lane_follow:
      return steer_rollout(start, steps, limits, [&](const VehicleState& s, std::size_t k) {
        const double blend = std::min(1.0, static_cast<double>(k) * kSimDt / 2.0);
        const double lateral = m.b * 0.5 * (1.0 - std::cos(std::numbers::pi * blend));
        return follow(s, lateral, m.a * std::max(v0, 2.0));
      });
    case ManeuverTemplate::brake:
      return steer_rollout(start, steps, limits, [&](const VehicleState& s, std::size_t k) {
        const double t = static_cast<double>(k) * kSimDt;
        const double speed = t < m.a ? v0 : std::max(0.0, v0 - m.b * (t - m.a));
        return follow(s, 0.0, speed);
      });
    case ManeuverTemplate::cut_toward_ego:
      return steer_rollout(start, steps, limits, [&](const VehicleState& s, std::size_t k) {
        const double t = start.time + static_cast<double>(k) * kSimDt;
        const double t_hit = start.time + m.a;
        if (t < t_hit - 1e-9) {
          const auto e = ego_at(t_hit);
          const Vec2 aim = e.position + unit_from_angle(e.heading) * m.b;
          const double remaining = t_hit - t + kSimDt;
          return AimResult{aim, std::min(25.0, distance(aim, s.position) / remaining)};
        }
        const auto e = ego_at(t + 1.0);
        return AimResult{e.position + unit_from_angle(e.heading) * m.b, ego_at(t).speed};
      });
  }
  return ref;
}

// Mean distance from the candidate's positions to the logged path. Geometric rather than
// time-aligned, so speed variations along the logged lane stay plausible.
inline double mean_deviation(const Trajectory& traj, const Polyline& ref_path) {
  if (traj.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : traj.states) sum += project_onto_polyline(ref_path, s.position).lateral;
  return sum / static_cast<double>(traj.size());
}

}  // namespace detail

/// Builds K kinematically clamped candidates for `adv_id` starting at `start_step`, spanning
/// target speeds, lateral offsets and (lane-follow / cut-toward-ego / brake) templates.
/// Index 0 is always the log-replay candidate. Priors are softmax(-lambda * mean distance
/// to the logged path). Deterministic for a fixed seed.
inline CandidateSet generate_candidates(const Scenario& scenario, const std::string& adv_id, const Trajectory& ego_log,
                                        const AdversaryConfig& cfg, std::uint64_t seed,
                                        const KinematicLimits& limits = {}, std::size_t start_step = 0) {
  const auto* track = scenario.find_agent(adv_id);
  if (track == nullptr) throw InvalidArgument("generate_candidates: unknown agent " + adv_id);
  if (track->at(start_step) == nullptr)
    throw InvalidArgument("generate_candidates: adversary " + adv_id + " absent at episode start");
  if (cfg.num_candidates < 2) throw InvalidArgument("generate_candidates: need K >= 2");

  const auto steps = static_cast<std::size_t>(cfg.horizon);
  const Trajectory ref = detail::reference_track(*track, start_step, steps);
  const Polyline ref_path = detail::path_of(ref);
  const auto lattice = detail::maneuver_lattice();
  const auto k_total = static_cast<std::size_t>(cfg.num_candidates);
  detail::CandidateRng rng(seed);

  CandidateSet set;
  for (std::size_t i = 0; i < k_total; ++i) {
    // Even coverage of the lattice; past its size, wrap around (skipping the log replay)
    // with wider jitter.
    const std::size_t n_lat = lattice.size();
    detail::ManeuverSpec spec;
    double spread = 0.05;
    if (k_total <= n_lat) {
      spec = lattice[i * n_lat / k_total];
    } else if (i < n_lat) {
      spec = lattice[i];
    } else {
      spec = lattice[1 + (i - n_lat) % (n_lat - 1)];
      spread = 0.2;
    }
    const double ja = 1.0 + rng.uniform(-spread, spread);
    const double jb = 1.0 + rng.uniform(-spread, spread);
    if (spec.maneuver != ManeuverTemplate::log_replay) {
      spec.a *= ja;
      spec.b *= jb;
    }
    Candidate c;
    c.maneuver = spec.maneuver;
    c.trajectory = clamp_kinematics(detail::roll_maneuver(spec, ref, ego_log, steps, limits), limits);
    c.deviation = detail::mean_deviation(c.trajectory, ref_path);
    set.candidates.push_back(std::move(c));
  }

  // Softmax over -lambda * deviation, shifted by the minimum for stability.
  double dmin = std::numeric_limits<double>::infinity();
  for (const auto& c : set.candidates) dmin = std::min(dmin, c.deviation);
  double z = 0.0;
  for (auto& c : set.candidates) {
    c.prior = std::exp(-cfg.prior_lambda * (c.deviation - dmin));
    z += c.prior;
  }
  for (auto& c : set.candidates) c.prior = std::max(c.prior / z, std::numeric_limits<double>::min());
  return set;
}

/// Surrounding vehicle, present at `start_step`, whose logged track passes nearest to the
/// recorded ego trajectory. Returns nullopt when no such vehicle exists.
inline std::optional<std::string> choose_adversary(const Scenario& scenario, const Trajectory& ego_traj,
                                                   std::size_t start_step = 0) {
  std::optional<std::string> best;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& a : scenario.agents) {
    if (a.agent_id == scenario.ego_id || a.at(start_step) == nullptr) continue;
    double d = std::numeric_limits<double>::infinity();
    for (const auto& e : ego_traj.states) {
      const auto step = static_cast<std::size_t>(std::lround(e.time / kSimDt));
      if (const auto* s = a.at(step)) d = std::min(d, distance(s->position, e.position));
    }
    if (d < best_d) {
      best_d = d;
      best = a.agent_id;
    }
  }
  return best;
}

}  // namespace advsim
