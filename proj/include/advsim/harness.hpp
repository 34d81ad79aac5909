#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "advsim/adversary.hpp"
#include "advsim/config.hpp"
#include "advsim/dynamics.hpp"
#include "advsim/error.hpp"
#include "advsim/metrics.hpp"
#include "advsim/planner.hpp"
#include "advsim/protocol.hpp"
#include "advsim/scenario.hpp"

namespace advsim {

inline constexpr double kOffRouteDistance = 10.0;  // m
inline constexpr double kRouteCompleteRc = 0.999;

/// Trajectory executed by one surrounding vehicle in place of its log.
struct AdversaryOverride {
  std::string agent_id;
  Trajectory trajectory;
};

struct EpisodeResult {
  SliceReport report;
  Trajectory ego;  // executed ego states at 10 Hz, starting at step 0
};

namespace detail {

// Surrounding-agent playback for one episode: log replay, optionally with one vehicle executing
// an override and then resuming its log from the nearest logged state.
class TrafficPlayback {
 public:
  TrafficPlayback(const Scenario& scenario, const std::optional<AdversaryOverride>& override_traj,
                  const KinematicLimits& limits)
      : scenario_(scenario) {
    if (!override_traj) return;
    const auto* track = scenario.find_agent(override_traj->agent_id);
    if (track == nullptr || override_traj->agent_id == scenario.ego_id)
      throw InvalidArgument("adversary override: unknown surrounding agent " + override_traj->agent_id);
    if (override_traj->trajectory.size() < 2) throw InvalidArgument("adversary override: need at least 2 states");
    validate_trajectory(override_traj->trajectory);
    Trajectory traj = override_traj->trajectory;
    if (std::abs(traj.dt - scenario.dt_sim) > 1e-9) traj = resample_trajectory(traj, scenario.dt_sim);
    adv_id_ = override_traj->agent_id;
    adv_ = clamp_kinematics(traj, limits);
    const double first = adv_.start_time() / scenario.dt_sim;
    if (std::abs(first - std::round(first)) > 1e-6 || first < 0.0)
      throw InvalidArgument("adversary override: start time is not on a simulation step");
    adv_first_ = static_cast<std::size_t>(std::lround(first));
    adv_last_ = adv_first_ + adv_.size() - 1;

    // Resume point: logged state nearest to where the override ends.
    const Vec2 end = adv_.back().position;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < track->states.size(); ++k) {
      if (!track->states[k]) continue;
      const double d = distance(track->states[k]->position, end);
      if (d < best) {
        best = d;
        resume_step_ = k;
      }
    }
  }

  /// Present surrounding agents at step k.
  std::vector<AgentSnapshot> agents_at(std::size_t k) const {
    std::vector<AgentSnapshot> out;
    for (const auto& a : scenario_.agents) {
      if (a.agent_id == scenario_.ego_id) continue;
      if (a.agent_id == adv_id_) {
        if (auto s = adversary_at(a, k)) out.push_back({a.agent_id, a.extent, *s});
        continue;
      }
      if (const auto* s = a.at(k)) out.push_back({a.agent_id, a.extent, *s});
    }
    return out;
  }

 private:
  std::optional<VehicleState> adversary_at(const AgentTrack& a, std::size_t k) const {
    if (k < adv_first_) {
      if (const auto* s = a.at(k)) return *s;
      return std::nullopt;
    }
    if (k <= adv_last_) return adv_.states[k - adv_first_];
    const std::size_t j = resume_step_ + (k - adv_last_);
    const auto* s = a.at(j);
    if (s == nullptr) return std::nullopt;
    VehicleState out = *s;
    out.time = static_cast<double>(k) * scenario_.dt_sim;
    return out;
  }

  const Scenario& scenario_;
  std::string adv_id_;
  Trajectory adv_;
  std::size_t adv_first_ = 0;
  std::size_t adv_last_ = 0;
  std::size_t resume_step_ = 0;
};

// Turns a raw plan into the 5 states executed this tick: anchor on the current ego, resample to
// simulation rate, clamp, and extend at constant velocity if the plan is too short.
inline std::vector<VehicleState> executable_steps(Trajectory plan, const VehicleState& ego,
                                                  const KinematicLimits& limits) {
  plan.states.front() = ego;
  for (std::size_t i = 1; i < plan.size(); ++i) plan.states[i].time = ego.time + static_cast<double>(i) * plan.dt;
  Trajectory sim = clamp_kinematics(resample_trajectory(plan, kSimDt), limits);
  while (sim.size() < static_cast<std::size_t>(kStepsPerTick) + 1) {
    const auto& last = sim.back();
    sim.states.push_back(project_constant_velocity(last, kSimDt));
  }
  return {sim.states.begin() + 1, sim.states.begin() + 1 + kStepsPerTick};
}

}  // namespace detail

/// One closed-loop episode: 2 Hz planning over 10 Hz simulation, surrounding vehicles replaying
/// their logs (or the override). Planner timeouts end the episode with terminated = timeout;
/// protocol violations propagate after the planner session is closed.
inline EpisodeResult run_episode(const Scenario& scenario, Planner& planner, const HarnessConfig& cfg,
                                 const std::optional<AdversaryOverride>& override_traj = std::nullopt,
                                 std::uint64_t seed = 0) {
  validate_scenario(scenario);
  const AgentTrack& ego_track = scenario.ego();
  const detail::TrafficPlayback traffic(scenario, override_traj, cfg.limits);
  const std::span<const Vec2> route(scenario.ego_route);
  const double route_length = polyline_length(route);

  VehicleState ego = *ego_track.at(0);
  ego.time = 0.0;
  EpisodeResult result;
  result.ego = Trajectory{kSimDt, {ego}};
  std::vector<FrameMetrics> frames;
  Termination terminated = Termination::completed;
  const std::size_t last_step = scenario.duration_steps - 1;

  planner.begin_episode(scenario);
  try {
    std::size_t k = 0;
    bool done = false;
    while (!done && k < last_step) {
      const Observation obs = make_observation(k, ego, ego_track.extent, traffic.agents_at(k), scenario);
      Trajectory plan;
      try {
        plan = planner.plan(obs);
      } catch (const PlannerTimeout&) {
        terminated = Termination::timeout;
        break;
      }
      if (plan.size() < 2) throw ProtocolError("plan: need at least 2 states");
      for (const auto& next : detail::executable_steps(std::move(plan), ego, cfg.limits)) {
        ++k;
        ego = next;
        ego.time = static_cast<double>(k) * kSimDt;
        result.ego.states.push_back(ego);

        const auto agents = traffic.agents_at(k);
        const auto& hist = result.ego.states;
        const std::size_t h = std::min<std::size_t>(hist.size(), 4);
        FrameInput in;
        in.ego = ego;
        in.ego_extent = ego_track.extent;
        in.ego_history = std::span<const VehicleState>(hist.data() + hist.size() - h, h);
        in.agents = agents;
        in.map = &scenario.map;
        in.route = route;
        if (const auto* s = ego_track.at(k - 1)) in.logged_prev = *s;
        if (const auto* s = ego_track.at(k)) in.logged_now = *s;
        in.limits = cfg.limits;
        const FrameMetrics f = frame_metrics(in, cfg.weights);
        frames.push_back(f);

        const auto proj = project_onto_polyline(route, ego.position);
        if (f.nc == 0) {
          terminated = Termination::ego_collision;
        } else if (proj.lateral > kOffRouteDistance) {
          terminated = Termination::off_route;
        } else if (route_length > 0.0 && proj.arc_length / route_length >= kRouteCompleteRc) {
          terminated = Termination::completed;
        } else if (k >= last_step) {
          terminated = Termination::completed;  // log exhausted
        } else {
          continue;
        }
        done = true;
        break;
      }
    }
  } catch (...) {
    planner.end_episode("protocol_error");
    throw;
  }
  planner.end_episode(to_string(terminated));

  const double final_arc = route_arclength(route, ego.position);
  if (frames.empty()) {
    result.report.rc = route_completion(route, final_arc);
    result.report.final_arclength = final_arc;
    result.report.terminated = terminated;
  } else {
    result.report = aggregate_slice(std::move(frames), route, final_arc, terminated);
  }
  result.report.seed = seed;
  return result;
}

// ---------------------------------------------------------------------------
// Epochs

using PlannerFactory = std::function<std::unique_ptr<Planner>()>;

inline std::unique_ptr<Planner> make_planner(PlannerKind kind, const HarnessConfig& cfg) {
  switch (kind) {
    case PlannerKind::log_replay: return std::make_unique<LogReplayPlanner>(cfg.planner.horizon_s);
    case PlannerKind::constant_velocity: return std::make_unique<ConstantVelocityPlanner>(cfg.planner.horizon_s);
    case PlannerKind::idm: return std::make_unique<IdmPlanner>(cfg.planner.idm, cfg.limits, cfg.planner.horizon_s);
    case PlannerKind::external: return std::make_unique<protocol::ExternalPlanner>(cfg.protocol);
  }
  throw InvalidArgument("unknown planner kind");
}

inline PlannerFactory planner_factory(PlannerKind kind, const HarnessConfig& cfg) {
  return [kind, cfg] { return make_planner(kind, cfg); };
}

struct AdversaryInfo {
  bool enabled = true;     // false when the epoch ran without the adversarial episode
  bool available = false;  // false when no surrounding vehicle could be chosen
  bool overridden = false;  // trajectory supplied by the caller, no candidate generation
  std::string agent_id;
  std::size_t selected = 0;
  std::vector<ScoredCandidate> scored;
  std::vector<std::string> maneuvers;
};

struct EpochDeltas {
  double pdms = 0.0;
  double rc = 0.0;
  double ds = 0.0;
};

struct EpochResult {
  std::string scenario_id;
  std::string planner;
  std::uint64_t seed = 0;
  bool deterministic = true;  // false for external planners
  SliceReport episode1;
  SliceReport episode2;
  AdversaryInfo adversary;
  EpochDeltas deltas;
};

struct EpochOptions {
  bool adversarial = true;
  std::optional<AdversaryOverride> override_traj;
};

/// Episode 1 without adversary, then episode 2 with the selected adversarial trajectory.
/// Throws if episode 1 does not run to a regular termination.
inline EpochResult run_epoch(const Scenario& scenario, const PlannerFactory& factory, std::string_view planner_name,
                             const HarnessConfig& cfg, std::uint64_t seed, const EpochOptions& opts = {}) {
  cfg.validate();
  EpochResult r;
  r.scenario_id = scenario.id;
  r.planner = std::string(planner_name);
  r.seed = seed;

  auto p1 = factory();
  r.deterministic = p1->deterministic();
  const EpisodeResult ep1 = run_episode(scenario, *p1, cfg, std::nullopt, seed);
  p1.reset();
  if (ep1.report.terminated == Termination::timeout) throw PlannerTimeout("episode 1 aborted: planner timeout");
  r.episode1 = ep1.report;
  r.adversary.enabled = opts.adversarial;

  std::optional<AdversaryOverride> adv;
  if (opts.adversarial) {
    if (opts.override_traj) {
      adv = opts.override_traj;
      r.adversary.overridden = true;
    } else {
      std::optional<std::string> id = cfg.adversary.agent_id;
      if (id) {
        const auto* track = scenario.find_agent(*id);
        if (track == nullptr || *id == scenario.ego_id) throw InvalidArgument("adversary.agent_id: unknown agent " + *id);
        if (track->at(0) == nullptr) throw InvalidArgument("adversary.agent_id: " + *id + " absent at episode start");
      } else {
        id = choose_adversary(scenario, ep1.ego);
      }
      if (id) {
        const CandidateSet set = generate_candidates(scenario, *id, ep1.ego, cfg.adversary, seed, cfg.limits);
        const auto& extent = scenario.find_agent(*id)->extent;
        Selection sel = select_adversarial(set, ep1.ego, cfg.adversary, extent, scenario.ego().extent, cfg.limits);
        r.adversary.selected = sel.selected;
        r.adversary.scored = std::move(sel.scored);
        for (const auto& c : set.candidates) r.adversary.maneuvers.emplace_back(to_string(c.maneuver));
        adv = AdversaryOverride{*id, set.candidates[r.adversary.selected].trajectory};
      }
    }
    if (adv) {
      r.adversary.available = true;
      r.adversary.agent_id = adv->agent_id;
    }
  }

  if (adv) {
    auto p2 = factory();
    r.episode2 = run_episode(scenario, *p2, cfg, adv, seed).report;
  } else {
    r.episode2 = r.episode1;
  }
  r.deltas = {r.episode1.pdms_avg - r.episode2.pdms_avg, r.episode1.rc - r.episode2.rc, r.episode1.ds - r.episode2.ds};
  return r;
}

// ---------------------------------------------------------------------------
// Batches

struct EpochFailure {
  std::string scenario_id;
  std::string planner;
  std::uint64_t seed = 0;
  std::string error;
};

/// Batch means for one condition, each over per-slice values.
struct ConditionSummary {
  double nc = 0, dac = 0, ttc = 0, comfort = 0, ep = 0, pdms = 0, rc = 0, ds = 0, sc = 0;
  std::size_t slices = 0;
};

struct BatchSummary {
  std::string planner;
  ConditionSummary without_adv;
  ConditionSummary with_adv;
  std::size_t epochs = 0;
  std::size_t failures = 0;
};

struct BatchResult {
  std::vector<EpochResult> epochs;
  std::vector<EpochFailure> failures;
  BatchSummary summary;
};

inline ConditionSummary summarize_condition(const std::vector<const SliceReport*>& slices) {
  ConditionSummary c;
  c.slices = slices.size();
  if (slices.empty()) return c;
  for (const auto* s : slices) {
    const SliceMeans m = frame_means(*s);
    c.nc += m.nc;
    c.dac += m.dac;
    c.ttc += m.ttc;
    c.comfort += m.comfort;
    c.ep += m.ep;
    c.pdms += s->pdms_avg;
    c.rc += s->rc;
    c.ds += s->ds;
    c.sc += s->terminated == Termination::completed ? 1.0 : 0.0;
  }
  const auto n = static_cast<double>(slices.size());
  for (double* v : {&c.nc, &c.dac, &c.ttc, &c.comfort, &c.ep, &c.pdms, &c.rc, &c.ds, &c.sc}) *v /= n;
  return c;
}

inline BatchSummary summarize(const std::vector<EpochResult>& epochs, std::size_t failures = 0) {
  BatchSummary s;
  std::vector<const SliceReport*> e1, e2;
  for (const auto& e : epochs) {
    e1.push_back(&e.episode1);
    e2.push_back(&e.episode2);
    if (s.planner.empty()) s.planner = e.planner;
  }
  s.without_adv = summarize_condition(e1);
  s.with_adv = summarize_condition(e2);
  s.epochs = epochs.size();
  s.failures = failures;
  return s;
}

/// Runs one epoch per (scenario, seed) in order. Failing epochs are recorded and skipped.
/// `on_epoch` sees every result as it is produced.
inline BatchResult run_batch(const std::vector<Scenario>& scenarios, const PlannerFactory& factory,
                             std::string_view planner_name, const HarnessConfig& cfg,
                             const std::vector<std::uint64_t>& seeds, const EpochOptions& opts = {},
                             const std::function<void(const EpochResult&)>& on_epoch = {}) {
  if (scenarios.empty()) throw InvalidArgument("run_batch: empty scenario set");
  if (seeds.empty()) throw InvalidArgument("run_batch: no seeds");
  BatchResult out;
  for (const auto& sc : scenarios) {
    for (const auto seed : seeds) {
      try {
        out.epochs.push_back(run_epoch(sc, factory, planner_name, cfg, seed, opts));
        if (on_epoch) on_epoch(out.epochs.back());
      } catch (const std::exception& e) {
        out.failures.push_back({sc.id, std::string(planner_name), seed, e.what()});
      }
    }
  }
  out.summary = summarize(out.epochs, out.failures.size());
  return out;
}

}  // namespace advsim
