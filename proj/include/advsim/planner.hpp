#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "advsim/config.hpp"
#include "advsim/dynamics.hpp"
#include "advsim/error.hpp"
#include "advsim/idm.hpp"
#include "advsim/metrics.hpp"
#include "advsim/scenario.hpp"
#include "json.hpp"

namespace advsim {

/// Planner tick rate is 2 Hz: one plan per 5 simulation steps.
inline constexpr int kStepsPerTick = 5;
inline constexpr double kPlannerDt = kStepsPerTick * kSimDt;
inline constexpr double kObservationRadius = 60.0;

/// Self-contained snapshot handed to a planner once per tick.
struct Observation {
  std::size_t step = 0;
  double time = 0.0;
  VehicleState ego;
  Extent ego_extent;
  std::vector<AgentSnapshot> agents;
  std::vector<Polyline> lanes;        // lanes with at least one vertex within 60 m, clipped to that radius
  std::vector<Polygon> drivable;
  Polyline route;                     // remainder, starting at the ego's foot point
  nlohmann::json sensor;              // reserved attachment point; null unless a sensor stage fills it
};

inline Polyline route_remainder(std::span<const Vec2> route, Vec2 p) {
  const auto proj = project_onto_polyline(route, p);
  Polyline out{proj.foot};
  for (std::size_t i = proj.segment + 1; i < route.size(); ++i)
    if (!(route[i] == out.back())) out.push_back(route[i]);
  if (out.size() < 2) out.push_back(proj.foot + unit_from_angle(proj.tangent_heading) * 1.0);
  return out;
}

inline Observation make_observation(std::size_t step, const VehicleState& ego, const Extent& ego_extent,
                                    std::vector<AgentSnapshot> agents, const Scenario& scenario) {
  Observation obs;
  obs.step = step;
  obs.time = static_cast<double>(step) * kSimDt;
  obs.ego = ego;
  obs.ego_extent = ego_extent;
  obs.agents = std::move(agents);
  for (const auto& lane : scenario.map.lanes) {
    Polyline near;
    for (const auto& p : lane)
      if (distance(p, ego.position) <= kObservationRadius) near.push_back(p);
    // Long straight lanes may have no vertex nearby; keep the closest segment.
    if (near.empty() && project_onto_polyline(lane, ego.position).lateral <= kObservationRadius) {
      const auto proj = project_onto_polyline(lane, ego.position);
      near = {lane[proj.segment], lane[proj.segment + 1]};
    }
    if (near.size() == 1) near.push_back(near.front());
    if (!near.empty()) obs.lanes.push_back(std::move(near));
  }
  obs.drivable = scenario.map.drivable_area;
  obs.route = route_remainder(scenario.ego_route, ego.position);
  return obs;
}

// ---------------------------------------------------------------------------
// Wire encoding shared with external planners

inline nlohmann::json state_to_json(const VehicleState& s, const Extent& e) {
  return {{"x", s.position.x}, {"y", s.position.y}, {"heading", s.heading}, {"speed", s.speed},
          {"length", e.length}, {"width", e.width}};
}

inline nlohmann::json observation_to_json(const Observation& obs) {
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& a : obs.agents) {
    auto ja = state_to_json(a.state, a.extent);
    ja["id"] = a.id;
    agents.push_back(std::move(ja));
  }
  nlohmann::json lanes = nlohmann::json::array();
  for (const auto& l : obs.lanes) lanes.push_back(points_to_json(l));
  nlohmann::json drivable = nlohmann::json::array();
  for (const auto& p : obs.drivable) drivable.push_back(points_to_json(p));
  return {{"type", "obs"},
          {"step", obs.step},
          {"t", obs.time},
          {"ego", state_to_json(obs.ego, obs.ego_extent)},
          {"agents", std::move(agents)},
          {"lanes", std::move(lanes)},
          {"drivable", std::move(drivable)},
          {"route", points_to_json(obs.route)},
          {"sensor", obs.sensor}};
}

/// Parses and validates a {"type":"plan"} message: at least 2 finite waypoints starting within
/// 0.5 m of the current ego position. Throws ProtocolError.
inline Trajectory plan_from_json(const nlohmann::json& msg, const Observation& obs) {
  if (!msg.is_object() || !msg.contains("type")) throw ProtocolError("plan: missing 'type'");
  const auto type = msg.at("type");
  if (type == "error") throw ProtocolError("planner reported error: " + msg.value("message", std::string("(no message)")));
  if (type != "plan") throw ProtocolError("plan: unexpected message type " + type.dump());
  if (msg.contains("step") && (!msg.at("step").is_number_integer() || msg.at("step").get<long long>() != static_cast<long long>(obs.step)))
    throw ProtocolError("plan: step does not match the observation");
  const double dt = msg.contains("dt") && msg.at("dt").is_number() ? msg.at("dt").get<double>() : kPlannerDt;
  if (!std::isfinite(dt) || !(dt > 0.0)) throw ProtocolError("plan: dt must be a positive number");
  if (!msg.contains("waypoints") || !msg.at("waypoints").is_array()) throw ProtocolError("plan: missing waypoints");
  const auto& wps = msg.at("waypoints");
  if (wps.size() < 2) throw ProtocolError("plan: need at least 2 waypoints");
  Trajectory traj{dt, {}};
  for (std::size_t i = 0; i < wps.size(); ++i) {
    const auto& w = wps[i];
    if (!w.is_array() || w.size() != 4) throw ProtocolError("plan: waypoint must be [x, y, heading, speed]");
    for (const auto& v : w)
      if (!v.is_number()) throw ProtocolError("plan: non-numeric waypoint value");
    VehicleState s{{w[0].get<double>(), w[1].get<double>()}, w[2].get<double>(), w[3].get<double>(),
                   obs.time + static_cast<double>(i) * dt};
    if (!is_finite(s)) throw ProtocolError("plan: non-finite waypoint at index " + std::to_string(i));
    if (s.speed < 0.0) throw ProtocolError("plan: negative speed at index " + std::to_string(i));
    s.heading = normalize_angle(s.heading);
    traj.states.push_back(s);
  }
  if (distance(traj.front().position, obs.ego.position) > 0.5)
    throw ProtocolError("plan: first waypoint is more than 0.5 m from the ego");
  return traj;
}

inline nlohmann::json plan_to_json(const Trajectory& plan, std::size_t step) {
  nlohmann::json wps = nlohmann::json::array();
  for (const auto& s : plan.states) wps.push_back({s.position.x, s.position.y, s.heading, s.speed});
  return {{"type", "plan"}, {"step", step}, {"dt", plan.dt}, {"waypoints", std::move(wps)}};
}

// ---------------------------------------------------------------------------
// Planners

enum class PlannerKind { log_replay, constant_velocity, idm, external };

inline PlannerKind parse_planner_kind(std::string_view s) {
  if (s == "log_replay") return PlannerKind::log_replay;
  if (s == "constant_velocity") return PlannerKind::constant_velocity;
  if (s == "idm") return PlannerKind::idm;
  if (s == "external") return PlannerKind::external;
  throw InvalidArgument("unknown planner kind: " + std::string(s));
}

inline std::string_view to_string(PlannerKind k) {
  switch (k) {
    case PlannerKind::log_replay: return "log_replay";
    case PlannerKind::constant_velocity: return "constant_velocity";
    case PlannerKind::idm: return "idm";
    case PlannerKind::external: return "external";
  }
  return "?";
}

class Planner {
 public:
  virtual ~Planner() = default;
  virtual void begin_episode(const Scenario& /*scenario*/) {}
  virtual Trajectory plan(const Observation& obs) = 0;
  virtual void end_episode(std::string_view /*reason*/) {}
  [[nodiscard]] virtual bool deterministic() const { return true; }
};

/// Replays the logged ego at simulation rate.
class LogReplayPlanner final : public Planner {
 public:
  explicit LogReplayPlanner(double horizon_s = 3.0) : horizon_s_(horizon_s) {}
  void begin_episode(const Scenario& scenario) override { log_ = &scenario.ego(); }

  Trajectory plan(const Observation& obs) override {
    if (log_ == nullptr) throw InvalidArgument("log_replay planner: begin_episode not called");
    const auto n = static_cast<std::size_t>(std::lround(horizon_s_ / kSimDt));
    Trajectory plan{kSimDt, {obs.ego}};
    VehicleState last = obs.ego;
    for (std::size_t i = 1; i <= n; ++i) {
      if (const auto* s = log_->at(obs.step + i)) {
        last = *s;
      } else {
        last.position += unit_from_angle(last.heading) * (last.speed * kSimDt);
      }
      last.time = obs.time + static_cast<double>(i) * kSimDt;
      plan.states.push_back(last);
    }
    return plan;
  }

 private:
  double horizon_s_;
  const AgentTrack* log_ = nullptr;
};

/// Holds the current heading and speed.
class ConstantVelocityPlanner final : public Planner {
 public:
  explicit ConstantVelocityPlanner(double horizon_s = 3.0) : horizon_s_(horizon_s) {}
  Trajectory plan(const Observation& obs) override {
    const auto n = static_cast<std::size_t>(std::lround(horizon_s_ / kPlannerDt));
    Trajectory plan{kPlannerDt, {obs.ego}};
    for (std::size_t i = 1; i <= n; ++i) plan.states.push_back(project_constant_velocity(obs.ego, kPlannerDt * static_cast<double>(i)));
    return plan;
  }

 private:
  double horizon_s_;
};

/// Follows the route centreline with IDM speed control against the nearest vehicle whose centre
/// lies inside the ego's lane corridor ahead. No lateral evasion.
class IdmPlanner final : public Planner {
 public:
  IdmPlanner(IdmParams params, KinematicLimits limits, double horizon_s = 3.0)
      : params_(params), limits_(limits), horizon_s_(horizon_s) {}

  Trajectory plan(const Observation& obs) override {
    Polyline path = obs.route;
    const auto tail = sample_polyline(path, polyline_length(path));
    path.push_back(tail.point + unit_from_angle(tail.heading) * 200.0);

    const double s_ego = project_onto_polyline(path, obs.ego.position).arc_length;
    std::optional<IdmLeader> leader;
    double leader_arc = 0.0;
    double leader_length = 0.0;
    for (const auto& a : obs.agents) {
      const auto proj = project_onto_polyline(path, a.state.position);
      const double corridor = 0.5 * (obs.ego_extent.width + a.extent.width) + 0.5;
      if (proj.lateral > corridor || proj.arc_length <= s_ego) continue;
      const double gap = proj.arc_length - s_ego - 0.5 * (obs.ego_extent.length + a.extent.length);
      const double along = a.state.speed * std::cos(angle_diff(a.state.heading, proj.tangent_heading));
      if (!leader || gap < leader->gap) {
        leader = IdmLeader{gap, std::max(0.0, along)};
        leader_arc = proj.arc_length;
        leader_length = a.extent.length;
      }
    }

    // Longitudinal IDM rollout with the leader at constant speed; lateral pure pursuit onto
    // the route, integrated the same way the simulator executes plans.
    const auto n = static_cast<std::size_t>(std::lround(horizon_s_ / kSimDt));
    Trajectory plan{kSimDt, {obs.ego}};
    double v = obs.ego.speed;
    for (std::size_t i = 1; i <= n; ++i) {
      const auto& prev = plan.states.back();
      const double s = project_onto_polyline(path, prev.position).arc_length;
      std::optional<IdmLeader> lead_now;
      if (leader) {
        const double lead_s = leader_arc + leader->speed * kSimDt * static_cast<double>(i - 1);
        lead_now = IdmLeader{lead_s - s - 0.5 * (obs.ego_extent.length + leader_length), leader->speed};
      }
      const double a = std::clamp(idm_accel(params_, v, lead_now), limits_.a_min, limits_.a_max);
      v = std::max(0.0, v + a * kSimDt);
      const Vec2 target = sample_polyline(path, s + std::max(5.0, 0.8 * v)).point;
      const double want = std::atan2(target.y - prev.position.y, target.x - prev.position.x);
      const double max_turn = limits_.yaw_rate_max * kSimDt;
      VehicleState next;
      next.speed = v;
      next.heading = normalize_angle(prev.heading + std::clamp(angle_diff(want, prev.heading), -max_turn, max_turn));
      next.position = integrate_step(prev.position, prev.heading, next.heading, v, kSimDt);
      next.time = obs.time + static_cast<double>(i) * kSimDt;
      plan.states.push_back(next);
    }
    return plan;
  }

 private:
  IdmParams params_;
  KinematicLimits limits_;
  double horizon_s_;
};

}  // namespace advsim
