#pragma once

#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "advsim/dynamics.hpp"
#include "advsim/error.hpp"
#include "advsim/geometry.hpp"
#include "json.hpp"

namespace advsim {

struct AgentTrack {
  std::string agent_id;
  Extent extent;
  // One entry per simulation step; nullopt while the agent is not spawned.
  std::vector<std::optional<VehicleState>> states;

  [[nodiscard]] const VehicleState* at(std::size_t step) const {
    if (step >= states.size() || !states[step]) return nullptr;
    return &*states[step];
  }

  friend bool operator==(const AgentTrack&, const AgentTrack&) = default;
};

struct MapData {
  std::vector<Polyline> lanes;
  // Union of simple polygons.
  std::vector<Polygon> drivable_area;

  friend bool operator==(const MapData&, const MapData&) = default;
};

struct Scenario {
  std::string id;
  double dt_sim = kSimDt;
  std::vector<AgentTrack> agents;
  MapData map;
  std::string ego_id;
  Polyline ego_route;
  std::size_t duration_steps = 0;

  [[nodiscard]] const AgentTrack* find_agent(std::string_view agent_id) const {
    for (const auto& a : agents)
      if (a.agent_id == agent_id) return &a;
    return nullptr;
  }
  [[nodiscard]] const AgentTrack& ego() const {
    const auto* e = find_agent(ego_id);
    if (e == nullptr) throw ValidationError("ego_id: no agent named " + ego_id);
    return *e;
  }

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

/// Boundary points count as drivable.
inline bool point_in_drivable(const MapData& map, Vec2 p) {
  for (const auto& poly : map.drivable_area)
    if (point_in_polygon(poly, p)) return true;
  return false;
}

/// Logged track as a trajectory over the contiguous present run starting at `from_step`.
inline Trajectory logged_trajectory(const AgentTrack& track, std::size_t from_step = 0, double dt = kSimDt) {
  Trajectory traj{dt, {}};
  for (std::size_t k = from_step; k < track.states.size() && track.states[k]; ++k) traj.states.push_back(*track.states[k]);
  return traj;
}

/// Throws ValidationError naming the first violated invariant.
inline void validate_scenario(const Scenario& s) {
  if (s.id.empty()) throw ValidationError("id: must be non-empty");
  if (std::abs(s.dt_sim - kSimDt) > 1e-12) throw ValidationError("dt_sim: must be 0.1");
  if (s.agents.empty()) throw ValidationError("agents: at least the ego is required");
  if (s.duration_steps < 2) throw ValidationError("duration_steps: need at least 2 steps");

  std::size_t ego_matches = 0;
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    const auto& a = s.agents[i];
    const std::string where = "agent '" + a.agent_id + "'";
    if (a.agent_id.empty()) throw ValidationError("agent_id: must be non-empty");
    for (std::size_t j = 0; j < i; ++j)
      if (s.agents[j].agent_id == a.agent_id) throw ValidationError("agent_id: duplicate '" + a.agent_id + "'");
    if (a.agent_id == s.ego_id) ++ego_matches;
    if (!(a.extent.length > 0.0) || !(a.extent.width > 0.0) || !std::isfinite(a.extent.length) ||
        !std::isfinite(a.extent.width))
      throw ValidationError("extent: " + where + " needs positive length and width");
    if (a.states.size() != s.duration_steps)
      throw ValidationError("states: " + where + " has " + std::to_string(a.states.size()) + " states, expected " +
                            std::to_string(s.duration_steps));
    const VehicleState* prev = nullptr;
    for (std::size_t k = 0; k < a.states.size(); ++k) {
      if (!a.states[k]) {
        prev = nullptr;
        continue;
      }
      const auto& st = *a.states[k];
      if (!is_finite(st)) throw ValidationError("states: " + where + " non-finite at step " + std::to_string(k));
      if (st.speed < 0.0) throw ValidationError("speed: " + where + " negative at step " + std::to_string(k));
      if (prev != nullptr && std::abs(angle_diff(st.heading, prev->heading)) > std::numbers::pi / 2.0)
        throw ValidationError("heading: " + where + " jumps more than pi/2 at step " + std::to_string(k));
      prev = &st;
    }
  }
  if (ego_matches != 1) throw ValidationError("ego_id: must name exactly one agent");
  if (!s.ego().states.front()) throw ValidationError("ego_id: ego must be present at step 0");

  if (s.ego_route.size() < 2) throw ValidationError("ego_route: needs at least 2 waypoints");
  if (!(polyline_length(s.ego_route) > 0.0)) throw ValidationError("ego_route: zero arc length");

  for (const auto& lane : s.map.lanes)
    if (lane.size() < 2) throw ValidationError("lanes: every lane needs at least 2 points");
  if (s.map.drivable_area.empty()) throw ValidationError("drivable_area: at least one polygon required");
  for (const auto& poly : s.map.drivable_area)
    if (!is_simple_polygon(poly)) throw ValidationError("drivable_area: polygon is not simple");
}

// ---------------------------------------------------------------------------
// JSON schema

inline nlohmann::json points_to_json(const std::vector<Vec2>& pts) {
  auto arr = nlohmann::json::array();
  for (const auto& p : pts) arr.push_back({p.x, p.y});
  return arr;
}

inline std::vector<Vec2> points_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array()) throw ParseError(std::string(what) + ": expected an array of [x, y]");
  std::vector<Vec2> out;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      throw ParseError(std::string(what) + ": expected [x, y]");
    out.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return out;
}

inline nlohmann::json scenario_to_json(const Scenario& s) {
  nlohmann::json j;
  j["id"] = s.id;
  j["dt_sim"] = s.dt_sim;
  auto agents = nlohmann::json::array();
  for (const auto& a : s.agents) {
    nlohmann::json ja;
    ja["agent_id"] = a.agent_id;
    ja["extent"] = {a.extent.length, a.extent.width};
    auto states = nlohmann::json::array();
    for (const auto& st : a.states) {
      if (st) states.push_back({st->position.x, st->position.y, st->heading, st->speed});
      else states.push_back(nullptr);
    }
    ja["states"] = std::move(states);
    agents.push_back(std::move(ja));
  }
  j["agents"] = std::move(agents);
  auto lanes = nlohmann::json::array();
  for (const auto& l : s.map.lanes) lanes.push_back(points_to_json(l));
  auto drivable = nlohmann::json::array();
  for (const auto& p : s.map.drivable_area) drivable.push_back(points_to_json(p));
  j["map"] = {{"lanes", std::move(lanes)}, {"drivable_area", std::move(drivable)}};
  j["ego_id"] = s.ego_id;
  j["ego_route"] = points_to_json(s.ego_route);
  return j;
}

/// Parses and validates. Throws ParseError for schema violations, ValidationError for invariants.
inline Scenario scenario_from_json(const nlohmann::json& j) {
  auto require = [&](const nlohmann::json& obj, const char* key) -> const nlohmann::json& {
    if (!obj.is_object() || !obj.contains(key)) throw ParseError(std::string("missing key '") + key + "'");
    return obj.at(key);
  };
  Scenario s;
  try {
    s.id = require(j, "id").get<std::string>();
    s.dt_sim = require(j, "dt_sim").get<double>();
    s.ego_id = require(j, "ego_id").get<std::string>();
    s.ego_route = points_from_json(require(j, "ego_route"), "ego_route");
    const auto& jm = require(j, "map");
    for (const auto& l : require(jm, "lanes")) s.map.lanes.push_back(points_from_json(l, "lanes"));
    for (const auto& p : require(jm, "drivable_area")) s.map.drivable_area.push_back(points_from_json(p, "drivable_area"));
    const auto& ja = require(j, "agents");
    if (!ja.is_array()) throw ParseError("agents: expected an array");
    for (const auto& a : ja) {
      AgentTrack t;
      t.agent_id = require(a, "agent_id").get<std::string>();
      const auto& ext = require(a, "extent");
      if (!ext.is_array() || ext.size() != 2) throw ParseError("extent: expected [length, width]");
      t.extent = {ext[0].get<double>(), ext[1].get<double>()};
      const auto& js = require(a, "states");
      if (!js.is_array()) throw ParseError("states: expected an array");
      for (std::size_t k = 0; k < js.size(); ++k) {
        const auto& st = js[k];
        if (st.is_null()) {
          t.states.emplace_back(std::nullopt);
          continue;
        }
        if (!st.is_array() || st.size() != 4) throw ParseError("states: expected null or [x, y, heading, speed]");
        VehicleState v;
        v.position = {st[0].get<double>(), st[1].get<double>()};
        v.heading = st[2].get<double>();
        v.speed = st[3].get<double>();
        v.time = static_cast<double>(k) * s.dt_sim;
        t.states.emplace_back(v);
      }
      s.agents.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scenario schema: ") + e.what());
  }
  s.duration_steps = s.agents.empty() ? 0 : s.agents.front().states.size();
  validate_scenario(s);
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("malformed scenario file " + path + ": " + e.what());
  }
  return scenario_from_json(j);
}

inline void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write scenario file: " + path);
  out << scenario_to_json(s).dump(1) << '\n';
}

}  // namespace advsim
