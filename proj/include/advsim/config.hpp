#pragma once

#include <fstream>
#include <optional>
#include <string>

#include "advsim/adversary.hpp"
#include "advsim/dynamics.hpp"
#include "advsim/error.hpp"
#include "advsim/idm.hpp"
#include "advsim/metrics.hpp"
#include "json.hpp"

namespace advsim {

enum class Transport { stdio, tcp };

struct ProtocolConfig {
  Transport transport = Transport::stdio;
  std::string command;      // stdio: shell command that starts the planner
  std::string host = "127.0.0.1";
  int port = 0;             // tcp
  double timeout_s = 10.0;  // per tick
};

struct PlannerConfig {
  double horizon_s = 3.0;
  IdmParams idm;
};

/// Everything an epoch depends on besides the scenario, planner kind and seed.
struct HarnessConfig {
  AdversaryConfig adversary;
  KinematicLimits limits;
  MetricWeights weights;
  ProtocolConfig protocol;
  PlannerConfig planner;

  void validate() const {
    adversary.validate();
    limits.validate();
    weights.validate();
    if (!(protocol.timeout_s > 0.0)) throw ValidationError("protocol.timeout_s: must be positive");
    if (!(planner.horizon_s >= 0.5)) throw ValidationError("planner.horizon_s: must be at least one tick (0.5 s)");
  }
};

namespace detail {

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const char* section) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw ParseError(std::string("config: unknown key '") + key + "' in [" + section + "]");
  }
}

}  // namespace detail

inline nlohmann::json config_to_json(const HarnessConfig& c) {
  nlohmann::json adv = {{"gamma", c.adversary.gamma},
                        {"w_c", c.adversary.w_c},
                        {"w_j", c.adversary.w_j},
                        {"horizon", c.adversary.horizon},
                        {"near_miss_d0", c.adversary.near_miss_d0},
                        {"num_candidates", c.adversary.num_candidates},
                        {"prior_lambda", c.adversary.prior_lambda}};
  if (c.adversary.agent_id) adv["agent_id"] = *c.adversary.agent_id;
  return {
      {"adversary", adv},
      {"limits",
       {{"a_max", c.limits.a_max}, {"a_min", c.limits.a_min}, {"yaw_rate_max", c.limits.yaw_rate_max}, {"j_max", c.limits.j_max}}},
      {"metrics", {{"weights", {{"ep", c.weights.ep}, {"ttc", c.weights.ttc}, {"c", c.weights.comfort}}}}},
      {"protocol",
       {{"transport", c.protocol.transport == Transport::stdio ? "stdio" : "tcp"},
        {"command", c.protocol.command},
        {"host", c.protocol.host},
        {"port", c.protocol.port},
        {"timeout_s", c.protocol.timeout_s}}},
      {"planner",
       {{"horizon_s", c.planner.horizon_s},
        {"idm",
         {{"desired_speed", c.planner.idm.desired_speed},
          {"time_headway", c.planner.idm.time_headway},
          {"min_gap", c.planner.idm.min_gap},
          {"max_accel", c.planner.idm.max_accel},
          {"comfort_decel", c.planner.idm.comfort_decel},
          {"delta", c.planner.idm.delta}}}}},
  };
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline HarnessConfig config_from_json(const nlohmann::json& j) {
  using detail::read_if;
  using detail::reject_unknown;
  HarnessConfig c;
  try {
    reject_unknown(j, {"adversary", "limits", "metrics", "protocol", "planner"}, "root");
    if (j.contains("adversary")) {
      const auto& a = j.at("adversary");
      reject_unknown(a, {"gamma", "w_c", "w_j", "horizon", "near_miss_d0", "num_candidates", "prior_lambda", "agent_id"},
                     "adversary");
      read_if(a, "gamma", c.adversary.gamma);
      read_if(a, "w_c", c.adversary.w_c);
      read_if(a, "w_j", c.adversary.w_j);
      read_if(a, "horizon", c.adversary.horizon);
      read_if(a, "near_miss_d0", c.adversary.near_miss_d0);
      read_if(a, "num_candidates", c.adversary.num_candidates);
      read_if(a, "prior_lambda", c.adversary.prior_lambda);
      if (a.contains("agent_id") && !a.at("agent_id").is_null()) c.adversary.agent_id = a.at("agent_id").get<std::string>();
    }
    if (j.contains("limits")) {
      const auto& l = j.at("limits");
      reject_unknown(l, {"a_max", "a_min", "yaw_rate_max", "j_max"}, "limits");
      read_if(l, "a_max", c.limits.a_max);
      read_if(l, "a_min", c.limits.a_min);
      read_if(l, "yaw_rate_max", c.limits.yaw_rate_max);
      read_if(l, "j_max", c.limits.j_max);
    }
    if (j.contains("metrics")) {
      const auto& m = j.at("metrics");
      reject_unknown(m, {"weights"}, "metrics");
      if (m.contains("weights")) {
        const auto& w = m.at("weights");
        reject_unknown(w, {"ep", "ttc", "c"}, "metrics.weights");
        read_if(w, "ep", c.weights.ep);
        read_if(w, "ttc", c.weights.ttc);
        read_if(w, "c", c.weights.comfort);
      }
    }
    if (j.contains("protocol")) {
      const auto& p = j.at("protocol");
      reject_unknown(p, {"transport", "command", "host", "port", "timeout_s"}, "protocol");
      if (p.contains("transport")) {
        const auto t = p.at("transport").get<std::string>();
        if (t == "stdio") c.protocol.transport = Transport::stdio;
        else if (t == "tcp") c.protocol.transport = Transport::tcp;
        else throw ParseError("config: protocol.transport must be 'stdio' or 'tcp'");
      }
      read_if(p, "command", c.protocol.command);
      read_if(p, "host", c.protocol.host);
      read_if(p, "port", c.protocol.port);
      read_if(p, "timeout_s", c.protocol.timeout_s);
    }
    if (j.contains("planner")) {
      const auto& p = j.at("planner");
      reject_unknown(p, {"horizon_s", "idm"}, "planner");
      read_if(p, "horizon_s", c.planner.horizon_s);
      if (p.contains("idm")) {
        const auto& i = p.at("idm");
        reject_unknown(i, {"desired_speed", "time_headway", "min_gap", "max_accel", "comfort_decel", "delta"}, "planner.idm");
        read_if(i, "desired_speed", c.planner.idm.desired_speed);
        read_if(i, "time_headway", c.planner.idm.time_headway);
        read_if(i, "min_gap", c.planner.idm.min_gap);
        read_if(i, "max_accel", c.planner.idm.max_accel);
        read_if(i, "comfort_decel", c.planner.idm.comfort_decel);
        read_if(i, "delta", c.planner.idm.delta);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline HarnessConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("malformed config file " + path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace advsim
