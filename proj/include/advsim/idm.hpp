#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

namespace advsim {

/// Intelligent Driver Model parameters.
struct IdmParams {
  double desired_speed = 12.0;  // m/s
  double time_headway = 1.5;    // s
  double min_gap = 2.0;         // m
  double max_accel = 1.5;       // m/s^2
  double comfort_decel = 2.0;   // m/s^2
  double delta = 4.0;
};

struct IdmLeader {
  double gap = 0.0;    // bumper-to-bumper, m
  double speed = 0.0;  // along the follower's direction of travel, m/s
};

/// Longitudinal IDM acceleration. Unbounded below; callers clamp to vehicle limits.
inline double idm_accel(const IdmParams& p, double speed, std::optional<IdmLeader> leader) {
  const double free_term = 1.0 - std::pow(std::max(speed, 0.0) / p.desired_speed, p.delta);
  if (!leader) return p.max_accel * free_term;
  const double dv = speed - leader->speed;
  const double s_star =
      p.min_gap + std::max(0.0, speed * p.time_headway + speed * dv / (2.0 * std::sqrt(p.max_accel * p.comfort_decel)));
  const double gap = std::max(leader->gap, 0.1);
  return p.max_accel * (free_term - (s_star / gap) * (s_star / gap));
}

}  // namespace advsim
