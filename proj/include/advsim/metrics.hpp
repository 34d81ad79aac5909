#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advsim/dynamics.hpp"
#include "advsim/error.hpp"
#include "advsim/scenario.hpp"

namespace advsim {

struct MetricWeights {
  double ep = 5.0;
  double ttc = 5.0;
  double comfort = 2.0;

  void validate() const {
    if (ep < 0.0 || ttc < 0.0 || comfort < 0.0 || !(ep + ttc + comfort > 0.0))
      throw ValidationError("metrics.weights: must be non-negative with a positive sum");
  }
};

struct FrameMetrics {
  int nc = 1;
  int dac = 1;
  int ttc = 1;
  int comfort = 1;
  double ep = 1.0;
  double pdms = 1.0;

  friend bool operator==(const FrameMetrics&, const FrameMetrics&) = default;
};

/// Penalty product of NC and DAC times the weighted mean of EP, TTC and comfort.
inline double pdms_score(int nc, int dac, double ep, int ttc, int comfort, const MetricWeights& w) {
  const double weighted = (w.ep * ep + w.ttc * ttc + w.comfort * comfort) / (w.ep + w.ttc + w.comfort);
  return static_cast<double>(nc * dac) * weighted;
}

inline void recompute_pdms(FrameMetrics& f, const MetricWeights& w) { f.pdms = pdms_score(f.nc, f.dac, f.ep, f.ttc, f.comfort, w); }

struct AgentSnapshot {
  std::string id;
  Extent extent;
  VehicleState state;
};

/// Everything a single-frame evaluation looks at.
struct FrameInput {
  VehicleState ego;
  Extent ego_extent;
  // Executed ego states ending at the current one, oldest first (up to 4 are used).
  std::span<const VehicleState> ego_history;
  std::span<const AgentSnapshot> agents;  // present surrounding agents only
  const MapData* map = nullptr;
  std::span<const Vec2> route;
  // Logged ego at the previous and current step; nullopt when the log has no sample there.
  std::optional<VehicleState> logged_prev;
  std::optional<VehicleState> logged_now;
  KinematicLimits limits;
  double ttc_horizon = 3.0;  // s
  double ttc_step = 0.1;     // s
};

inline bool ego_collides(const VehicleState& ego, const Extent& extent, std::span<const AgentSnapshot> agents) {
  const Quad fe = footprint(ego, extent);
  return std::any_of(agents.begin(), agents.end(),
                     [&](const AgentSnapshot& a) { return obb_overlap(fe, footprint(a.state, a.extent)); });
}

inline bool footprint_in_drivable(const MapData& map, const VehicleState& s, const Extent& e) {
  const Quad corners = footprint(s, e);
  return std::all_of(corners.begin(), corners.end(), [&](Vec2 c) { return point_in_drivable(map, c); });
}

inline VehicleState project_constant_velocity(const VehicleState& s, double tau) {
  VehicleState out = s;
  out.position += unit_from_angle(s.heading) * (s.speed * tau);
  out.time += tau;
  return out;
}

/// True if constant-velocity projections of ego and agents stay apart over the horizon.
inline bool ttc_clear(const VehicleState& ego, const Extent& extent, std::span<const AgentSnapshot> agents,
                      double horizon, double step) {
  const int n = static_cast<int>(std::lround(horizon / step));
  for (int i = 1; i <= n; ++i) {
    const double tau = step * i;
    const Quad fe = footprint(project_constant_velocity(ego, tau), extent);
    for (const auto& a : agents)
      if (obb_overlap(fe, footprint(project_constant_velocity(a.state, tau), a.extent))) return false;
  }
  return true;
}

/// Acceleration and jerk of the latest state, within limits.
inline bool comfortable(std::span<const VehicleState> history, double dt, const KinematicLimits& limits) {
  const std::size_t n = history.size();
  if (n < 2) return true;
  constexpr double slack = 1e-9;
  const double a_now = (history[n - 1].speed - history[n - 2].speed) / dt;
  if (a_now > limits.a_max + slack || a_now < limits.a_min - slack) return false;
  if (n < 3) return true;
  const double a_prev = (history[n - 2].speed - history[n - 3].speed) / dt;
  return std::abs(a_now - a_prev) / dt <= limits.j_max + slack;
}

inline double route_arclength(std::span<const Vec2> route, Vec2 p) { return project_onto_polyline(route, p).arc_length; }

inline FrameMetrics frame_metrics(const FrameInput& in, const MetricWeights& weights) {
  if (in.map == nullptr) throw InvalidArgument("frame_metrics: map is required");
  FrameMetrics f;
  f.nc = ego_collides(in.ego, in.ego_extent, in.agents) ? 0 : 1;
  f.dac = footprint_in_drivable(*in.map, in.ego, in.ego_extent) ? 1 : 0;
  f.ttc = ttc_clear(in.ego, in.ego_extent, in.agents, in.ttc_horizon, in.ttc_step) ? 1 : 0;
  const double dt = in.ego_history.size() >= 2
                        ? in.ego_history.back().time - in.ego_history[in.ego_history.size() - 2].time
                        : kSimDt;
  f.comfort = comfortable(in.ego_history, dt > 0.0 ? dt : kSimDt, in.limits) ? 1 : 0;

  f.ep = 1.0;
  if (in.logged_prev && in.logged_now && in.ego_history.size() >= 2) {
    const double logged = route_arclength(in.route, in.logged_now->position) - route_arclength(in.route, in.logged_prev->position);
    if (logged >= 0.01) {
      const auto& prev = in.ego_history[in.ego_history.size() - 2];
      const double achieved = route_arclength(in.route, in.ego.position) - route_arclength(in.route, prev.position);
      f.ep = std::clamp(achieved / logged, 0.0, 1.0);
    }
  }
  recompute_pdms(f, weights);
  return f;
}

enum class Termination { completed, ego_collision, off_route, timeout };

inline std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::completed: return "completed";
    case Termination::ego_collision: return "ego_collision";
    case Termination::off_route: return "off_route";
    case Termination::timeout: return "timeout";
  }
  return "?";
}

inline Termination parse_termination(std::string_view s) {
  if (s == "completed") return Termination::completed;
  if (s == "ego_collision") return Termination::ego_collision;
  if (s == "off_route") return Termination::off_route;
  if (s == "timeout") return Termination::timeout;
  throw ParseError("unknown termination reason: " + std::string(s));
}

struct SliceReport {
  std::vector<FrameMetrics> frames;
  double pdms_avg = 0.0;
  double rc = 0.0;
  double ds = 0.0;
  Termination terminated = Termination::completed;
  std::uint64_t seed = 0;
  double final_arclength = 0.0;  // m along the route
};

inline double route_completion(std::span<const Vec2> route, double final_arclength) {
  const double total = polyline_length(route);
  return total > 0.0 ? std::clamp(final_arclength / total, 0.0, 1.0) : 0.0;
}

inline SliceReport aggregate_slice(std::vector<FrameMetrics> frames, std::span<const Vec2> route, double final_arclength,
                                   Termination terminated) {
  if (frames.empty()) throw InvalidArgument("aggregate_slice: no frames");
  SliceReport r;
  double sum = 0.0;
  for (const auto& f : frames) sum += f.pdms;
  r.pdms_avg = sum / static_cast<double>(frames.size());
  r.rc = route_completion(route, final_arclength);
  r.ds = r.pdms_avg * r.rc;
  r.terminated = terminated;
  r.final_arclength = final_arclength;
  r.frames = std::move(frames);
  return r;
}

/// Fraction of slices that ended without an ego collision, off-route exit or timeout.
inline double slice_completion(std::span<const SliceReport> reports) {
  if (reports.empty()) throw InvalidArgument("slice_completion: no reports");
  const auto done = std::count_if(reports.begin(), reports.end(),
                                  [](const SliceReport& r) { return r.terminated == Termination::completed; });
  return static_cast<double>(done) / static_cast<double>(reports.size());
}

/// Per-slice means of the frame metrics.
struct SliceMeans {
  double nc = 0, dac = 0, ttc = 0, comfort = 0, ep = 0, pdms = 0;
};

inline SliceMeans frame_means(const SliceReport& r) {
  SliceMeans m;
  if (r.frames.empty()) return m;
  for (const auto& f : r.frames) {
    m.nc += f.nc;
    m.dac += f.dac;
    m.ttc += f.ttc;
    m.comfort += f.comfort;
    m.ep += f.ep;
    m.pdms += f.pdms;
  }
  const auto n = static_cast<double>(r.frames.size());
  m.nc /= n;
  m.dac /= n;
  m.ttc /= n;
  m.comfort /= n;
  m.ep /= n;
  m.pdms /= n;
  return m;
}

}  // namespace advsim
