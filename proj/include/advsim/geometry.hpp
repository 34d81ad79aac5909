#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace advsim {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2& operator+=(Vec2 o) { x += o.x; y += o.y; return *this; }
  constexpr Vec2& operator-=(Vec2 o) { x -= o.x; y -= o.y; return *this; }
  constexpr Vec2& operator*=(double s) { x *= s; y *= s; return *this; }
  friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {a.x * s, a.y * s}; }
  friend constexpr bool operator==(Vec2, Vec2) = default;
};

using Polyline = std::vector<Vec2>;
using Polygon = std::vector<Vec2>;

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }
inline Vec2 unit_from_angle(double angle) { return {std::cos(angle), std::sin(angle)}; }
constexpr Vec2 perp(Vec2 a) { return {-a.y, a.x}; }

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

/// Signed shortest rotation taking `from` onto `to`, in (-pi, pi].
inline double angle_diff(double to, double from) { return normalize_angle(to - from); }

/// Interpolates on the circle along the shortest arc.
inline double lerp_angle(double a, double b, double s) {
  return normalize_angle(a + s * angle_diff(b, a));
}

inline Vec2 lerp(Vec2 a, Vec2 b, double s) { return a + (b - a) * s; }

inline double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 == 0.0) return distance(p, a);
  const double s = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return distance(p, a + ab * s);
}

/// Closed-segment intersection, including collinear overlap and endpoint contact.
inline bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
  auto orient = [](Vec2 a, Vec2 b, Vec2 c) {
    const double v = cross(b - a, c - a);
    return (v > 0.0) - (v < 0.0);
  };
  auto on_segment = [](Vec2 a, Vec2 b, Vec2 p) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
           std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
  };
  const int o1 = orient(p1, p2, q1);
  const int o2 = orient(p1, p2, q2);
  const int o3 = orient(q1, q2, p1);
  const int o4 = orient(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(p1, p2, q1)) return true;
  if (o2 == 0 && on_segment(p1, p2, q2)) return true;
  if (o3 == 0 && on_segment(q1, q2, p1)) return true;
  if (o4 == 0 && on_segment(q1, q2, p2)) return true;
  return false;
}

inline bool polylines_intersect(std::span<const Vec2> a, std::span<const Vec2> b) {
  for (std::size_t i = 0; i + 1 < a.size(); ++i)
    for (std::size_t j = 0; j + 1 < b.size(); ++j)
      if (segments_intersect(a[i], a[i + 1], b[j], b[j + 1])) return true;
  return false;
}

/// True when no two non-adjacent edges of the closed ring touch.
inline bool is_simple_polygon(std::span<const Vec2> ring) {
  const std::size_t n = ring.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a1 = ring[i];
    const Vec2 a2 = ring[(i + 1) % n];
    if (a1 == a2) return false;
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (segments_intersect(a1, a2, ring[j], ring[(j + 1) % n])) return false;
    }
  }
  return true;
}

/// Point-in-polygon by winding number; points on an edge count as inside.
inline bool point_in_polygon(std::span<const Vec2> ring, Vec2 p, double boundary_tol = 1e-9) {
  const std::size_t n = ring.size();
  if (n < 3) return false;
  int winding = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = ring[i];
    const Vec2 b = ring[(i + 1) % n];
    if (point_segment_distance(p, a, b) <= boundary_tol) return true;
    const double side = cross(b - a, p - a);
    if (a.y <= p.y) {
      if (b.y > p.y && side > 0.0) ++winding;
    } else if (b.y <= p.y && side < 0.0) {
      --winding;
    }
  }
  return winding != 0;
}

inline Vec2 polygon_centroid(std::span<const Vec2> ring) {
  double area2 = 0.0;
  Vec2 c{};
  for (std::size_t i = 0; i < ring.size(); ++i) {
    const Vec2 a = ring[i];
    const Vec2 b = ring[(i + 1) % ring.size()];
    const double w = cross(a, b);
    area2 += w;
    c += (a + b) * w;
  }
  return c * (1.0 / (3.0 * area2));
}

inline double polyline_length(std::span<const Vec2> line) {
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < line.size(); ++i) s += distance(line[i], line[i + 1]);
  return s;
}

/// Closest-point projection of a point onto a polyline.
struct PolylineProjection {
  double arc_length = 0.0;  // along the polyline to the foot point
  double lateral = 0.0;     // unsigned distance to the foot point
  double signed_lateral = 0.0;  // positive to the left of travel direction
  Vec2 foot{};
  double tangent_heading = 0.0;
  std::size_t segment = 0;
};

inline PolylineProjection project_onto_polyline(std::span<const Vec2> line, Vec2 p) {
  PolylineProjection best;
  best.lateral = std::numeric_limits<double>::infinity();
  double s0 = 0.0;
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    const Vec2 a = line[i];
    const Vec2 ab = line[i + 1] - a;
    const double len = norm(ab);
    if (len == 0.0) continue;
    const double u = std::clamp(dot(p - a, ab) / (len * len), 0.0, 1.0);
    const Vec2 foot = a + ab * u;
    const double d = distance(p, foot);
    if (d < best.lateral) {
      best.lateral = d;
      best.arc_length = s0 + u * len;
      best.foot = foot;
      best.segment = i;
      best.tangent_heading = std::atan2(ab.y, ab.x);
      best.signed_lateral = cross(ab, p - a) >= 0.0 ? d : -d;
    }
    s0 += len;
  }
  return best;
}

/// Point and tangent heading at arc length `s`; extrapolates linearly past either end.
struct PolylineSample {
  Vec2 point{};
  double heading = 0.0;
};

inline PolylineSample sample_polyline(std::span<const Vec2> line, double s) {
  // Degenerate segments are skipped; the ends extrapolate along the first/last tangent.
  std::size_t first = line.size(), last = line.size();
  for (std::size_t i = 0; i + 1 < line.size(); ++i) {
    if (line[i + 1] == line[i]) continue;
    if (first == line.size()) first = i;
    last = i;
  }
  if (first == line.size()) return {line.empty() ? Vec2{} : line.front(), 0.0};
  if (s <= 0.0) {
    const Vec2 ab = line[first + 1] - line[first];
    const double h = std::atan2(ab.y, ab.x);
    return {line[first] + unit_from_angle(h) * s, h};
  }
  double s0 = 0.0;
  for (std::size_t i = first; i <= last; ++i) {
    const Vec2 ab = line[i + 1] - line[i];
    const double len = norm(ab);
    if (len == 0.0) continue;
    const double h = std::atan2(ab.y, ab.x);
    if (s <= s0 + len || i == last) return {line[i] + unit_from_angle(h) * (s - s0), h};
    s0 += len;
  }
  return {line.back(), 0.0};
}

/// Vertices of a convex polygon, counterclockwise.
using Quad = std::array<Vec2, 4>;

/// Separating-axis test over the face normals of both convex quads; touching counts as overlap.
inline bool convex_quads_overlap(const Quad& a, const Quad& b) {
  auto separated_along = [](const Quad& p, const Quad& q, Vec2 axis) {
    double pmin = std::numeric_limits<double>::infinity(), pmax = -pmin;
    double qmin = pmin, qmax = -pmin;
    for (const Vec2 v : p) {
      const double d = dot(v, axis);
      pmin = std::min(pmin, d);
      pmax = std::max(pmax, d);
    }
    for (const Vec2 v : q) {
      const double d = dot(v, axis);
      qmin = std::min(qmin, d);
      qmax = std::max(qmax, d);
    }
    return pmax < qmin || qmax < pmin;
  };
  for (const Quad* poly : {&a, &b}) {
    for (std::size_t i = 0; i < 4; ++i) {
      const Vec2 edge = (*poly)[(i + 1) % 4] - (*poly)[i];
      if (separated_along(a, b, perp(edge))) return false;
    }
  }
  return true;
}

/// Minimum Euclidean distance between two convex quads (0 when they overlap).
inline double convex_quads_distance(const Quad& a, const Quad& b) {
  if (convex_quads_overlap(a, b)) return 0.0;
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      d = std::min(d, point_segment_distance(a[i], b[j], b[(j + 1) % 4]));
      d = std::min(d, point_segment_distance(b[i], a[j], a[(j + 1) % 4]));
    }
  }
  return d;
}

}  // namespace advsim
