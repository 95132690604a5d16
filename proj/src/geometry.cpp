#include "planarm/geometry.hpp"

#include <cmath>
#include <limits>

namespace planarm::geom {

namespace {

Vec2 edge_normal(const Polygon& poly, size_t i) {
  const Vec2& a = poly.vertices[i];
  const Vec2& b = poly.vertices[(i + 1) % poly.vertices.size()];
  Vec2 e = b - a;
  return Vec2(e.y(), -e.x()).normalized();  // outward for CCW order
}

// Interval of the polygon projected on axis u.
std::pair<double, double> project(const Polygon& poly, const Vec2& u) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const Vec2& v : poly.vertices) {
    const double d = u.dot(v);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  return {lo, hi};
}

}  // namespace

bool Polygon::is_convex_ccw() const {
  const size_t n = vertices.size();
  if (n < 3) return false;
  for (size_t i = 0; i < n; ++i) {
    const Vec2& a = vertices[i];
    const Vec2& b = vertices[(i + 1) % n];
    const Vec2& c = vertices[(i + 2) % n];
    if (cross2(b - a, c - b) <= 0.0) return false;
  }
  return true;
}

void Polygon::validate() const {
  if (!is_convex_ccw())
    throw Error("polygon must be convex with CCW vertex order");
}

Polygon transformed(const Polygon& poly, const Vec2& translation, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Polygon out;
  out.vertices.reserve(poly.vertices.size());
  for (const Vec2& v : poly.vertices)
    out.vertices.emplace_back(translation.x() + c * v.x() - s * v.y(),
                              translation.y() + s * v.x() + c * v.y());
  return out;
}

bool overlaps(const Polygon& a, const Polygon& b) {
  auto separated_along = [&](const Polygon& p) {
    for (size_t i = 0; i < p.vertices.size(); ++i) {
      const Vec2 u = edge_normal(p, i);
      auto [alo, ahi] = project(a, u);
      auto [blo, bhi] = project(b, u);
      if (ahi < blo || bhi < alo) return true;
    }
    return false;
  };
  return !(separated_along(a) || separated_along(b));
}

double distance(const Polygon& a, const Polygon& b) {
  if (overlaps(a, b)) {
    // Penetration depth: least overlap across all face-normal axes.
    double depth = std::numeric_limits<double>::infinity();
    auto scan = [&](const Polygon& p) {
      for (size_t i = 0; i < p.vertices.size(); ++i) {
        const Vec2 u = edge_normal(p, i);
        auto [alo, ahi] = project(a, u);
        auto [blo, bhi] = project(b, u);
        depth = std::min(depth, std::min(ahi - blo, bhi - alo));
      }
    };
    scan(a);
    scan(b);
    return -depth;
  }
  double best = std::numeric_limits<double>::infinity();
  const size_t na = a.vertices.size(), nb = b.vertices.size();
  for (size_t i = 0; i < na; ++i) {
    const Vec2& p0 = a.vertices[i];
    const Vec2& p1 = a.vertices[(i + 1) % na];
    for (size_t j = 0; j < nb; ++j) {
      const Vec2& q0 = b.vertices[j];
      const Vec2& q1 = b.vertices[(j + 1) % nb];
      best = std::min(best, segment_segment_distance(p0, p1, q0, q1));
    }
  }
  return best;
}

PointDepth point_depth(const Vec2& p, const Polygon& poly) {
  PointDepth out;
  double least_penetration = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < poly.vertices.size(); ++i) {
    const Vec2 n = edge_normal(poly, i);
    const double sd = n.dot(p - poly.vertices[i]);  // >0 outside this face
    if (sd > 0.0) return out;                        // outside the polygon
    if (-sd < least_penetration) {
      least_penetration = -sd;
      out.normal = n;
    }
  }
  out.inside = true;
  out.depth = least_penetration;
  return out;
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 <= 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

double segment_segment_distance(const Vec2& a0, const Vec2& a1, const Vec2& b0,
                                const Vec2& b1) {
  const Vec2 da = a1 - a0, db = b1 - b0;
  const double d1 = cross2(db, a0 - b0);
  const double d2 = cross2(db, a1 - b0);
  const double d3 = cross2(da, b0 - a0);
  const double d4 = cross2(da, b1 - a0);
  if (((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0))) return 0.0;  // cross
  double best = point_segment_distance(a0, b0, b1);
  best = std::min(best, point_segment_distance(a1, b0, b1));
  best = std::min(best, point_segment_distance(b0, a0, a1));
  best = std::min(best, point_segment_distance(b1, a0, a1));
  return best;
}

double segment_polygon_distance(const Vec2& a, const Vec2& b,
                                const Polygon& poly) {
  // Endpoint inside => penetration; report negative depth.
  const PointDepth pa = point_depth(a, poly);
  const PointDepth pb = point_depth(b, poly);
  if (pa.inside || pb.inside) return -std::max(pa.depth, pb.depth);
  double best = std::numeric_limits<double>::infinity();
  const size_t n = poly.vertices.size();
  for (size_t i = 0; i < n; ++i) {
    const Vec2& q0 = poly.vertices[i];
    const Vec2& q1 = poly.vertices[(i + 1) % n];
    const double d = segment_segment_distance(a, b, q0, q1);
    if (d == 0.0) return 0.0;
    best = std::min(best, d);
  }
  return best;
}

}  // namespace planarm::geom
