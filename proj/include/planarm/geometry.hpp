#pragma once

#include <vector>

#include "planarm/types.hpp"

namespace planarm::geom {

// Convex polygon, CCW vertex order.
struct Polygon {
  std::vector<Vec2> vertices;

  bool is_convex_ccw() const;
  void validate() const;
};

// Rigid transform of a polygon: rotate by `angle`, then translate.
Polygon transformed(const Polygon& poly, const Vec2& translation, double angle);

// True iff the polygons overlap (separating axis test over face normals).
bool overlaps(const Polygon& a, const Polygon& b);

// Signed distance: positive separation when disjoint, negative penetration
// depth when overlapping.
double distance(const Polygon& a, const Polygon& b);

// Deepest-point query for a vertex inside a convex polygon. When inside,
// depth > 0 and normal is the outward normal of the least-penetrated face.
struct PointDepth {
  bool inside = false;
  double depth = 0.0;
  Vec2 normal = Vec2::Zero();
};
PointDepth point_depth(const Vec2& p, const Polygon& poly);

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b);
double segment_segment_distance(const Vec2& a0, const Vec2& a1, const Vec2& b0,
                                const Vec2& b1);

// Distance from a segment to a convex polygon; negative (penetration proxy)
// when they intersect or an endpoint is inside.
double segment_polygon_distance(const Vec2& a, const Vec2& b,
                                const Polygon& poly);

inline double cross2(const Vec2& a, const Vec2& b) {
  return a.x() * b.y() - a.y() * b.x();
}

}  // namespace planarm::geom
