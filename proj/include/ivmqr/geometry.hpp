#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace ivmqr::geometry {

using Point2 = Eigen::Vector2d;
using Polygon = std::vector<Point2>;

// Signed shoelace area (positive for counter-clockwise vertex order).
double signed_area(const Polygon& poly);
inline double area(const Polygon& poly)
{
  return std::abs(signed_area(poly));
}

// Sutherland-Hodgman clip of a convex polygon against {x : n'x <= c}.
Polygon clip_halfplane(const Polygon& poly, const Point2& normal, double offset);

// Clip against the box [lo, hi].
Polygon clip_box(const Polygon& poly, const Point2& lo, const Point2& hi);

// Parallelogram center + edges * [-1/2, 1/2]^2, counter-clockwise.
Polygon parallelogram(const Point2& center, const Eigen::Matrix2d& edges);

// Convex hull (Andrew's monotone chain), counter-clockwise, no repeated end.
Polygon convex_hull(std::vector<Point2> points);

bool hull_contains(const Polygon& hull, const Point2& x, double tol = 1e-12);

} // namespace ivmqr::geometry
