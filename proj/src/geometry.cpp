#include "ivmqr/geometry.hpp"

#include <algorithm>

namespace ivmqr::geometry {

double signed_area(const Polygon& poly)
{
  const std::size_t n = poly.size();
  if (n < 3)
    return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = poly[i];
    const Point2& b = poly[(i + 1) % n];
    acc += a.x() * b.y() - b.x() * a.y();
  }
  return 0.5 * acc;
}

Polygon clip_halfplane(const Polygon& poly, const Point2& normal, double offset)
{
  Polygon out;
  const std::size_t n = poly.size();
  if (n == 0)
    return out;
  out.reserve(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& cur = poly[i];
    const Point2& nxt = poly[(i + 1) % n];
    const double sc = normal.dot(cur) - offset;
    const double sn = normal.dot(nxt) - offset;
    if (sc <= 0)
      out.push_back(cur);
    if ((sc < 0 && sn > 0) || (sc > 0 && sn < 0)) {
      const double t = sc / (sc - sn);
      out.push_back(cur + t * (nxt - cur));
    }
  }
  return out;
}

Polygon clip_box(const Polygon& poly, const Point2& lo, const Point2& hi)
{
  Polygon p = clip_halfplane(poly, Point2(1, 0), hi.x());
  p = clip_halfplane(p, Point2(-1, 0), -lo.x());
  p = clip_halfplane(p, Point2(0, 1), hi.y());
  return clip_halfplane(p, Point2(0, -1), -lo.y());
}

Polygon parallelogram(const Point2& center, const Eigen::Matrix2d& edges)
{
  const Point2 a = 0.5 * edges.col(0);
  const Point2 b = 0.5 * edges.col(1);
  Polygon poly{ center - a - b, center + a - b, center + a + b, center - a + b };
  if (signed_area(poly) < 0)
    std::reverse(poly.begin(), poly.end());
  return poly;
}

namespace {
double cross(const Point2& o, const Point2& a, const Point2& b)
{
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}
} // namespace

Polygon convex_hull(std::vector<Point2> pts)
{
  std::sort(pts.begin(), pts.end(), [](const Point2& a, const Point2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3)
    return pts;
  Polygon hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0)
      --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0)
      --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

bool hull_contains(const Polygon& hull, const Point2& x, double tol)
{
  const std::size_t n = hull.size();
  if (n < 3)
    return false;
  for (std::size_t i = 0; i < n; ++i)
    if (cross(hull[i], hull[(i + 1) % n], x) < -tol)
      return false;
  return true;
}

} // namespace ivmqr::geometry
