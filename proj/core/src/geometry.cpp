#include "mapattack/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mapattack/errors.hpp"

namespace mapattack::geom {

namespace {
constexpr double kMinSpacing = 1e-9;
}  // namespace

Mat3 Mat3::from_rows(const Vec3& r0, const Vec3& r1, const Vec3& r2) {
  Mat3 out;
  out.m[0] = r0.x;
  out.m[1] = r0.y;
  out.m[2] = r0.z;
  out.m[3] = r1.x;
  out.m[4] = r1.y;
  out.m[5] = r1.z;
  out.m[6] = r2.x;
  out.m[7] = r2.y;
  out.m[8] = r2.z;
  return out;
}

Mat3 Mat3::rotation_z(double yaw) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return from_rows({c, -s, 0}, {s, c, 0}, {0, 0, 1});
}

Vec3 Mat3::operator*(const Vec3& v) const {
  return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
          m[6] * v.x + m[7] * v.y + m[8] * v.z};
}

Mat3 Mat3::operator*(const Mat3& o) const {
  Mat3 out;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += at(r, k) * o.at(k, c);
      out.at(r, c) = acc;
    }
  }
  return out;
}

Mat3 Mat3::transposed() const {
  Mat3 out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out.at(r, c) = at(c, r);
  return out;
}

bool Mat3::is_orthonormal(double tol) const {
  const Mat3 prod = transposed() * (*this);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      const double want = r == c ? 1.0 : 0.0;
      if (std::abs(prod.at(r, c) - want) > tol) return false;
    }
  }
  return true;
}

std::string to_string(MapClass c) {
  switch (c) {
    case MapClass::kBoundary:
      return "boundary";
    case MapClass::kDivider:
      return "divider";
    case MapClass::kPedCrossing:
      return "ped_crossing";
  }
  return "boundary";
}

MapClass map_class_from_string(const std::string& s) {
  if (s == "boundary") return MapClass::kBoundary;
  if (s == "divider") return MapClass::kDivider;
  if (s == "ped_crossing") return MapClass::kPedCrossing;
  throw DecodeError("unknown map element class: " + s);
}

void validate_polyline_points(const std::vector<Vec2>& pts) {
  if (pts.size() < 2) throw InvalidGeometryError("polyline needs at least 2 points");
  for (const Vec2& p : pts) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw InvalidGeometryError("polyline has non-finite coordinates");
  }
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if ((pts[i] - pts[i - 1]).norm() <= kMinSpacing)
      throw InvalidGeometryError("polyline has coincident consecutive points");
  }
}

Polyline2D::Polyline2D(std::vector<Vec2> pts, MapClass tag) : points(std::move(pts)), class_tag(tag) {
  validate_polyline_points(points);
}

double Polyline2D::length() const {
  double total = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) total += (points[i] - points[i - 1]).norm();
  return total;
}

std::vector<double> cumulative_arclength(const std::vector<Vec2>& pts) {
  std::vector<double> cum(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i)
    cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
  return cum;
}

Vec2 point_at_arclength(const std::vector<Vec2>& pts, const std::vector<double>& cum, double s) {
  if (pts.empty()) throw InvalidGeometryError("point_at_arclength on empty polyline");
  if (s <= 0.0) return pts.front();
  if (s >= cum.back()) return pts.back();
  const auto it = std::upper_bound(cum.begin(), cum.end(), s);
  const std::size_t hi = static_cast<std::size_t>(it - cum.begin());
  const std::size_t lo = hi - 1;
  const double seg = cum[hi] - cum[lo];
  const double t = seg > 0.0 ? (s - cum[lo]) / seg : 0.0;
  return pts[lo] + (pts[hi] - pts[lo]) * t;
}

namespace {

std::vector<Vec2> uniform_pass(const std::vector<Vec2>& pts, std::size_t n) {
  const std::vector<double> cum = cumulative_arclength(pts);
  const double total = cum.back();
  std::vector<Vec2> out;
  out.reserve(n);
  out.push_back(pts.front());
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double s = total * static_cast<double>(i) / static_cast<double>(n - 1);
    out.push_back(point_at_arclength(pts, cum, s));
  }
  out.push_back(pts.back());
  return out;
}

}  // namespace

Polyline2D resample_polyline(const Polyline2D& poly, std::size_t n) {
  if (n < 2) throw InvalidGeometryError("resample target must have >= 2 points");
  validate_polyline_points(poly.points);
  if (cumulative_arclength(poly.points).back() < kMinSpacing)
    throw InvalidGeometryError("cannot resample a degenerate polyline");

  // First pass places samples by the source arc length; further passes
  // redistribute until the output's own chords are uniform, which makes
  // resampling idempotent. Corner-free inputs converge in one pass.
  std::vector<Vec2> cur = uniform_pass(poly.points, n);
  for (int iter = 0; iter < 4096; ++iter) {
    std::vector<Vec2> next = uniform_pass(cur, n);
    double moved = 0.0;
    for (std::size_t i = 0; i < n; ++i) moved = std::max(moved, (next[i] - cur[i]).norm());
    cur = std::move(next);
    if (moved < 1e-13) break;
  }

  Polyline2D result;
  result.points = std::move(cur);
  result.class_tag = poly.class_tag;
  return result;
}

namespace {

// First and second derivative of the quadratic through (s0,f0),(s1,f1),(s2,f2),
// evaluated at s. Handles non-uniform spacing; used with chord arc length.
struct Deriv12 {
  double d1;
  double d2;
};

Deriv12 lagrange3_derivatives(double s0, double s1, double s2, double f0, double f1, double f2,
                              double s) {
  const double d01 = s0 - s1;
  const double d02 = s0 - s2;
  const double d12 = s1 - s2;
  const double w0 = f0 / (d01 * d02);
  const double w1 = f1 / (-d01 * d12);
  const double w2 = f2 / (d02 * d12);
  Deriv12 out;
  out.d1 = w0 * (2.0 * s - s1 - s2) + w1 * (2.0 * s - s0 - s2) + w2 * (2.0 * s - s0 - s1);
  out.d2 = 2.0 * (w0 + w1 + w2);
  return out;
}

}  // namespace

std::vector<double> pointwise_curvature(const Polyline2D& poly) {
  const std::vector<Vec2>& pts = poly.points;
  if (pts.size() < 3) throw InsufficientPointsError("curvature needs at least 3 points");
  validate_polyline_points(pts);
  const std::vector<double> s = cumulative_arclength(pts);

  std::vector<double> k(pts.size(), 0.0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::size_t a = i == 0 ? 0 : (i == pts.size() - 1 ? pts.size() - 3 : i - 1);
    const std::size_t b = a + 1;
    const std::size_t c = a + 2;
    const Deriv12 dx = lagrange3_derivatives(s[a], s[b], s[c], pts[a].x, pts[b].x, pts[c].x, s[i]);
    const Deriv12 dy = lagrange3_derivatives(s[a], s[b], s[c], pts[a].y, pts[b].y, pts[c].y, s[i]);
    const double speed_sq = dx.d1 * dx.d1 + dy.d1 * dy.d1;
    if (speed_sq < 1e-18) {
      k[i] = 0.0;
      continue;
    }
    k[i] = std::abs(dx.d1 * dy.d2 - dy.d1 * dx.d2) / std::pow(speed_sq, 1.5);
  }
  return k;
}

std::vector<double> regional_curvature(const std::vector<double>& pointwise, int window_len) {
  if (window_len < 1 || window_len % 2 == 0)
    throw ConfigError("regional curvature window must be odd and >= 1");
  const int n = static_cast<int>(pointwise.size());
  std::vector<double> out(pointwise.size(), 0.0);
  const int half = window_len / 2;
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    double acc = 0.0;
    for (int j = lo; j <= hi; ++j) acc += pointwise[j];
    out[i] = acc / static_cast<double>(hi - lo + 1);
  }
  return out;
}

CurvatureProfile curvature_profile(const Polyline2D& poly, int window_len) {
  CurvatureProfile prof;
  prof.pointwise = pointwise_curvature(poly);
  prof.regional = regional_curvature(prof.pointwise, window_len);
  prof.window_len = window_len;
  return prof;
}

double chamfer_distance(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  if (a.empty() || b.empty()) throw InvalidGeometryError("chamfer distance on an empty point set");
  auto directed = [](const std::vector<Vec2>& from, const std::vector<Vec2>& to) {
    double acc = 0.0;
    for (const Vec2& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec2& q : to) best = std::min(best, (p - q).squared_norm());
      acc += std::sqrt(best);
    }
    return acc / static_cast<double>(from.size());
  };
  return 0.5 * (directed(a, b) + directed(b, a));
}

double chamfer_distance(const Polyline2D& a, const Polyline2D& b) {
  return chamfer_distance(a.points, b.points);
}

Vec2 closest_point_on_segment(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len_sq = ab.squared_norm();
  if (len_sq <= 0.0) return a;
  const double t = std::clamp((p - a).dot(ab) / len_sq, 0.0, 1.0);
  return a + ab * t;
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  return (p - closest_point_on_segment(p, a, b)).norm();
}

double point_polyline_distance(const Vec2& p, const std::vector<Vec2>& pts) {
  return (p - closest_point_on_polyline(p, pts)).norm();
}

Vec2 closest_point_on_polyline(const Vec2& p, const std::vector<Vec2>& pts) {
  if (pts.empty()) throw InvalidGeometryError("closest point on empty polyline");
  if (pts.size() == 1) return pts.front();
  Vec2 best = pts.front();
  double best_sq = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const Vec2 cand = closest_point_on_segment(p, pts[i - 1], pts[i]);
    const double d = (p - cand).squared_norm();
    if (d < best_sq) {
      best_sq = d;
      best = cand;
    }
  }
  return best;
}

bool segments_intersect(const Vec2& a1, const Vec2& a2, const Vec2& b1, const Vec2& b2,
                        double tol) {
  const Vec2 r = a2 - a1;
  const Vec2 s = b2 - b1;
  const double denom = r.cross(s);
  const Vec2 qp = b1 - a1;
  if (std::abs(denom) > 1e-15) {
    const double t = qp.cross(s) / denom;
    const double u = qp.cross(r) / denom;
    if (t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0) return true;
  }
  // Parallel / near-parallel / endpoint-touch cases: fall back to distances.
  if (point_segment_distance(a1, b1, b2) <= tol) return true;
  if (point_segment_distance(a2, b1, b2) <= tol) return true;
  if (point_segment_distance(b1, a1, a2) <= tol) return true;
  if (point_segment_distance(b2, a1, a2) <= tol) return true;
  return false;
}

bool point_in_convex_polygon(const Vec2& p, const std::vector<Vec2>& poly, double tol) {
  if (poly.size() < 3) return false;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    if ((b - a).cross(p - a) < -tol) return false;
  }
  return true;
}

Vec2 tangent_at(const std::vector<Vec2>& pts, std::size_t i) {
  if (pts.size() < 2) throw InvalidGeometryError("tangent needs >= 2 points");
  const std::size_t lo = i == 0 ? 0 : i - 1;
  const std::size_t hi = i + 1 >= pts.size() ? pts.size() - 1 : i + 1;
  return (pts[hi] - pts[lo]).normalized();
}

Polyline2D translated(const Polyline2D& poly, const Vec2& t) {
  Polyline2D out = poly;
  for (Vec2& p : out.points) p += t;
  return out;
}

Polyline2D rigid_transformed(const Polyline2D& poly, double rotation, const Vec2& t) {
  const double c = std::cos(rotation);
  const double s = std::sin(rotation);
  Polyline2D out = poly;
  for (Vec2& p : out.points) p = Vec2{c * p.x - s * p.y, s * p.x + c * p.y} + t;
  return out;
}

}  // namespace mapattack::geom
