#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace mapattack::geom {

/// Vectorized map elements are resampled to this many points before set-based
/// comparisons (Chamfer matching, losses, AP).
inline constexpr std::size_t kElementPoints = 20;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double px, double py) : x(px), y(py) {}

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2& operator+=(const Vec2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double cross(const Vec2& o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  double squared_norm() const { return x * x + y * y; }
  Vec2 normalized() const {
    const double n = norm();
    return n > 0.0 ? Vec2{x / n, y / n} : Vec2{0.0, 0.0};
  }
  /// Counter-clockwise 90 degree rotation.
  Vec2 perp() const { return {-y, x}; }
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Vec3() = default;
  Vec3(double px, double py, double pz) : x(px), y(py), z(pz) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  Vec3 normalized() const {
    const double n = norm();
    return n > 0.0 ? Vec3{x / n, y / n, z / n} : Vec3{0.0, 0.0, 0.0};
  }
};

/// Row-major 3x3 matrix; enough linear algebra for camera extrinsics.
struct Mat3 {
  double m[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return {}; }
  static Mat3 from_rows(const Vec3& r0, const Vec3& r1, const Vec3& r2);
  /// Rotation by yaw about +z (counter-clockwise looking down).
  static Mat3 rotation_z(double yaw);

  double at(int r, int c) const { return m[r * 3 + c]; }
  double& at(int r, int c) { return m[r * 3 + c]; }

  Vec3 operator*(const Vec3& v) const;
  Mat3 operator*(const Mat3& o) const;
  Mat3 transposed() const;
  bool is_orthonormal(double tol = 1e-6) const;
};

enum class MapClass { kBoundary, kDivider, kPedCrossing };

std::string to_string(MapClass c);
MapClass map_class_from_string(const std::string& s);

/// Ordered 2D points in ego-centric BEV meters (x right, y forward).
/// Invariants: >= 2 points, consecutive points > 1e-9 m apart, finite coords.
struct Polyline2D {
  std::vector<Vec2> points;
  MapClass class_tag = MapClass::kBoundary;

  Polyline2D() = default;
  /// Validates the invariants; throws InvalidGeometryError on violation.
  Polyline2D(std::vector<Vec2> pts, MapClass tag);

  std::size_t size() const { return points.size(); }
  double length() const;
  const Vec2& front() const { return points.front(); }
  const Vec2& back() const { return points.back(); }
};

/// Throws InvalidGeometryError unless pts satisfies the Polyline2D invariants.
void validate_polyline_points(const std::vector<Vec2>& pts);

/// Per-point curvature (1/m, >= 0) plus sliding-window means.
struct CurvatureProfile {
  std::vector<double> pointwise;
  std::vector<double> regional;
  int window_len = 5;
};

/// Cumulative chord arc length; [0] == 0, back() == total length.
std::vector<double> cumulative_arclength(const std::vector<Vec2>& pts);

/// Point at arc position s in [0, length], clamped at the ends.
Vec2 point_at_arclength(const std::vector<Vec2>& pts, const std::vector<double>& cum, double s);

/// n >= 2 points at equal arc-length spacing along poly. Endpoints are preserved.
/// Throws InvalidGeometryError for degenerate input (length < 1e-9 m).
Polyline2D resample_polyline(const Polyline2D& poly, std::size_t n);

/// |x'y'' - y'x''| / (x'^2 + y'^2)^(3/2) with derivatives taken against chord
/// arc length: three-point Lagrange differentiation, one-sided at the ends.
/// Throws InsufficientPointsError for < 3 points.
std::vector<double> pointwise_curvature(const Polyline2D& poly);

/// Sliding-window mean of the pointwise profile; windows truncate at the ends
/// so the output has the input's length. window_len must be odd and >= 1.
std::vector<double> regional_curvature(const std::vector<double>& pointwise, int window_len);

CurvatureProfile curvature_profile(const Polyline2D& poly, int window_len);

/// Symmetric point-set Chamfer distance: mean nearest-neighbour distance from
/// a to b averaged with the reverse direction. Throws on an empty set.
double chamfer_distance(const std::vector<Vec2>& a, const std::vector<Vec2>& b);
double chamfer_distance(const Polyline2D& a, const Polyline2D& b);

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b);
Vec2 closest_point_on_segment(const Vec2& p, const Vec2& a, const Vec2& b);
double point_polyline_distance(const Vec2& p, const std::vector<Vec2>& pts);
Vec2 closest_point_on_polyline(const Vec2& p, const std::vector<Vec2>& pts);

/// Closed predicate: touching counts as intersecting (within tol).
bool segments_intersect(const Vec2& a1, const Vec2& a2, const Vec2& b1, const Vec2& b2,
                        double tol = 1e-6);

/// Point strictly inside a convex polygon given in CCW order (closed predicate:
/// boundary points count as inside within tol).
bool point_in_convex_polygon(const Vec2& p, const std::vector<Vec2>& poly, double tol = 1e-6);

/// Unit tangent at vertex i (central where possible, one-sided at the ends).
Vec2 tangent_at(const std::vector<Vec2>& pts, std::size_t i);

Polyline2D translated(const Polyline2D& poly, const Vec2& t);
Polyline2D rigid_transformed(const Polyline2D& poly, double rotation, const Vec2& t);

}  // namespace mapattack::geom
