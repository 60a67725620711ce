#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mapattack/geometry.hpp"

namespace mapattack::cam {

using geom::Mat3;
using geom::Vec2;
using geom::Vec3;

/// Points closer than this along the optical axis do not project.
inline constexpr double kMinDepth = 0.1;

/// Pinhole camera. Extrinsics map world -> camera: X_cam = R * X_world + T.
/// Camera frame is x-right, y-down, z-forward. World frame is x-right,
/// y-forward, z-up (BEV ego frame plus height).
struct CameraModel {
  std::string id;
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  Mat3 rotation;     // R, world -> camera
  Vec3 translation;  // T
  int width = 0;
  int height = 0;

  /// Throws ConfigError when intrinsics are invalid or R is not orthonormal (1e-6).
  void validate() const;

  Vec3 position() const;      // camera centre in world coordinates: -R^T T
  Vec3 forward_axis() const;  // optical axis in world coordinates
  double half_hfov() const;   // horizontal half field of view, radians

  /// Pinhole projection. Returns the pixel when the camera-frame depth exceeds
  /// kMinDepth and (u, v) falls inside the image; nullopt encodes invisibility.
  std::optional<Vec2> project(const Vec3& world) const;
};

/// Surround-view rig; camera ids must be unique and the union of horizontal
/// fields of view must cover 360 degrees.
struct CameraRig {
  std::vector<CameraModel> cameras;

  void validate() const;
  const CameraModel* find(const std::string& id) const;
  std::vector<Vec3> positions() const;
};

/// Camera at `position` yawed about +z; yaw 0 faces +y (ego forward), positive
/// yaw turns left. Pitch/roll are zero.
CameraModel make_camera(const std::string& id, const Vec3& position, double yaw,
                        double hfov_deg, int width, int height);

/// Six-camera layout (front, front-left, front-right, back, back-left,
/// back-right) with full 360 degree horizontal coverage.
CameraRig default_rig(int width = 400, int height = 300, double hfov_deg = 80.0);

/// Index of the camera whose optical axis best faces `world` among cameras
/// with a valid projection; -1 when no camera sees the point.
int best_facing_camera(const CameraRig& rig, const Vec3& world);

/// Depth along the view ray at pixel (u, v) where it meets the z=0 ground
/// plane; +inf for rays at or above the horizon.
double ground_depth_at_pixel(const CameraModel& cam, double u, double v);

}  // namespace mapattack::cam
