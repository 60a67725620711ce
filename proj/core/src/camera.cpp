#include "mapattack/camera.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "mapattack/errors.hpp"

namespace mapattack::cam {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

void CameraModel::validate() const {
  if (fx <= 0.0 || fy <= 0.0) throw ConfigError("camera " + id + ": focal lengths must be > 0");
  if (width <= 0 || height <= 0) throw ConfigError("camera " + id + ": bad image size");
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
    throw ConfigError("camera " + id + ": principal point outside image");
  if (!rotation.is_orthonormal(1e-6))
    throw ConfigError("camera " + id + ": rotation is not orthonormal");
}

Vec3 CameraModel::position() const {
  const Vec3 rt = rotation.transposed() * translation;
  return {-rt.x, -rt.y, -rt.z};
}

Vec3 CameraModel::forward_axis() const { return rotation.transposed() * Vec3{0, 0, 1}; }

double CameraModel::half_hfov() const { return std::atan2(0.5 * width, fx); }

std::optional<Vec2> CameraModel::project(const Vec3& world) const {
  const Vec3 c = rotation * world + translation;
  if (c.z <= kMinDepth) return std::nullopt;
  const double u = fx * (c.x / c.z) + cx;
  const double v = fy * (c.y / c.z) + cy;
  if (u < 0.0 || u >= width || v < 0.0 || v >= height) return std::nullopt;
  return Vec2{u, v};
}

void CameraRig::validate() const {
  if (cameras.empty()) throw ConfigError("camera rig has no cameras");
  std::set<std::string> ids;
  for (const CameraModel& cam : cameras) {
    cam.validate();
    if (!ids.insert(cam.id).second) throw ConfigError("duplicate camera id: " + cam.id);
  }
  // 360 degree coverage: sweep a dense set of azimuths and require that some
  // camera's horizontal FOV contains each.
  for (int step = 0; step < 720; ++step) {
    const double az = -kPi + 2.0 * kPi * step / 720.0;
    const Vec3 dir{std::sin(az), std::cos(az), 0.0};
    bool covered = false;
    for (const CameraModel& cam : cameras) {
      const Vec3 f = cam.forward_axis();
      const double along = f.x * dir.x + f.y * dir.y;
      const double lateral = f.x * dir.y - f.y * dir.x;
      const double angle = std::atan2(std::abs(lateral), along);
      if (angle <= cam.half_hfov()) {
        covered = true;
        break;
      }
    }
    if (!covered) throw ConfigError("camera rig does not cover 360 degrees horizontally");
  }
}

const CameraModel* CameraRig::find(const std::string& id) const {
  for (const CameraModel& cam : cameras)
    if (cam.id == id) return &cam;
  return nullptr;
}

std::vector<Vec3> CameraRig::positions() const {
  std::vector<Vec3> out;
  out.reserve(cameras.size());
  for (const CameraModel& cam : cameras) out.push_back(cam.position());
  return out;
}

CameraModel make_camera(const std::string& id, const Vec3& position, double yaw,
                        double hfov_deg, int width, int height) {
  CameraModel cam;
  cam.id = id;
  cam.width = width;
  cam.height = height;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  const double half = 0.5 * hfov_deg * kPi / 180.0;
  cam.fx = 0.5 * width / std::tan(half);
  cam.fy = cam.fx;  // square pixels

  // Camera basis in world coordinates. yaw 0 faces +y; positive yaw turns left.
  const Vec3 forward{-std::sin(yaw), std::cos(yaw), 0.0};
  const Vec3 right{std::cos(yaw), std::sin(yaw), 0.0};
  const Vec3 down{0.0, 0.0, -1.0};
  // Rows of R are the camera axes expressed in world coordinates.
  cam.rotation = geom::Mat3::from_rows(right, down, forward);
  const Vec3 rc = cam.rotation * position;
  cam.translation = {-rc.x, -rc.y, -rc.z};
  cam.validate();
  return cam;
}

CameraRig default_rig(int width, int height, double hfov_deg) {
  const double d2r = kPi / 180.0;
  CameraRig rig;
  rig.cameras = {
      make_camera("front", {0.0, 1.8, 1.6}, 0.0, hfov_deg, width, height),
      make_camera("front_left", {-0.7, 1.2, 1.6}, 55.0 * d2r, hfov_deg, width, height),
      make_camera("front_right", {0.7, 1.2, 1.6}, -55.0 * d2r, hfov_deg, width, height),
      make_camera("back", {0.0, -1.2, 1.6}, 180.0 * d2r, hfov_deg, width, height),
      make_camera("back_left", {-0.7, -0.6, 1.6}, 125.0 * d2r, hfov_deg, width, height),
      make_camera("back_right", {0.7, -0.6, 1.6}, -125.0 * d2r, hfov_deg, width, height),
  };
  rig.validate();
  return rig;
}

int best_facing_camera(const CameraRig& rig, const Vec3& world) {
  int best = -1;
  double best_angle = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rig.cameras.size(); ++i) {
    const CameraModel& cam = rig.cameras[i];
    if (!cam.project(world)) continue;
    const Vec3 to_point = (world - cam.position()).normalized();
    const double cos_angle = std::clamp(to_point.dot(cam.forward_axis()), -1.0, 1.0);
    const double angle = std::acos(cos_angle);
    if (angle < best_angle) {
      best_angle = angle;
      best = static_cast<int>(i);
    }
  }
  return best;
}

double ground_depth_at_pixel(const CameraModel& cam, double u, double v) {
  // Ray in camera frame through the pixel, expressed in world coordinates.
  const Vec3 dir_cam{(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0};
  const Vec3 dir_world = cam.rotation.transposed() * dir_cam;
  const Vec3 origin = cam.position();
  if (dir_world.z >= -1e-12) return std::numeric_limits<double>::infinity();
  const double t = -origin.z / dir_world.z;  // ground plane z = 0
  // Depth is the camera-frame z of the hit, i.e. t times the ray's unit depth.
  return t;
}

}  // namespace mapattack::cam
