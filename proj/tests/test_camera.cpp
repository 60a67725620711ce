#include <doctest.h>

#include <cmath>

#include "mapattack/camera.hpp"
#include "mapattack/errors.hpp"
#include "mapattack/rng.hpp"

using namespace mapattack;
using cam::CameraModel;
using geom::Mat3;
using geom::Vec2;
using geom::Vec3;

namespace {

constexpr double kPi = 3.14159265358979323846;

CameraModel identity_camera(double fx = 100, double fy = 100, double cx = 50, double cy = 50,
                            int w = 100, int h = 100) {
  CameraModel cam;
  cam.id = "test";
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = cx;
  cam.cy = cy;
  cam.width = w;
  cam.height = h;
  cam.rotation = Mat3::identity();
  cam.translation = {0, 0, 0};
  return cam;
}

}  // namespace

TEST_CASE("point on the optical axis projects to the principal point") {
  const CameraModel cam = identity_camera();
  const auto px = cam.project({0, 0, 10});
  REQUIRE(px.has_value());
  CHECK(px->x == doctest::Approx(50.0).epsilon(1e-9));
  CHECK(px->y == doctest::Approx(50.0).epsilon(1e-9));
}

TEST_CASE("points behind the camera are invisible") {
  const CameraModel cam = identity_camera();
  CHECK_FALSE(cam.project({0, 0, -5}).has_value());
  CHECK_FALSE(cam.project({0, 0, 0.05}).has_value());  // closer than the depth floor
}

TEST_CASE("hand-computed projection fixture") {
  const CameraModel cam = identity_camera();
  const auto px = cam.project({1.0, 0.5, 10.0});
  REQUIRE(px.has_value());
  // Independent matrix multiply: u = fx*(x/z)+cx, v = fy*(y/z)+cy.
  CHECK(px->x == doctest::Approx(60.0).epsilon(1e-9));
  CHECK(px->y == doctest::Approx(55.0).epsilon(1e-9));
}

TEST_CASE("points outside the image are invisible") {
  const CameraModel cam = identity_camera();
  CHECK_FALSE(cam.project({100.0, 0.0, 10.0}).has_value());
}

TEST_CASE("camera validation catches bad parameters") {
  CameraModel cam = identity_camera();
  cam.fx = -1.0;
  CHECK_THROWS_AS(cam.validate(), ConfigError);
  cam = identity_camera();
  cam.rotation.at(0, 0) = 2.0;
  CHECK_THROWS_AS(cam.validate(), ConfigError);
  cam = identity_camera();
  cam.cx = 150.0;
  CHECK_THROWS_AS(cam.validate(), ConfigError);
}

TEST_CASE("default rig covers 360 degrees with unique ids") {
  const cam::CameraRig rig = cam::default_rig();
  CHECK_NOTHROW(rig.validate());
  CHECK(rig.cameras.size() == 6);
  CHECK(rig.find("front") != nullptr);
  CHECK(rig.find("back_left") != nullptr);
  // Front camera sits ahead of the ego and faces +y.
  const Vec3 p = rig.find("front")->position();
  CHECK(p.y == doctest::Approx(1.8).epsilon(1e-9));
  CHECK(rig.find("front")->forward_axis().y == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("rigid-transform round trip reproduces pixels") {
  // Composing the extrinsics with a world rigid transform G and moving the
  // point by G^-1 keeps the projection fixed.
  Rng rng(23);
  const cam::CameraRig rig = cam::default_rig();
  for (int trial = 0; trial < 200; ++trial) {
    const CameraModel& cam_model = rig.cameras[trial % rig.cameras.size()];
    const Vec3 world{rng.uniform(-15, 15), rng.uniform(2, 30), rng.uniform(0, 2)};
    const auto px = cam_model.project(world);
    if (!px) continue;

    const double yaw = rng.uniform(-kPi, kPi);
    const Mat3 g = Mat3::rotation_z(yaw);
    const Vec3 t{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-2, 2)};

    CameraModel moved = cam_model;
    moved.rotation = cam_model.rotation * g.transposed();
    const Vec3 rt = moved.rotation * t;
    moved.translation = {cam_model.translation.x - rt.x, cam_model.translation.y - rt.y,
                         cam_model.translation.z - rt.z};
    const Vec3 world_moved = g * world + t;
    const auto px2 = moved.project(world_moved);
    REQUIRE(px2.has_value());
    CHECK(std::abs(px2->x - px->x) < 1e-6);
    CHECK(std::abs(px2->y - px->y) < 1e-6);
  }
}

TEST_CASE("best facing camera picks the aligned view") {
  const cam::CameraRig rig = cam::default_rig();
  const int front = cam::best_facing_camera(rig, {0.0, 20.0, 0.0});
  REQUIRE(front >= 0);
  CHECK(rig.cameras[front].id == "front");
  const int back = cam::best_facing_camera(rig, {0.0, -20.0, 0.0});
  REQUIRE(back >= 0);
  CHECK(rig.cameras[back].id == "back");
}

TEST_CASE("ground depth matches projected ground points") {
  const cam::CameraRig rig = cam::default_rig();
  const CameraModel& front = *rig.find("front");
  const Vec3 ground{2.0, 14.0, 0.0};
  const auto px = front.project(ground);
  REQUIRE(px.has_value());
  const double depth = cam::ground_depth_at_pixel(front, px->x, px->y);
  const Vec3 cam_frame = front.rotation * ground + front.translation;
  CHECK(depth == doctest::Approx(cam_frame.z).epsilon(1e-6));
  // Above the horizon there is no ground hit.
  CHECK(std::isinf(cam::ground_depth_at_pixel(front, front.cx, 2.0)));
}
