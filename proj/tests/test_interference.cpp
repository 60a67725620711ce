#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mapattack/errors.hpp"
#include "mapattack/interference.hpp"
#include "mapattack/rng.hpp"
#include "mapattack/scene.hpp"

using namespace mapattack;
using geom::Vec2;
using geom::Vec3;
using interf::AttackConfig;
using interf::AttackKind;
using interf::FlashlightSpec;
using interf::PatchSpec;

namespace {

constexpr double kPi = 3.14159265358979323846;

scene::SceneFrame rendered_frame(scene::RoadKind kind, std::uint64_t seed) {
  scene::SceneSpec spec;
  spec.road_kind = kind;
  spec.seed = seed;
  scene::SceneFrame frame = scene::generate_scene(spec);
  scene::render_surround_views(frame);
  return frame;
}

PatchSpec small_patch(const Vec3& center, double alpha = 0.0) {
  PatchSpec patch;
  patch.center = center;
  patch.width_m = 3.0;
  patch.height_m = 2.0;
  patch.alpha = alpha;
  patch.pattern = img::Image(16, 16, {1.0f, 0.0f, 0.0f});
  return patch;
}

double max_pixel_delta(const scene::ImageSet& a, const scene::ImageSet& b) {
  double out = 0.0;
  for (const auto& [cam_id, view] : a) {
    const img::Image& other = b.at(cam_id);
    for (std::size_t i = 0; i < view.data.size(); ++i)
      out = std::max(out, std::abs(static_cast<double>(view.data[i]) - other.data[i]));
  }
  return out;
}

// Independent 4x4-matrix evaluation of the pixel-to-world mapping: scale
// columns (W/w, H/h, offsets -W/2, -H/2), then yaw-about-z rotation plus
// translation, with the patch height axis mapped to world z.
Vec3 matrix_oracle(const PatchSpec& patch, double u_p, double v_p) {
  const double w = patch.pattern.width;
  const double h = patch.pattern.height;
  const double scale[4][3] = {
      {patch.width_m / w, 0.0, -patch.width_m / 2.0},
      {0.0, 0.0, 0.0},
      {0.0, patch.height_m / h, -patch.height_m / 2.0},
      {0.0, 0.0, 1.0},
  };
  const double c = std::cos(patch.alpha);
  const double s = std::sin(patch.alpha);
  const double rt[4][4] = {
      {c, -s, 0.0, patch.center.x},
      {s, c, 0.0, patch.center.y},
      {0.0, 0.0, 1.0, patch.center.z},
      {0.0, 0.0, 0.0, 1.0},
  };
  const double uv1[3] = {u_p, v_p, 1.0};
  double local[4] = {0, 0, 0, 0};
  for (int r = 0; r < 4; ++r)
    for (int k = 0; k < 3; ++k) local[r] += scale[r][k] * uv1[k];
  double world[4] = {0, 0, 0, 0};
  for (int r = 0; r < 4; ++r)
    for (int k = 0; k < 4; ++k) world[r] += rt[r][k] * local[k];
  return {world[0], world[1], world[2]};
}

}  // namespace

TEST_CASE("flare behind every camera leaves images unchanged") {
  const scene::SceneFrame frame = rendered_frame(scene::RoadKind::kStraight, 41);
  FlashlightSpec spec;
  const scene::ImageSet out = interf::render_flare(frame.images, frame.rig, {0.0, 0.0, -50.0}, spec);
  CHECK(max_pixel_delta(out, frame.images) == 0.0);
}

TEST_CASE("peak alpha follows the inverse-square law") {
  FlashlightSpec spec;
  spec.reference_distance = 6.0;
  CHECK(spec.peak_alpha(3.0) == doctest::Approx(1.0));  // saturated
  const double a1 = spec.peak_alpha(8.0);
  const double a2 = spec.peak_alpha(16.0);
  CHECK(a1 == doctest::Approx(4.0 * a2).epsilon(1e-12));
  double prev = 10.0;
  for (double d = 0.5; d < 40.0; d += 0.5) {
    const double a = spec.peak_alpha(d);
    CHECK(a <= prev + 1e-15);
    prev = a;
  }
}

TEST_CASE("brightest flare pixel lands on the projection of the source") {
  const scene::SceneFrame frame = rendered_frame(scene::RoadKind::kStraight, 42);
  FlashlightSpec spec;
  const Vec3 p{2.0, 6.5, 1.2};  // close enough that the blob outshines the curbs
  const cam::CameraModel& front = *frame.rig.find("front");
  const auto proj = front.project(p);
  REQUIRE(proj.has_value());
  const scene::ImageSet out = interf::render_flare(frame.images, frame.rig, p, spec);
  const img::Image& view = out.at("front");
  double best = -1.0;
  int bx = -1, by = -1;
  for (int y = 0; y < view.height; ++y) {
    for (int x = 0; x < view.width; ++x) {
      const float l = img::luminance_at(view, x, y);
      if (l > best) {
        best = l;
        bx = x;
        by = y;
      }
    }
  }
  CHECK(std::hypot(bx - proj->x, by - proj->y) <= 1.5);
}

TEST_CASE("flare output stays in range and is deterministic") {
  const scene::SceneFrame frame = rendered_frame(scene::RoadKind::kFork, 43);
  FlashlightSpec spec;
  const Vec3 p{4.5, 9.0, 1.0};
  const scene::ImageSet a = interf::render_flare(frame.images, frame.rig, p, spec);
  const scene::ImageSet b = interf::render_flare(frame.images, frame.rig, p, spec);
  CHECK(max_pixel_delta(a, b) == 0.0);
  for (const auto& [cam_id, view] : a) {
    (void)cam_id;
    for (float v : view.data) {
      REQUIRE(v >= 0.0f);
      REQUIRE(v <= 1.0f);
    }
  }
}

TEST_CASE("far blinding is a near-identity transform") {
  const scene::SceneFrame frame = rendered_frame(scene::RoadKind::kStraight, 44);
  AttackConfig cfg;
  cfg.kind = AttackKind::kBlinding;
  cfg.position = {25.0, 700.0, 1.5};
  cfg.flashlight = FlashlightSpec{};
  const scene::ImageSet out = interf::apply_attack(frame.images, frame.rig, cfg);
  CHECK(max_pixel_delta(out, frame.images) < 1.0 / 255.0);
}

TEST_CASE("patch pixel-to-world maps the center pixel to the board center") {
  const PatchSpec patch = small_patch({4.0, 12.0, 1.0}, 0.35);
  const Vec3 world = interf::patch_pixel_to_world(patch, patch.pattern.width / 2.0,
                                                  patch.pattern.height / 2.0);
  CHECK(world.x == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(world.y == doctest::Approx(12.0).epsilon(1e-12));
  CHECK(world.z == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("patch corner under identity rotation") {
  const PatchSpec patch = small_patch({4.0, 12.0, 1.0}, 0.0);
  const Vec3 world = interf::patch_pixel_to_world(patch, 0.0, 0.0);
  CHECK(world.x == doctest::Approx(4.0 - 1.5).epsilon(1e-12));  // -W/2 along the width axis
  CHECK(world.y == doctest::Approx(12.0).epsilon(1e-12));
  CHECK(world.z == doctest::Approx(0.0).epsilon(1e-12));  // -H/2 along the height axis
}

TEST_CASE("patch mapping matches the independent matrix oracle") {
  Rng rng(55);
  for (int trial = 0; trial < 100; ++trial) {
    PatchSpec patch = small_patch({rng.uniform(-10, 10), rng.uniform(-10, 20), rng.uniform(0.5, 3)},
                                  rng.uniform(-kPi, kPi));
    patch.width_m = rng.uniform(0.5, 4.0);
    patch.height_m = rng.uniform(0.5, 3.0);
    const double u = rng.uniform(0.0, patch.pattern.width - 1e-9);
    const double v = rng.uniform(0.0, patch.pattern.height - 1e-9);
    const Vec3 got = interf::patch_pixel_to_world(patch, u, v);
    const Vec3 want = matrix_oracle(patch, u, v);
    CHECK(std::abs(got.x - want.x) < 1e-9);
    CHECK(std::abs(got.y - want.y) < 1e-9);
    CHECK(std::abs(got.z - want.z) < 1e-9);
  }
  const PatchSpec patch = small_patch({2.0, 8.0, 1.0}, kPi / 2.0);
  const Vec3 got = interf::patch_pixel_to_world(patch, 0.0, 0.0);
  const Vec3 want = matrix_oracle(patch, 0.0, 0.0);
  CHECK(std::abs(got.x - want.x) < 1e-9);
  CHECK(std::abs(got.y - want.y) < 1e-9);
  CHECK(std::abs(got.z - want.z) < 1e-9);
}

TEST_CASE("patch pixel bounds are enforced") {
  const PatchSpec patch = small_patch({0, 10, 1});
  CHECK_THROWS_AS(interf::patch_pixel_to_world(patch, -0.1, 0.0), BoundsError);
  CHECK_THROWS_AS(
      interf::patch_pixel_to_world(patch, static_cast<double>(patch.pattern.width), 0.0),
      BoundsError);
}

TEST_CASE("patch behind all cameras changes nothing") {
  const scene::SceneFrame frame = rendered_frame(scene::RoadKind::kStraight, 45);
  const PatchSpec patch = small_patch({0.0, 0.0, -30.0});
  const scene::ImageSet out = interf::composite_patch(frame.images, frame.rig, patch);
  CHECK(max_pixel_delta(out, frame.images) == 0.0);
}

TEST_CASE("all-black mask leaves images unchanged") {
  const scene::SceneFrame frame = rendered_frame(scene::RoadKind::kStraight, 46);
  PatchSpec patch = small_patch({2.0, 12.0, 1.0});
  patch.mask.assign(static_cast<std::size_t>(patch.pattern.width) * patch.pattern.height, 0);
  const scene::ImageSet out = interf::composite_patch(frame.images, frame.rig, patch);
  CHECK(max_pixel_delta(out, frame.images) == 0.0);
}

TEST_CASE("uniform red patch covers a footprint consistent with the projected quad") {
  const scene::SceneFrame frame = rendered_frame(scene::RoadKind::kStraight, 47);
  // Facing the front camera, high enough that the board clears the ground line.
  const PatchSpec patch = small_patch({0.0, 16.0, 1.2});
  const scene::ImageSet out = interf::composite_patch(frame.images, frame.rig, patch);
  const img::Image& view = out.at("front");

  std::size_t red_count = 0;
  for (int y = 0; y < view.height; ++y) {
    for (int x = 0; x < view.width; ++x) {
      const float* px = view.at(x, y);
      if (px[0] > 0.95f && px[1] < 0.05f && px[2] < 0.05f) ++red_count;
    }
  }
  REQUIRE(red_count > 0);

  // Analytic projected-quad area via the shoelace formula on the corners.
  const cam::CameraModel& front = *frame.rig.find("front");
  std::vector<Vec2> quad;
  const double w = patch.pattern.width, h = patch.pattern.height;
  const double corners[4][2] = {{0, 0}, {w, 0}, {w, h}, {0, h}};
  for (const auto& c : corners) {
    const Vec3 world = matrix_oracle(patch, c[0], c[1]);
    const auto px = front.project(world);
    REQUIRE(px.has_value());
    quad.push_back(*px);
  }
  double area = 0.0;
  for (std::size_t i = 0; i < 4; ++i) area += quad[i].cross(quad[(i + 1) % 4]);
  area = std::abs(area) / 2.0;
  CHECK(static_cast<double>(red_count) == doctest::Approx(area).epsilon(0.05));
}

TEST_CASE("patch compositing is idempotent for opaque masks") {
  const scene::SceneFrame frame = rendered_frame(scene::RoadKind::kFork, 48);
  const PatchSpec patch = small_patch({3.8, 13.0, 1.0}, 0.3);
  const scene::ImageSet once = interf::composite_patch(frame.images, frame.rig, patch);
  const scene::ImageSet twice = interf::composite_patch(once, frame.rig, patch);
  CHECK(max_pixel_delta(once, twice) == 0.0);
}

TEST_CASE("projected patch center coincides with the projection of its center") {
  const scene::SceneFrame frame = rendered_frame(scene::RoadKind::kStraight, 49);
  const PatchSpec patch = small_patch({1.0, 18.0, 1.3});
  const cam::CameraModel& front = *frame.rig.find("front");
  const auto center_px = front.project(patch.center);
  REQUIRE(center_px.has_value());
  const scene::ImageSet out = interf::composite_patch(frame.images, frame.rig, patch);
  const img::Image& view = out.at("front");
  const float* px = view.at(static_cast<int>(center_px->x), static_cast<int>(center_px->y));
  CHECK(px[0] > 0.95f);
  CHECK(px[1] < 0.05f);
}

TEST_CASE("apply_attack dispatches and validates") {
  const scene::SceneFrame frame = rendered_frame(scene::RoadKind::kStraight, 50);
  AttackConfig cfg;
  cfg.kind = AttackKind::kPatch;
  CHECK_THROWS_AS(interf::apply_attack(frame.images, frame.rig, cfg), ConfigError);
  cfg.patch = small_patch({0.0, 16.0, 1.2});
  const scene::ImageSet a = interf::apply_attack(frame.images, frame.rig, cfg);
  const scene::ImageSet b = interf::apply_attack(frame.images, frame.rig, cfg);
  CHECK(max_pixel_delta(a, b) == 0.0);
}

TEST_CASE("patch save/load round-trips geometry and pattern") {
  const auto dir = std::filesystem::temp_directory_path() / "mapattack_test_patch";
  std::filesystem::create_directories(dir);
  PatchSpec patch = small_patch({4.0, 11.0, 1.0}, 0.7);
  img::quantize_to_8bit(patch.pattern);
  interf::save_patch(patch, dir / "p.png");
  const PatchSpec back = interf::load_patch(dir / "p.png");
  CHECK(back.width_m == doctest::Approx(patch.width_m));
  CHECK(back.height_m == doctest::Approx(patch.height_m));
  CHECK(back.alpha == doctest::Approx(patch.alpha));
  CHECK(back.center.x == doctest::Approx(patch.center.x));
  CHECK(back.pattern == patch.pattern);
}
