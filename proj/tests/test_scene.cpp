#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "mapattack/classifier.hpp"
#include "mapattack/errors.hpp"
#include "mapattack/geometry.hpp"
#include "mapattack/rng.hpp"
#include "mapattack/scene.hpp"

using namespace mapattack;
using geom::Vec2;
using scene::RoadKind;
using scene::SceneFrame;
using scene::SceneSpec;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "mapattack_test_scene" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("straight scene construction puts boundaries at +-width/2") {
  SceneSpec spec;
  spec.road_kind = RoadKind::kStraight;
  spec.road_width = 7.0;
  spec.seed = 3;
  const SceneFrame frame = scene::generate_scene(spec);
  for (const Vec2& p : frame.left_boundary().points) CHECK(p.x == doctest::Approx(-3.5));
  for (const Vec2& p : frame.right_boundary().points) CHECK(p.x == doctest::Approx(3.5));
  CHECK_FALSE(frame.truth.asymmetric);
  CHECK(frame.left_boundary().length() >= 10.0);
}

TEST_CASE("fork scene has one diverging boundary with the requested curvature") {
  SceneSpec spec;
  spec.road_kind = RoadKind::kFork;
  spec.road_width = 7.0;
  spec.turn_radius = 15.0;
  spec.anchor_distance = 12.0;
  spec.seed = 4;
  const SceneFrame frame = scene::generate_scene(spec);
  REQUIRE(frame.truth.asymmetric);
  REQUIRE(frame.truth.anchor_xy.has_value());
  CHECK(frame.truth.anchor_xy->x == doctest::Approx(3.5));
  CHECK(frame.truth.anchor_xy->y == doctest::Approx(12.0));

  // Post-anchor curvature of the diverging boundary is ~1/15; the left side
  // stays straight.
  const geom::Polyline2D& div = frame.diverging_boundary();
  const auto k = geom::pointwise_curvature(div);
  const std::vector<double> cum = geom::cumulative_arclength(div.points);
  double max_pre = 0.0;
  double max_post = 0.0;
  const double anchor_s = 12.0 - (-12.0);
  for (std::size_t i = 2; i + 2 < k.size(); ++i) {
    if (cum[i] < anchor_s - 1.0)
      max_pre = std::max(max_pre, k[i]);
    else if (cum[i] > anchor_s + 2.0 && cum[i] < anchor_s + 10.0)
      max_post = std::max(max_post, k[i]);
  }
  CHECK(max_pre < 0.01);
  CHECK(max_post == doctest::Approx(1.0 / 15.0).epsilon(0.08));
  const auto k_left = geom::pointwise_curvature(frame.reference_boundary());
  for (double v : k_left) CHECK(v < 1e-6);
}

TEST_CASE("same spec and seed give bit-identical scenes") {
  SceneSpec spec;
  spec.road_kind = RoadKind::kFork;
  spec.seed = 77;
  const SceneFrame a = scene::generate_scene(spec);
  const SceneFrame b = scene::generate_scene(spec);
  REQUIRE(a.gt_map.size() == b.gt_map.size());
  for (std::size_t i = 0; i < a.gt_map.size(); ++i) {
    REQUIRE(a.gt_map[i].size() == b.gt_map[i].size());
    for (std::size_t j = 0; j < a.gt_map[i].size(); ++j) {
      CHECK(a.gt_map[i].points[j].x == b.gt_map[i].points[j].x);
      CHECK(a.gt_map[i].points[j].y == b.gt_map[i].points[j].y);
    }
  }
  CHECK(a.truth.anchor_xy->x == b.truth.anchor_xy->x);
}

TEST_CASE("rendering stamps curb strokes where boundaries project") {
  SceneSpec spec;
  spec.road_kind = RoadKind::kStraight;
  spec.seed = 8;
  SceneFrame frame = scene::generate_scene(spec);
  scene::render_surround_views(frame);
  REQUIRE(frame.images.size() == 6);

  const cam::CameraModel& front = *frame.rig.find("front");
  const img::Image& view = frame.images.at("front");
  const scene::RenderConfig cfg;
  int checked = 0;
  for (double y = 6.0; y <= 24.0; y += 3.0) {
    const auto px = front.project({3.5, y, 0.0});
    if (!px) continue;
    // A curb-colored pixel must sit within 1 px of the projection.
    bool found = false;
    for (int dy = -1; dy <= 1 && !found; ++dy) {
      for (int dx = -1; dx <= 1 && !found; ++dx) {
        const int x = static_cast<int>(px->x) + dx;
        const int yy = static_cast<int>(px->y) + dy;
        if (!view.in_bounds(x, yy)) continue;
        const float* p = view.at(x, yy);
        found = std::abs(p[0] - cfg.curb[0]) < 0.03f && std::abs(p[1] - cfg.curb[1]) < 0.03f;
      }
    }
    CHECK(found);
    ++checked;
  }
  CHECK(checked >= 4);
}

TEST_CASE("scene with no map elements renders only ground and sky") {
  SceneSpec spec;
  spec.road_kind = RoadKind::kStraight;
  spec.seed = 9;
  SceneFrame frame = scene::generate_scene(spec);
  frame.gt_map.clear();
  scene::render_surround_views(frame);
  const scene::RenderConfig cfg;
  for (const auto& [cam_id, view] : frame.images) {
    (void)cam_id;
    for (std::size_t i = 0; i < view.data.size(); i += 3) {
      const bool ground = std::abs(view.data[i] - cfg.ground[0]) < 0.01f;
      const bool sky = std::abs(view.data[i] - cfg.sky[0]) < 0.01f;
      REQUIRE((ground || sky));
    }
  }
}

TEST_CASE("rendering twice is deterministic") {
  SceneSpec spec;
  spec.road_kind = RoadKind::kFork;
  spec.seed = 10;
  SceneFrame a = scene::generate_scene(spec);
  SceneFrame b = scene::generate_scene(spec);
  scene::render_surround_views(a);
  scene::render_surround_views(b);
  for (const auto& [cam_id, view] : a.images) CHECK(view == b.images.at(cam_id));
}

TEST_CASE("save/load round-trips a rendered scene") {
  SceneSpec spec;
  spec.road_kind = RoadKind::kSplit;
  spec.seed = 11;
  SceneFrame frame = scene::generate_scene(spec);
  scene::render_surround_views(frame);
  const auto dir = temp_dir("roundtrip");
  scene::save_scene(frame, dir);
  const SceneFrame back = scene::load_scene(dir);
  CHECK(back.scene_id == frame.scene_id);
  CHECK(back.road_kind == frame.road_kind);
  REQUIRE(back.gt_map.size() == frame.gt_map.size());
  for (std::size_t i = 0; i < frame.gt_map.size(); ++i) {
    CHECK(back.gt_map[i].class_tag == frame.gt_map[i].class_tag);
    REQUIRE(back.gt_map[i].size() == frame.gt_map[i].size());
    for (std::size_t j = 0; j < frame.gt_map[i].size(); ++j)
      CHECK((back.gt_map[i].points[j] - frame.gt_map[i].points[j]).norm() == 0.0);
  }
  CHECK(back.left_boundary_index == frame.left_boundary_index);
  CHECK(back.truth.asymmetric == frame.truth.asymmetric);
  REQUIRE(back.images.size() == frame.images.size());
  for (const auto& [cam_id, view] : frame.images) CHECK(back.images.at(cam_id) == view);
}

TEST_CASE("unknown schema version is rejected") {
  SceneSpec spec;
  spec.seed = 12;
  SceneFrame frame = scene::generate_scene(spec);
  scene::render_surround_views(frame);
  const auto dir = temp_dir("schema");
  scene::save_scene(frame, dir);
  // Bump the version in place.
  std::ifstream in(dir / "manifest.json");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const std::string needle = "\"schema_version\": 1";
  text.replace(text.find(needle), needle.size(), "\"schema_version\": 99");
  std::ofstream out(dir / "manifest.json");
  out << text;
  out.close();
  CHECK_THROWS_AS(scene::load_scene(dir), SchemaVersionError);
}

TEST_CASE("truncated image decode error names the camera") {
  SceneSpec spec;
  spec.seed = 13;
  SceneFrame frame = scene::generate_scene(spec);
  scene::render_surround_views(frame);
  const auto dir = temp_dir("truncated");
  scene::save_scene(frame, dir);
  const auto png = dir / (frame.scene_id + "_front.png");
  // Truncate and fix the manifest checksum so the CRC gate passes first.
  std::ifstream in(png, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  bytes.resize(bytes.size() / 3);
  std::ofstream out(png, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();

  try {
    scene::load_scene(dir);
    FAIL("expected an error");
  } catch (const ChecksumError&) {
    // checksum gate caught it first; also acceptable per the manifest contract
  } catch (const DecodeError& e) {
    CHECK(std::string(e.what()).find("front") != std::string::npos);
  }
}

TEST_CASE("missing image file is reported") {
  SceneSpec spec;
  spec.seed = 14;
  SceneFrame frame = scene::generate_scene(spec);
  scene::render_surround_views(frame);
  const auto dir = temp_dir("missing");
  scene::save_scene(frame, dir);
  std::filesystem::remove(dir / (frame.scene_id + "_back.png"));
  CHECK_THROWS_AS(scene::load_scene(dir), IoError);
}

TEST_CASE("generated fork scenes satisfy the classifier's asymmetric criterion") {
  // Links the generator to the classifier as an oracle pair: branch curvature
  // >= 0.35 with a straight reference must classify asymmetric at dk_thre 0.3.
  int checked = 0;
  for (int i = 0; i < 12; ++i) {
    const SceneSpec spec = scene::suite_spec(RoadKind::kFork, 0xf00d, i);
    if (1.0 / spec.turn_radius < 0.35) continue;
    const SceneFrame frame = scene::generate_scene(spec);
    cls::RuleThresholds th;
    const cls::RuleVerdict verdict =
        cls::classify_rule_based(frame.left_boundary(), frame.right_boundary(), th);
    CHECK(verdict.label == cls::SceneLabel::kAsymmetric);
    ++checked;
  }
  CHECK(checked >= 8);
}

TEST_CASE("mirrored scenes diverge on the left") {
  SceneSpec spec;
  spec.road_kind = RoadKind::kFork;
  spec.seed = 21;
  spec.diverge_left = true;
  const SceneFrame frame = scene::generate_scene(spec);
  REQUIRE(frame.truth.anchor_xy.has_value());
  CHECK(frame.truth.anchor_xy->x < 0.0);
  CHECK(&frame.diverging_boundary() == &frame.left_boundary());
}
