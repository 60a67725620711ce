#include <doctest.h>

#include <cmath>

#include "mapattack/classifier.hpp"
#include "mapattack/errors.hpp"
#include "mapattack/rng.hpp"
#include "mapattack/scene.hpp"

using namespace mapattack;
using cls::RuleThresholds;
using cls::RuleVerdict;
using cls::SceneLabel;
using geom::Polyline2D;
using geom::Vec2;

namespace {

constexpr double kPi = 3.14159265358979323846;

Polyline2D straight_line(double x, double y0 = -12, double y1 = 40, double step = 0.5) {
  std::vector<Vec2> pts;
  for (double y = y0; y <= y1 + 1e-9; y += step) pts.push_back({x, y});
  return Polyline2D(pts, geom::MapClass::kBoundary);
}

Polyline2D arc_boundary(double radius, double x_offset) {
  // Concentric arc centered left of the road, sweeping ahead of the ego.
  std::vector<Vec2> pts;
  for (double a = -25.0; a <= 25.0; a += 0.5) {
    const double r = a * kPi / 180.0;
    pts.push_back({x_offset - radius * (1.0 - std::cos(r)), radius * std::sin(r)});
  }
  return Polyline2D(pts, geom::MapClass::kBoundary);
}

}  // namespace

TEST_CASE("parallel straights classify symmetric with no anchors") {
  const RuleVerdict v = cls::classify_rule_based(straight_line(-3.5), straight_line(3.5), {});
  CHECK(v.label == SceneLabel::kSymmetric);
  CHECK(v.dk_max == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(v.anchors.empty());
  CHECK(v.diverging_side == cls::Side::kNone);
}

TEST_CASE("missing boundary yields the no_boundary verdict") {
  const RuleVerdict v = cls::classify_rule_based(std::nullopt, straight_line(3.5), {});
  CHECK(v.label == SceneLabel::kNoBoundary);
  const RuleVerdict v2 = cls::classify_rule_based(straight_line(-3.5), std::nullopt, {});
  CHECK(v2.label == SceneLabel::kNoBoundary);
}

TEST_CASE("generated fork classifies asymmetric with an anchor near the truth") {
  scene::SceneSpec spec;
  spec.road_kind = scene::RoadKind::kFork;
  spec.turn_radius = 2.0;  // branch curvature ~0.5
  spec.anchor_distance = 14.0;
  spec.seed = 5;
  const scene::SceneFrame frame = scene::generate_scene(spec);
  const RuleVerdict v =
      cls::classify_rule_based(frame.left_boundary(), frame.right_boundary(), {});
  REQUIRE(v.label == SceneLabel::kAsymmetric);
  CHECK(v.diverging_side == cls::Side::kRight);
  REQUIRE_FALSE(v.anchors.empty());
  const Vec2 truth = *frame.truth.anchor_xy;
  CHECK((v.anchors.front() - truth).norm() < 2.0);
}

TEST_CASE("concentric symmetric curve stays symmetric") {
  // Both boundaries on concentric arcs (radius 50 and 43): dk ~ 0.0033 << 0.3.
  const Polyline2D outer = arc_boundary(50.0, -3.5);
  const Polyline2D inner = arc_boundary(43.0, 3.5);
  const RuleVerdict v = cls::classify_rule_based(outer, inner, {});
  CHECK(v.label == SceneLabel::kSymmetric);
  CHECK(v.dk_max < 0.01);
}

TEST_CASE("swapping left and right mirrors the diverging side") {
  scene::SceneSpec spec;
  spec.road_kind = scene::RoadKind::kFork;
  spec.turn_radius = 2.2;
  spec.seed = 6;
  const scene::SceneFrame frame = scene::generate_scene(spec);
  const RuleVerdict a =
      cls::classify_rule_based(frame.left_boundary(), frame.right_boundary(), {});
  const RuleVerdict b =
      cls::classify_rule_based(frame.right_boundary(), frame.left_boundary(), {});
  CHECK(a.label == b.label);
  CHECK(a.dk_max == doctest::Approx(b.dk_max).epsilon(1e-12));
  REQUIRE(a.label == SceneLabel::kAsymmetric);
  CHECK(a.diverging_side == cls::Side::kRight);
  CHECK(b.diverging_side == cls::Side::kLeft);
  REQUIRE(a.anchors.size() == b.anchors.size());
  for (std::size_t i = 0; i < a.anchors.size(); ++i)
    CHECK((a.anchors[i] - b.anchors[i]).norm() < 1e-9);
}

TEST_CASE("rigid transform leaves label, dk and anchor-relative positions unchanged") {
  Rng rng(31);
  scene::SceneSpec spec;
  spec.road_kind = scene::RoadKind::kFork;
  spec.turn_radius = 2.5;
  spec.seed = 7;
  const scene::SceneFrame frame = scene::generate_scene(spec);
  const Polyline2D& left = frame.left_boundary();
  const Polyline2D& right = frame.right_boundary();
  const RuleVerdict base = cls::classify_rule_based(left, right, {});
  REQUIRE(base.label == SceneLabel::kAsymmetric);

  for (int trial = 0; trial < 10; ++trial) {
    const double rot = rng.uniform(-kPi, kPi);
    const Vec2 t{rng.uniform(-30, 30), rng.uniform(-30, 30)};
    const RuleVerdict moved = cls::classify_rule_based(geom::rigid_transformed(left, rot, t),
                                                       geom::rigid_transformed(right, rot, t), {});
    CHECK(moved.label == base.label);
    CHECK(moved.dk_max == doctest::Approx(base.dk_max).epsilon(1e-6));
    REQUIRE(moved.anchors.size() == base.anchors.size());
    const double c = std::cos(rot), s = std::sin(rot);
    for (std::size_t i = 0; i < base.anchors.size(); ++i) {
      const Vec2 want{c * base.anchors[i].x - s * base.anchors[i].y + t.x,
                      s * base.anchors[i].x + c * base.anchors[i].y + t.y};
      CHECK((moved.anchors[i] - want).norm() < 1e-6);
    }
  }
}

TEST_CASE("dataset balance audit counts asymmetric fractions") {
  using cls::SceneLabel;
  CHECK(cls::audit_dataset_balance({}).n_total == 0);
  CHECK(cls::audit_dataset_balance({}).fraction == doctest::Approx(0.0));
  const std::vector<SceneLabel> labels{SceneLabel::kAsymmetric, SceneLabel::kSymmetric,
                                       SceneLabel::kAsymmetric, SceneLabel::kNoBoundary};
  const cls::BalanceAudit audit = cls::audit_dataset_balance(labels);
  CHECK(audit.n_total == 4);
  CHECK(audit.n_asym == 2);
  CHECK(audit.fraction == doctest::Approx(0.5));
  const std::vector<SceneLabel> all_sym(5, SceneLabel::kSymmetric);
  CHECK(cls::audit_dataset_balance(all_sym).fraction == doctest::Approx(0.0));
}

TEST_CASE("thresholds are validated") {
  RuleThresholds th;
  th.dk_thre = -1.0;
  CHECK_THROWS_AS(cls::classify_rule_based(straight_line(-3.5), straight_line(3.5), th),
                  ConfigError);
  th = RuleThresholds{};
  th.window_len = 4;
  CHECK_THROWS_AS(cls::classify_rule_based(straight_line(-3.5), straight_line(3.5), th),
                  ConfigError);
}
