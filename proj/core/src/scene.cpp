#include "mapattack/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mapattack/errors.hpp"
#include "mapattack/rng.hpp"
#include "mapattack/version.hpp"

namespace mapattack::scene {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kRoadBack = -12.0;   // boundary extent behind ego
constexpr double kRoadAhead = 44.0;   // boundary extent ahead of ego
constexpr double kBranchEdge = 26.0;  // lateral extent branch tails run to

using json = nlohmann::ordered_json;

struct PolyBuilder {
  std::vector<Vec2> pts;

  void add(const Vec2& p) {
    if (!pts.empty() && (p - pts.back()).norm() < 1e-6) return;
    pts.push_back(p);
  }
  void line_to(const Vec2& p, double step = 0.5) {
    if (pts.empty()) {
      pts.push_back(p);
      return;
    }
    const Vec2 from = pts.back();
    const double len = (p - from).norm();
    const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
    for (int i = 1; i <= n; ++i) add(from + (p - from) * (static_cast<double>(i) / n));
  }
  /// Circular arc about `center` from angle a0 to a1 (radians, CCW positive).
  void arc(const Vec2& center, double radius, double a0, double a1, double step = 0.2) {
    const double span = a1 - a0;
    const int n = std::max(2, static_cast<int>(std::ceil(std::abs(span) * radius / step)));
    for (int i = (pts.empty() ? 0 : 1); i <= n; ++i) {
      const double a = a0 + span * static_cast<double>(i) / n;
      add(center + Vec2{radius * std::cos(a), radius * std::sin(a)});
    }
  }
  Polyline2D done(MapClass tag) const { return Polyline2D(pts, tag); }
};

Vec2 mirror_x(const Vec2& p, bool flip) { return flip ? Vec2{-p.x, p.y} : p; }

Polyline2D mirror_x(const Polyline2D& poly, bool flip) {
  if (!flip) return poly;
  Polyline2D out = poly;
  for (Vec2& p : out.points) p.x = -p.x;
  return out;
}

/// Inward offset of the diverging boundary; serves as the adjacent-lane
/// centerline for the directional objective.
Polyline2D inward_offset(const Polyline2D& poly, double offset, bool diverge_left) {
  std::vector<Vec2> out;
  out.reserve(poly.points.size());
  for (std::size_t i = 0; i < poly.points.size(); ++i) {
    const Vec2 t = geom::tangent_at(poly.points, i);
    const Vec2 outward = diverge_left ? t.perp() : t.perp() * -1.0;
    out.push_back(poly.points[i] - outward * offset);
  }
  // Offsetting can fold points together around tight corners; drop duplicates.
  std::vector<Vec2> clean;
  for (const Vec2& p : out)
    if (clean.empty() || (p - clean.back()).norm() > 1e-6) clean.push_back(p);
  return Polyline2D(clean, MapClass::kDivider);
}

Polyline2D ped_crossing_rect(double x0, double x1, double y0, double y1) {
  std::vector<Vec2> pts{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}};
  return Polyline2D(pts, MapClass::kPedCrossing);
}

struct Layout {
  std::vector<Polyline2D> map;  // diverging/right designated boundary first, left second
  Polyline2D centerline;
  std::optional<Vec2> anchor;
  bool asymmetric = false;
};

Layout build_straight(const SceneSpec& spec, Rng& rng) {
  const double half = spec.road_width / 2.0;
  Layout out;
  PolyBuilder right;
  right.add({half, kRoadBack});
  right.line_to({half, kRoadAhead});
  PolyBuilder left;
  left.add({-half, kRoadBack});
  left.line_to({-half, kRoadAhead});
  out.map.push_back(right.done(MapClass::kBoundary));
  out.map.push_back(left.done(MapClass::kBoundary));
  out.centerline = inward_offset(out.map[0], 1.75, false);
  (void)rng;
  return out;
}

Layout build_fork(const SceneSpec& spec, Rng& rng) {
  const double half = spec.road_width / 2.0;
  const double anchor_y = spec.anchor_distance;
  const double r_in = spec.turn_radius;
  // Wide enough that the branch corridor stays drivable at the default
  // vehicle turn radius even with a tight corner curb.
  const double branch_w = rng.uniform(5.5, 7.0);
  const double r_out = r_in + branch_w;
  const double mouth = std::sqrt(r_out * r_out - r_in * r_in);
  // The outer edge must leave the straight section after the inner one does.
  const double min_sweep = kPi - std::atan2(mouth, -r_in);
  const double sweep = std::max(rng.uniform(75.0, 90.0) * kPi / 180.0, min_sweep + 2.0 * kPi / 180.0);
  const Vec2 center{half + r_in, anchor_y};
  const double heading_end = kPi / 2.0 - sweep;

  Layout out;
  // Diverging boundary: straight approach, corner arc, tail out of the BEV range.
  PolyBuilder div;
  div.add({half, kRoadBack});
  div.line_to({half, anchor_y});
  div.arc(center, r_in, kPi, kPi - sweep);
  {
    const Vec2 end = div.pts.back();
    const Vec2 dir{std::cos(heading_end), std::sin(heading_end)};
    const double tail = dir.x > 0.2 ? (kBranchEdge - end.x) / dir.x : 12.0;
    div.line_to(end + dir * std::max(4.0, tail));
  }
  // Main-road right edge resumes past the branch mouth and forms the branch's
  // outer edge through the concentric arc.
  PolyBuilder outer;
  outer.add({half, kRoadAhead});
  outer.line_to({half, anchor_y + mouth});
  outer.arc(center, r_out, std::atan2(mouth, -r_in), kPi - sweep);
  {
    const Vec2 end = outer.pts.back();
    const Vec2 dir{std::cos(heading_end), std::sin(heading_end)};
    const double tail = dir.x > 0.2 ? (kBranchEdge - end.x) / dir.x : 12.0;
    outer.line_to(end + dir * std::max(4.0, tail));
  }
  PolyBuilder left;
  left.add({-half, kRoadBack});
  left.line_to({-half, kRoadAhead});

  out.map.push_back(div.done(MapClass::kBoundary));
  out.map.push_back(left.done(MapClass::kBoundary));
  out.map.push_back(outer.done(MapClass::kBoundary));
  out.centerline = inward_offset(out.map[0], 1.75, false);
  out.anchor = Vec2{half, anchor_y};
  out.asymmetric = true;
  return out;
}

/// Lateral S-transition between x offsets using two opposing arcs of radius
/// 1/curvature. Returns the longitudinal length consumed.
double s_transition(PolyBuilder& b, double x_from, double x_to, double y_start, double curvature) {
  const double radius = 1.0 / std::max(curvature, 1e-3);
  const double delta = x_to - x_from;
  const double half_shift = std::abs(delta) / 2.0;
  const double theta = std::acos(std::clamp(1.0 - half_shift / radius, -1.0, 1.0));
  const double dir = delta > 0 ? 1.0 : -1.0;
  // First arc bends toward the target, second bends back to straight.
  const Vec2 c1{x_from + dir * radius, y_start};
  b.arc(c1, radius, kPi, kPi - dir * theta);
  const Vec2 mid = b.pts.back();
  const Vec2 c2{x_to - dir * radius, 2.0 * mid.y - y_start};
  b.arc(c2, radius, -dir * theta, 0.0);
  return b.pts.back().y - y_start;
}

Layout build_merge_or_split(const SceneSpec& spec, Rng& rng, bool split) {
  const double half = spec.road_width / 2.0;
  const double anchor_y = spec.anchor_distance;
  const double extra = rng.uniform(3.2, 4.2);
  Layout out;

  PolyBuilder right;
  const double x_pre = split ? half : half + extra;
  const double x_post = split ? half + extra : half;
  right.add({x_pre, kRoadBack});
  right.line_to({x_pre, anchor_y});
  const double s_len = s_transition(right, x_pre, x_post, anchor_y, spec.branch_curvature);
  right.line_to({x_post, kRoadAhead});

  PolyBuilder left;
  left.add({-half, kRoadBack});
  left.line_to({-half, kRoadAhead});

  out.map.push_back(right.done(MapClass::kBoundary));
  out.map.push_back(left.done(MapClass::kBoundary));
  if (split) {
    // Divider marking the split-off lane.
    PolyBuilder lane;
    lane.add({half, anchor_y + s_len + 1.0});
    lane.line_to({half, kRoadAhead});
    out.map.push_back(lane.done(MapClass::kDivider));
  }
  out.centerline = inward_offset(out.map[0], 1.75, false);
  out.anchor = Vec2{x_pre, anchor_y};
  out.asymmetric = true;
  return out;
}

Layout build_intersection(const SceneSpec& spec, Rng& rng) {
  const double half = spec.road_width / 2.0;
  const double near_y = spec.anchor_distance;
  const double cross_w = rng.uniform(8.0, 11.0);
  const double fillet = rng.uniform(2.0, 3.2);
  const double skew = spec.skew;
  const double fillet_e = skew > 0.0 ? std::max(1.2, fillet - 0.45 * skew) : fillet;
  const double far_y = near_y + cross_w;

  Layout out;
  auto corner_south = [&](double side, double r, double y_shift) {
    // Approach along the main road, quarter fillet, then out along the cross street.
    PolyBuilder b;
    const double x = side * half;
    b.add({x, kRoadBack});
    b.line_to({x, near_y + y_shift - r});
    const Vec2 c{x + side * r, near_y + y_shift - r};
    if (side < 0)
      b.arc(c, r, 0.0, kPi / 2.0);
    else
      b.arc(c, r, kPi, kPi / 2.0);
    b.line_to({side * kBranchEdge, near_y + y_shift});
    return b.done(MapClass::kBoundary);
  };
  auto corner_north = [&](double side, double r, double y_shift) {
    PolyBuilder b;
    const double x = side * half;
    b.add({side * kBranchEdge, far_y + y_shift});
    b.line_to({x + side * r, far_y + y_shift});
    const Vec2 c{x + side * r, far_y + y_shift + r};
    if (side < 0)
      b.arc(c, r, -kPi / 2.0, 0.0);
    else
      b.arc(c, r, -kPi / 2.0, -kPi);
    b.line_to({x, kRoadAhead});
    return b.done(MapClass::kBoundary);
  };

  out.map.push_back(corner_south(+1.0, fillet_e, skew));  // designated right
  out.map.push_back(corner_south(-1.0, fillet, 0.0));     // designated left
  out.map.push_back(corner_north(+1.0, fillet_e, skew));
  out.map.push_back(corner_north(-1.0, fillet, 0.0));

  // Main-road divider with a gap across the junction.
  PolyBuilder div_s;
  div_s.add({0.0, kRoadBack});
  div_s.line_to({0.0, near_y - 1.0});
  out.map.push_back(div_s.done(MapClass::kDivider));
  PolyBuilder div_n;
  div_n.add({0.0, far_y + std::max(skew, 0.0) + 1.0});
  div_n.line_to({0.0, kRoadAhead});
  out.map.push_back(div_n.done(MapClass::kDivider));

  out.centerline = inward_offset(out.map[0], 1.75, false);
  return out;
}

}  // namespace

const Polyline2D& SceneFrame::diverging_boundary() const {
  if (!has_left_boundary() || !has_right_boundary())
    throw InvalidGeometryError("scene lacks designated boundaries");
  if (truth.anchor_xy) {
    const double dl = geom::point_polyline_distance(*truth.anchor_xy, left_boundary().points);
    const double dr = geom::point_polyline_distance(*truth.anchor_xy, right_boundary().points);
    return dl < dr ? left_boundary() : right_boundary();
  }
  return right_boundary();
}

const Polyline2D& SceneFrame::reference_boundary() const {
  const Polyline2D& div = diverging_boundary();
  return &div == &left_boundary() ? right_boundary() : left_boundary();
}

std::vector<const Polyline2D*> SceneFrame::boundaries() const {
  std::vector<const Polyline2D*> out;
  for (const Polyline2D& p : gt_map)
    if (p.class_tag == MapClass::kBoundary) out.push_back(&p);
  return out;
}

BevRange bev_range(const SceneFrame& frame, double margin) {
  BevRange r;
  bool first = true;
  for (const Polyline2D& poly : frame.gt_map) {
    for (const Vec2& p : poly.points) {
      if (first) {
        r = {p.x, p.x, p.y, p.y};
        first = false;
      }
      r.x_min = std::min(r.x_min, p.x);
      r.x_max = std::max(r.x_max, p.x);
      r.y_min = std::min(r.y_min, p.y);
      r.y_max = std::max(r.y_max, p.y);
    }
  }
  if (first) throw InvalidGeometryError("scene has no map elements");
  r.x_min -= margin;
  r.x_max += margin;
  r.y_min -= margin;
  r.y_max += margin;
  return r;
}

std::string to_string(RoadKind k) {
  switch (k) {
    case RoadKind::kStraight:
      return "straight";
    case RoadKind::kFork:
      return "fork";
    case RoadKind::kMerge:
      return "merge";
    case RoadKind::kSplit:
      return "split";
    case RoadKind::kIntersection:
      return "intersection";
  }
  return "straight";
}

RoadKind road_kind_from_string(const std::string& s) {
  if (s == "straight") return RoadKind::kStraight;
  if (s == "fork") return RoadKind::kFork;
  if (s == "merge") return RoadKind::kMerge;
  if (s == "split") return RoadKind::kSplit;
  if (s == "intersection") return RoadKind::kIntersection;
  throw ConfigError("unknown road kind: " + s);
}

SceneFrame generate_scene(const SceneSpec& spec) {
  if (spec.road_width <= 0.0) throw ConfigError("road_width must be > 0");
  if (spec.anchor_distance <= 0.0) throw ConfigError("anchor_distance must be > 0");
  if (spec.turn_radius <= 0.0) throw ConfigError("turn_radius must be > 0");
  if ((spec.road_kind == RoadKind::kMerge || spec.road_kind == RoadKind::kSplit) &&
      spec.branch_curvature <= 0.0)
    throw ConfigError("branch_curvature must be > 0 for merge/split scenes");

  Rng rng(Rng::mix(spec.seed, static_cast<std::uint64_t>(spec.road_kind)));
  Layout layout;
  switch (spec.road_kind) {
    case RoadKind::kStraight:
      layout = build_straight(spec, rng);
      break;
    case RoadKind::kFork:
      layout = build_fork(spec, rng);
      break;
    case RoadKind::kMerge:
      layout = build_merge_or_split(spec, rng, false);
      break;
    case RoadKind::kSplit:
      layout = build_merge_or_split(spec, rng, true);
      break;
    case RoadKind::kIntersection:
      layout = build_intersection(spec, rng);
      break;
  }

  SceneFrame frame;
  frame.road_kind = spec.road_kind;
  {
    std::ostringstream id;
    id << to_string(spec.road_kind) << "_" << std::hex << spec.seed;
    frame.scene_id = id.str();
  }

  const bool flip = spec.diverge_left;
  for (const Polyline2D& poly : layout.map) frame.gt_map.push_back(mirror_x(poly, flip));
  frame.centerline = mirror_x(layout.centerline, flip);
  frame.right_boundary_index = flip ? 1 : 0;
  frame.left_boundary_index = flip ? 0 : 1;
  frame.truth.asymmetric = layout.asymmetric;
  if (layout.anchor) frame.truth.anchor_xy = mirror_x(*layout.anchor, flip);

  // Optional lane divider and pedestrian crossing for class coverage.
  if (spec.road_kind != RoadKind::kIntersection && spec.road_kind != RoadKind::kSplit &&
      rng.bernoulli(0.9)) {
    PolyBuilder div;
    div.add({0.0, kRoadBack});
    div.line_to({0.0, kRoadAhead});
    frame.gt_map.push_back(div.done(MapClass::kDivider));
  }
  if (rng.bernoulli(0.7)) {
    const double half = spec.road_width / 2.0;
    const double y0 = spec.road_kind == RoadKind::kIntersection
                          ? spec.anchor_distance - 4.5
                          : rng.uniform(4.0, std::min(8.0, spec.anchor_distance - 4.0));
    // Clear of the boundary corridor so crossing edges never compete with curbs.
    frame.gt_map.push_back(ped_crossing_rect(-half + 2.3, half - 2.3, y0, y0 + 2.2));
  }

  frame.rig = cam::default_rig(spec.image_width, spec.image_height, spec.hfov_deg);
  frame.ego_pose = EgoPose{};

  // Spec validity rule: designated boundaries must be at least 10 m long.
  if (frame.left_boundary().length() < 10.0 || frame.right_boundary().length() < 10.0)
    throw ConfigError("generated boundaries shorter than 10 m");
  return frame;
}

void render_surround_views(SceneFrame& frame, const RenderConfig& cfg) {
  frame.rig.validate();
  frame.images.clear();

  for (const cam::CameraModel& camera : frame.rig.cameras) {
    img::Image view(camera.width, camera.height);
    const Vec3 right = camera.rotation.transposed() * Vec3{1, 0, 0};
    const Vec3 down = camera.rotation.transposed() * Vec3{0, 1, 0};
    const Vec3 fwd = camera.forward_axis();
    const Vec3 origin = camera.position();
    for (int y = 0; y < view.height; ++y) {
      for (int x = 0; x < view.width; ++x) {
        const double a = (x + 0.5 - camera.cx) / camera.fx;
        const double b = (y + 0.5 - camera.cy) / camera.fy;
        const Vec3 dir{a * right.x + b * down.x + fwd.x, a * right.y + b * down.y + fwd.y,
                       a * right.z + b * down.z + fwd.z};
        view.set(x, y, dir.z < -1e-9 && origin.z > 0.0 ? cfg.ground : cfg.sky);
      }
    }

    auto draw_polyline = [&](const Polyline2D& poly, const img::Color& color, double cap_px,
                             double width_m) {
      const std::vector<double> cum = geom::cumulative_arclength(poly.points);
      const double total = cum.back();
      const int n = std::max(1, static_cast<int>(std::ceil(total / cfg.sample_step_m)));
      for (int i = 0; i <= n; ++i) {
        const double s = total * static_cast<double>(i) / n;
        const Vec2 p = geom::point_at_arclength(poly.points, cum, s);
        if (const auto px = camera.project({p.x, p.y, 0.0})) {
          const Vec3 in_cam = camera.rotation * Vec3{p.x, p.y, 0.0} + camera.translation;
          const double radius =
              std::clamp(0.5 * width_m * camera.fx / in_cam.z, cfg.min_stroke_px, cap_px);
          img::stamp_disk(view, px->x, px->y, radius, color);
        }
      }
    };

    // Painter's order: crossings, then dividers, then curbs on top.
    for (const Polyline2D& poly : frame.gt_map) {
      if (poly.class_tag != MapClass::kPedCrossing) continue;
      draw_polyline(poly, cfg.ped, cfg.divider_stroke_px, cfg.divider_width_m);
      double x0 = poly.points[0].x, x1 = x0, y0 = poly.points[0].y, y1 = y0;
      for (const Vec2& p : poly.points) {
        x0 = std::min(x0, p.x);
        x1 = std::max(x1, p.x);
        y0 = std::min(y0, p.y);
        y1 = std::max(y1, p.y);
      }
      for (double sx = x0 + 0.7; sx < x1 - 0.3; sx += 1.0) {
        const Polyline2D stripe({{sx, y0 + 0.25}, {sx, y1 - 0.25}}, MapClass::kPedCrossing);
        draw_polyline(stripe, cfg.ped, cfg.divider_stroke_px, cfg.divider_width_m);
      }
    }
    for (const Polyline2D& poly : frame.gt_map)
      if (poly.class_tag == MapClass::kDivider)
        draw_polyline(poly, cfg.divider, cfg.divider_stroke_px, cfg.divider_width_m);
    for (const Polyline2D& poly : frame.gt_map)
      if (poly.class_tag == MapClass::kBoundary)
        draw_polyline(poly, cfg.curb, cfg.stroke_px, cfg.curb_width_m);

    img::quantize_to_8bit(view);
    frame.images.emplace(camera.id, std::move(view));
  }
}

// --- persistence -------------------------------------------------------------

namespace {

json polyline_to_json(const Polyline2D& poly) {
  json pts = json::array();
  for (const Vec2& p : poly.points) pts.push_back(json::array({p.x, p.y}));
  return json{{"class", geom::to_string(poly.class_tag)}, {"points", pts}};
}

Polyline2D polyline_from_json(const json& j) {
  std::vector<Vec2> pts;
  for (const auto& p : j.at("points")) pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return Polyline2D(pts, geom::map_class_from_string(j.at("class").get<std::string>()));
}

json camera_to_json(const cam::CameraModel& c) {
  json rot = json::array();
  for (double v : c.rotation.m) rot.push_back(v);
  return json{{"id", c.id},           {"fx", c.fx},
              {"fy", c.fy},           {"cx", c.cx},
              {"cy", c.cy},           {"rotation", rot},
              {"translation", json::array({c.translation.x, c.translation.y, c.translation.z})},
              {"width", c.width},     {"height", c.height}};
}

cam::CameraModel camera_from_json(const json& j) {
  cam::CameraModel c;
  c.id = j.at("id").get<std::string>();
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  const auto& rot = j.at("rotation");
  for (int i = 0; i < 9; ++i) c.rotation.m[i] = rot.at(i).get<double>();
  const auto& t = j.at("translation");
  c.translation = {t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()};
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  c.validate();
  return c;
}

}  // namespace

void save_scene(const SceneFrame& frame, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  json manifest;
  manifest["schema_version"] = kSchemaVersion;
  manifest["scene_id"] = frame.scene_id;
  manifest["road_kind"] = to_string(frame.road_kind);
  json map = json::array();
  for (const Polyline2D& poly : frame.gt_map) map.push_back(polyline_to_json(poly));
  manifest["gt_map"] = std::move(map);
  manifest["boundaries"] = json{{"left", frame.left_boundary_index},
                                {"right", frame.right_boundary_index}};
  manifest["centerline"] = polyline_to_json(frame.centerline);
  manifest["ego_pose"] = json{{"x", frame.ego_pose.x}, {"y", frame.ego_pose.y},
                              {"heading", frame.ego_pose.heading}};
  json cams = json::array();
  for (const cam::CameraModel& c : frame.rig.cameras) cams.push_back(camera_to_json(c));
  manifest["rig"] = json{{"cameras", std::move(cams)}};

  json files = json::object();
  json checksums = json::object();
  for (const auto& [cam_id, image] : frame.images) {
    const std::string name = frame.scene_id + "_" + cam_id + ".png";
    img::write_png(dir / name, image);
    files[cam_id] = name;
    checksums[cam_id] = img::crc32_of_file(dir / name);
  }
  manifest["image_files"] = std::move(files);
  manifest["image_checksums"] = std::move(checksums);

  json truth;
  truth["asym_label"] = frame.truth.asymmetric;
  if (frame.truth.anchor_xy)
    truth["anchor_xy"] = json::array({frame.truth.anchor_xy->x, frame.truth.anchor_xy->y});
  else
    truth["anchor_xy"] = nullptr;
  manifest["truth"] = std::move(truth);

  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
}

SceneFrame load_scene(const std::filesystem::path& dir) {
  const std::filesystem::path manifest_path =
      std::filesystem::is_directory(dir) ? dir / "manifest.json" : dir;
  std::ifstream in(manifest_path);
  if (!in) throw IoError("missing scene manifest: " + manifest_path.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::parse_error& e) {
    throw DecodeError("bad scene manifest: " + std::string(e.what()), e.byte);
  }

  const int version = manifest.at("schema_version").get<int>();
  if (version != kSchemaVersion)
    throw SchemaVersionError("unsupported scene schema_version " + std::to_string(version));

  SceneFrame frame;
  frame.scene_id = manifest.at("scene_id").get<std::string>();
  frame.road_kind = road_kind_from_string(manifest.at("road_kind").get<std::string>());
  for (const auto& j : manifest.at("gt_map")) frame.gt_map.push_back(polyline_from_json(j));
  frame.left_boundary_index = manifest.at("boundaries").at("left").get<int>();
  frame.right_boundary_index = manifest.at("boundaries").at("right").get<int>();
  frame.centerline = polyline_from_json(manifest.at("centerline"));
  frame.ego_pose.x = manifest.at("ego_pose").at("x").get<double>();
  frame.ego_pose.y = manifest.at("ego_pose").at("y").get<double>();
  frame.ego_pose.heading = manifest.at("ego_pose").at("heading").get<double>();
  for (const auto& j : manifest.at("rig").at("cameras"))
    frame.rig.cameras.push_back(camera_from_json(j));
  frame.rig.validate();

  const auto& truth = manifest.at("truth");
  frame.truth.asymmetric = truth.at("asym_label").get<bool>();
  if (!truth.at("anchor_xy").is_null()) {
    frame.truth.anchor_xy =
        Vec2{truth.at("anchor_xy").at(0).get<double>(), truth.at("anchor_xy").at(1).get<double>()};
  }

  const std::filesystem::path base = manifest_path.parent_path();
  for (const auto& [cam_id, file] : manifest.at("image_files").items()) {
    const std::filesystem::path path = base / file.get<std::string>();
    if (!std::filesystem::exists(path))
      throw IoError("missing image for camera " + cam_id + ": " + path.string());
    if (manifest.contains("image_checksums")) {
      const std::uint32_t want = manifest.at("image_checksums").at(cam_id).get<std::uint32_t>();
      if (img::crc32_of_file(path) != want)
        throw ChecksumError("image checksum mismatch for camera " + cam_id);
    }
    try {
      frame.images.emplace(cam_id, img::read_png(path));
    } catch (const DecodeError& e) {
      throw DecodeError("camera " + cam_id + ": " + e.what(), e.byte_offset());
    }
    const cam::CameraModel* model = frame.rig.find(cam_id);
    if (!model) throw DecodeError("image for unknown camera " + cam_id);
    const img::Image& image = frame.images.at(cam_id);
    if (image.width != model->width || image.height != model->height)
      throw DecodeError("image size mismatch for camera " + cam_id);
  }
  return frame;
}

SceneSpec suite_spec(RoadKind kind, std::uint64_t suite_seed, int index) {
  Rng rng(Rng::mix(suite_seed, 0x5eed0000ull + static_cast<std::uint64_t>(index)));
  SceneSpec spec;
  spec.road_kind = kind;
  spec.seed = rng.next_u64();
  spec.road_width = rng.uniform(6.5, 8.0);
  spec.anchor_distance = rng.uniform(10.0, 18.0);
  spec.turn_radius = rng.uniform(2.2, 2.8);
  spec.branch_curvature = rng.uniform(0.36, 0.5);
  spec.diverge_left = rng.bernoulli(0.5);
  return spec;
}

}  // namespace mapattack::scene
