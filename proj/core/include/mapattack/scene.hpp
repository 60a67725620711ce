#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mapattack/camera.hpp"
#include "mapattack/geometry.hpp"
#include "mapattack/image.hpp"

namespace mapattack::scene {

using geom::MapClass;
using geom::Polyline2D;
using geom::Vec2;
using geom::Vec3;

enum class RoadKind { kStraight, kFork, kMerge, kSplit, kIntersection };

std::string to_string(RoadKind k);
RoadKind road_kind_from_string(const std::string& s);

/// Synthetic scene parameters. Fork/merge/split produce exactly one diverging
/// boundary whose divergence starts at anchor_distance; straight/intersection
/// are left-right symmetric.
struct SceneSpec {
  RoadKind road_kind = RoadKind::kStraight;
  double road_width = 7.0;        // m between designated boundaries
  double turn_radius = 2.4;       // m, corner radius of the diverging branch (fork)
  double anchor_distance = 14.0;  // m ahead of ego where divergence begins
  double branch_curvature = 0.4;  // 1/m, lateral transition curvature (merge/split)
  std::uint64_t seed = 0;
  bool diverge_left = false;      // mirror the asymmetric layouts
  double skew = 0.0;              // intersection corner asymmetry (VLM fixtures); 0 = symmetric

  // Rendering / rig parameters.
  int image_width = 400;
  int image_height = 300;
  double hfov_deg = 80.0;
};

struct SceneTruth {
  bool asymmetric = false;
  std::optional<Vec2> anchor_xy;
};

struct EgoPose {
  double x = 0.0;
  double y = 0.0;
  double heading = 1.5707963267948966;  // facing +y
};

struct BevRange {
  double x_min = 0, x_max = 0, y_min = 0, y_max = 0;
};

using ImageSet = std::map<std::string, img::Image>;

struct SceneFrame {
  std::string scene_id;
  RoadKind road_kind = RoadKind::kStraight;
  std::vector<Polyline2D> gt_map;
  int left_boundary_index = -1;   // index into gt_map
  int right_boundary_index = -1;  // index into gt_map
  Polyline2D centerline;          // adjacent-lane centerline next to the diverging boundary
  cam::CameraRig rig;
  ImageSet images;  // camera id -> raster; empty until rendered
  EgoPose ego_pose;
  SceneTruth truth;

  bool has_left_boundary() const { return left_boundary_index >= 0; }
  bool has_right_boundary() const { return right_boundary_index >= 0; }
  const Polyline2D& left_boundary() const { return gt_map.at(left_boundary_index); }
  const Polyline2D& right_boundary() const { return gt_map.at(right_boundary_index); }
  /// The diverging designated boundary on asymmetric scenes.
  const Polyline2D& diverging_boundary() const;
  const Polyline2D& reference_boundary() const;
  std::vector<const Polyline2D*> boundaries() const;
};

/// Bounding box of the GT map plus a margin; used for lattices and occupancy.
BevRange bev_range(const SceneFrame& frame, double margin = 4.0);

/// Deterministic for a given spec (seed included). Does not render images.
SceneFrame generate_scene(const SceneSpec& spec);

struct RenderConfig {
  img::Color ground{0.34f, 0.34f, 0.36f};
  img::Color sky{0.62f, 0.74f, 0.92f};
  img::Color curb{0.93f, 0.93f, 0.95f};
  img::Color divider{0.85f, 0.75f, 0.25f};
  img::Color ped{0.78f, 0.78f, 0.80f};
  // Strokes have a physical width projected through the camera, capped in
  // pixel space so nearby curbs do not become flat-interior bands.
  double stroke_px = 2.5;          // curb stroke radius cap, pixels
  double divider_stroke_px = 1.8;
  double curb_width_m = 0.35;      // physical curb paint width
  double divider_width_m = 0.25;
  double min_stroke_px = 0.9;      // radius floor, pixels
  double sample_step_m = 0.05;     // world-space stroke sampling step
};

/// Rasterizes ground plane, curbs, dividers, ped crossings and sky into every
/// camera; output pixels are quantized to the 8-bit grid. Pure and
/// deterministic in (frame geometry, config).
void render_surround_views(SceneFrame& frame, const RenderConfig& cfg = {});

/// Scene persistence: JSON manifest plus one PNG per camera in `dir`.
void save_scene(const SceneFrame& frame, const std::filesystem::path& dir);
SceneFrame load_scene(const std::filesystem::path& dir);

/// Random suite generation helper: spec for the i-th scene of a seeded suite.
SceneSpec suite_spec(RoadKind kind, std::uint64_t suite_seed, int index);

}  // namespace mapattack::scene
