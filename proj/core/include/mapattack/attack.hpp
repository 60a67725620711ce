#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mapattack/classifier.hpp"
#include "mapattack/geometry.hpp"
#include "mapattack/interference.hpp"
#include "mapattack/oracle.hpp"
#include "mapattack/scene.hpp"

namespace mapattack::attack {

using geom::Polyline2D;
using geom::Vec2;
using geom::Vec3;
using interf::AttackConfig;
using interf::AttackKind;
using oracle::MapOracle;
using oracle::PredictedMap;
using scene::SceneFrame;

struct RankingParams {
  double phi_max_deg = 30.0;  // maximum influence angle
  std::vector<double> lateral_offsets = {0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 2.5, 3.0};
  double longitudinal_step = 2.0;  // m along each boundary
  std::vector<double> heights = {0.5, 1.0, 1.5, 2.0};
  int top_n = 20;

  void validate() const;
};

struct Candidate {
  Vec3 position;
  double score = 0.0;
  double longitudinal = 0.0;  // arc position along the source boundary
  double height = 0.0;
  double lateral = 0.0;
  int side = 0;  // 0 = right boundary band, 1 = left
};

/// S(p): sum over cameras c and anchors d of (1 - phi/phi_max) / ||p - c||^2
/// where phi is the angle at c between the rays to p and to d (anchors on the
/// ground plane); terms with phi >= phi_max are zero. Candidates closer than
/// 0.1 m to a camera are excluded from that camera's terms.
double score_position(const Vec3& p, const cam::CameraRig& rig, const std::vector<Vec2>& anchors,
                      double phi_max_rad, std::vector<std::string>* log = nullptr);

/// Roadside lattice hugging both designated boundaries: stations every
/// longitudinal_step of arc length, offset outward by each lateral offset, at
/// each height. Deterministic enumeration order (side, station, lateral, height).
std::vector<Candidate> build_position_lattice(const SceneFrame& frame, const RankingParams& params);

/// Scores the lattice and returns the top_n candidates, ties broken by
/// (score desc, longitudinal asc, height asc) and enumeration order.
std::vector<Candidate> rank_positions(const SceneFrame& frame, const std::vector<Vec2>& anchors,
                                      const RankingParams& params);

enum class ObjectiveKind { kStraighten, kEarlyTurn, kUntargeted, kSceneFlip };
enum class FlipDirection { kToSymmetric, kToAsymmetric };

std::string to_string(ObjectiveKind k);
ObjectiveKind objective_kind_from_string(const std::string& s);

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::kStraighten;
  std::optional<Polyline2D> target;  // V_tar for straightening
  double alpha = 1.0;                // directional outward weight
  double beta = 1.0;                 // directional inward weight
  std::optional<Polyline2D> gt_div;
  std::optional<Polyline2D> centerline;
  std::optional<Polyline2D> gt_left;   // untargeted
  std::optional<Polyline2D> gt_right;  // untargeted
  std::optional<FlipDirection> flip_direction;
  double miss_penalty = 50.0;  // m, sentinel for missing predictions
  double corridor = 2.0;       // m, outward cap used by the missing-boundary case
  cls::RuleThresholds flip_thresholds{};

  void validate() const;
};

struct StraighteningFlags {
  bool truncated = false;  // reference shorter than the diverging extent
};

/// Eq-7-style target: keep the diverging boundary up to the anchor, then
/// append the reference boundary shifted laterally by the mean pre-anchor road
/// width toward the diverging side.
Polyline2D make_straightening_target(const Polyline2D& diverging, const Polyline2D& reference,
                                     const Vec2& anchor, StraighteningFlags* flags = nullptr);

/// Boundary-class prediction nearest (by Chamfer) to `like`; nullopt when the
/// prediction contains no boundary elements.
std::optional<Polyline2D> match_boundary(const PredictedMap& pred, const Polyline2D& like);

double straightening_loss(const PredictedMap& pred, const ObjectiveSpec& spec);
double directional_loss(const PredictedMap& pred, const ObjectiveSpec& spec);
double untargeted_loss(const PredictedMap& pred, const ObjectiveSpec& spec);
double scene_flip_loss(const PredictedMap& pred, const ObjectiveSpec& spec);
double objective_loss(const PredictedMap& pred, const ObjectiveSpec& spec);

/// Mean signed offset of the matched prediction along the outward directions
/// (positive = outward); used by evaluation reports.
std::optional<double> mean_outward_offset(const PredictedMap& pred, const ObjectiveSpec& spec);

struct TraceEntry {
  Vec3 position;
  double loss = 0.0;
  std::uint64_t queries_after = 0;
};

struct SearchTrace {
  std::vector<TraceEntry> entries;
  double best_loss = 0.0;
  std::uint64_t total_queries = 0;
  std::uint64_t seed = 0;
  std::string method;
  /// PGD only: per visited position, the accepted-iteration loss sequence
  /// (initialization included); monotone non-increasing with backtracking on.
  std::vector<std::vector<double>> accepted_by_position;
};

struct PgdParams {
  int cell_rows = 16;
  int cell_cols = 16;
  double step_size = 0.08;     // pattern units per accepted step
  int iters_per_position = 20; // oracle-query allotment per visited position
  double fd_epsilon = 0.06;    // finite-difference probe size
  bool backtracking = true;
  bool random_init = false;    // default initialization is the road surface color
  int upsample = 7;            // final pattern upsampling factor (odd keeps rendering identical)

  void validate() const;
};

struct PatchGeometry {
  double width_m = 3.0;
  double height_m = 2.0;
  img::Color init_color{0.34f, 0.34f, 0.36f};  // renderer road-surface color
};

/// Heuristic search: evaluates ranked candidates in order (one oracle query
/// each) until the budget or candidate list is exhausted; returns the argmin.
std::pair<AttackConfig, SearchTrace> optimize_blackbox(MapOracle& oracle, const SceneFrame& frame,
                                                       const ObjectiveSpec& spec,
                                                       const std::vector<Candidate>& candidates,
                                                       std::uint64_t budget,
                                                       const interf::FlashlightSpec& flashlight);

/// Hybrid search + coarse PGD over patch patterns. Visits the top
/// floor(budget / iters_per_position) candidates and spends exactly
/// iters_per_position oracle queries at each: one initialization evaluation,
/// then sign-projected steps whose gradient comes from central-difference
/// probes along seeded random cell-sign directions (3 queries per step),
/// remaining queries probing further directions. Backtracking halves the step
/// on loss increase. query accounting: positions_visited * iters_per_position.
std::pair<AttackConfig, SearchTrace> optimize_patch(MapOracle& oracle, const SceneFrame& frame,
                                                    const ObjectiveSpec& spec,
                                                    const std::vector<Candidate>& candidates,
                                                    const PgdParams& pgd, std::uint64_t budget,
                                                    const PatchGeometry& geometry,
                                                    std::uint64_t seed);

/// Uniform roadside sampling baseline (no anchor knowledge): both sides, the
/// frame's full longitudinal extent, lateral 0.5-3 m, heights 0.5-2 m.
std::pair<AttackConfig, SearchTrace> random_search(MapOracle& oracle, const SceneFrame& frame,
                                                   const ObjectiveSpec& spec, std::uint64_t budget,
                                                   std::uint64_t seed,
                                                   const interf::FlashlightSpec& flashlight);

/// Particle-swarm baseline over the same roadside region and budget.
std::pair<AttackConfig, SearchTrace> pso_search(MapOracle& oracle, const SceneFrame& frame,
                                                const ObjectiveSpec& spec, std::uint64_t budget,
                                                std::uint64_t seed,
                                                const interf::FlashlightSpec& flashlight);

/// Builds the objective for a frame from verdict context (diverging boundary,
/// reference, centerline, target construction for straightening).
ObjectiveSpec build_objective(ObjectiveKind kind, const SceneFrame& frame,
                              const cls::RuleVerdict& verdict, double alpha = 1.0,
                              double beta = 1.0);

/// Patch spec for a candidate position: board faces the ego origin, bottom
/// edge resting on the ground when the position height allows.
interf::PatchSpec make_patch_at(const Vec3& position, const PatchGeometry& geometry,
                                const img::Image& pattern);

}  // namespace mapattack::attack
