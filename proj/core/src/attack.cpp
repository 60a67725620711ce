#include "mapattack/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mapattack/errors.hpp"
#include "mapattack/rng.hpp"

namespace mapattack::attack {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

void RankingParams::validate() const {
  if (phi_max_deg <= 0.0 || phi_max_deg > 180.0)
    throw ConfigError("phi_max must be in (0, 180] degrees");
  if (top_n < 1) throw ConfigError("top_n must be >= 1");
  if (lateral_offsets.empty() || heights.empty() || longitudinal_step <= 0.0)
    throw ConfigError("candidate lattice is empty");
}

void ObjectiveSpec::validate() const {
  if (alpha < 0.0 || beta < 0.0) throw ConfigError("objective weights must be >= 0");
  switch (kind) {
    case ObjectiveKind::kStraighten:
      if (!target) throw ConfigError("straightening objective needs a target");
      break;
    case ObjectiveKind::kEarlyTurn:
      if (!gt_div || !centerline) throw ConfigError("early-turn objective needs gt_div and centerline");
      break;
    case ObjectiveKind::kUntargeted:
      if (!gt_left || !gt_right) throw ConfigError("untargeted objective needs both GT boundaries");
      break;
    case ObjectiveKind::kSceneFlip:
      if (!flip_direction) throw ConfigError("scene-flip objective needs a direction");
      if (!gt_left || !gt_right) throw ConfigError("scene-flip objective needs both GT boundaries");
      break;
  }
}

std::string to_string(ObjectiveKind k) {
  switch (k) {
    case ObjectiveKind::kStraighten:
      return "straighten";
    case ObjectiveKind::kEarlyTurn:
      return "early_turn";
    case ObjectiveKind::kUntargeted:
      return "untargeted";
    case ObjectiveKind::kSceneFlip:
      return "scene_flip";
  }
  return "straighten";
}

ObjectiveKind objective_kind_from_string(const std::string& s) {
  if (s == "straighten") return ObjectiveKind::kStraighten;
  if (s == "early_turn") return ObjectiveKind::kEarlyTurn;
  if (s == "untargeted") return ObjectiveKind::kUntargeted;
  if (s == "scene_flip") return ObjectiveKind::kSceneFlip;
  throw ConfigError("unknown objective kind: " + s);
}

double score_position(const Vec3& p, const cam::CameraRig& rig, const std::vector<Vec2>& anchors,
                      double phi_max_rad, std::vector<std::string>* log) {
  if (anchors.empty()) throw ConfigError("score_position needs at least one anchor");
  double score = 0.0;
  for (const cam::CameraModel& camera : rig.cameras) {
    const Vec3 c = camera.position();
    const Vec3 to_p = p - c;
    const double dist = to_p.norm();
    if (dist < 0.1) {
      if (log) log->push_back("candidate coincides with camera " + camera.id);
      continue;
    }
    const Vec3 dir_p = to_p * (1.0 / dist);
    for (const Vec2& anchor : anchors) {
      const Vec3 dir_d = (Vec3{anchor.x, anchor.y, 0.0} - c).normalized();
      const double phi = std::acos(std::clamp(dir_p.dot(dir_d), -1.0, 1.0));
      if (phi < phi_max_rad) score += (1.0 - phi / phi_max_rad) / (dist * dist);
    }
  }
  return score;
}

std::vector<Candidate> build_position_lattice(const SceneFrame& frame,
                                              const RankingParams& params) {
  params.validate();
  std::vector<Candidate> out;
  const Polyline2D* sides[2] = {
      frame.has_right_boundary() ? &frame.right_boundary() : nullptr,
      frame.has_left_boundary() ? &frame.left_boundary() : nullptr,
  };
  const Vec2 road_center{0.0, 0.0};
  for (int side = 0; side < 2; ++side) {
    const Polyline2D* boundary = sides[side];
    if (!boundary) continue;
    const std::vector<double> cum = geom::cumulative_arclength(boundary->points);
    const double total = cum.back();
    const int stations = static_cast<int>(std::floor(total / params.longitudinal_step));
    for (int s = 0; s <= stations; ++s) {
      const double arc = std::min(total, s * params.longitudinal_step);
      const Vec2 q = geom::point_at_arclength(boundary->points, cum, arc);
      // Outward: away from the nearest centerline point (ego-side of the road).
      Vec2 away = q - geom::closest_point_on_polyline(q, frame.centerline.points);
      if (away.norm() < 1e-6) away = side == 0 ? Vec2{1.0, 0.0} : Vec2{-1.0, 0.0};
      const Vec2 outward = away.normalized();
      for (double lateral : params.lateral_offsets) {
        const Vec2 xy = q + outward * lateral;
        for (double height : params.heights) {
          Candidate cand;
          cand.position = {xy.x, xy.y, height};
          cand.longitudinal = arc;
          cand.lateral = lateral;
          cand.height = height;
          cand.side = side;
          out.push_back(cand);
        }
      }
    }
  }
  if (out.empty()) throw ConfigError("candidate lattice is empty for this frame");
  return out;
}

std::vector<Candidate> rank_positions(const SceneFrame& frame, const std::vector<Vec2>& anchors,
                                      const RankingParams& params) {
  if (anchors.empty()) throw ConfigError("rank_positions needs a verdict with anchors");
  std::vector<Candidate> lattice = build_position_lattice(frame, params);
  const double phi_max = params.phi_max_deg * kPi / 180.0;
  for (Candidate& cand : lattice)
    cand.score = score_position(cand.position, frame.rig, anchors, phi_max);
  std::stable_sort(lattice.begin(), lattice.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.longitudinal != b.longitudinal) return a.longitudinal < b.longitudinal;
    return a.height < b.height;
  });
  if (lattice.size() > static_cast<std::size_t>(params.top_n))
    lattice.resize(static_cast<std::size_t>(params.top_n));
  return lattice;
}

Polyline2D make_straightening_target(const Polyline2D& diverging, const Polyline2D& reference,
                                     const Vec2& anchor, StraighteningFlags* flags) {
  const Polyline2D div = geom::resample_polyline(diverging, geom::kElementPoints);
  const Polyline2D ref = geom::resample_polyline(reference, geom::kElementPoints);

  // Anchor index on the resampled diverging boundary.
  std::size_t k = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < div.points.size(); ++i) {
    const double d = (div.points[i] - anchor).squared_norm();
    if (d < best) {
      best = d;
      k = i;
    }
  }

  // Mean perpendicular distance from pre-anchor diverging points to the reference.
  double w_avg = 0.0;
  std::size_t n_pre = 0;
  for (std::size_t i = 0; i <= k; ++i) {
    w_avg += geom::point_polyline_distance(div.points[i], ref.points);
    ++n_pre;
  }
  w_avg = n_pre > 0 ? w_avg / static_cast<double>(n_pre) : 0.0;

  // Shift the reference toward the diverging side along its local normals.
  std::vector<Vec2> pts(div.points.begin(), div.points.begin() + k + 1);
  for (std::size_t i = 0; i < ref.points.size(); ++i) {
    const Vec2 normal = geom::tangent_at(ref.points, i).perp();
    const Vec2 to_div = div.points[std::min(i, div.points.size() - 1)] - ref.points[i];
    const double sign = normal.dot(to_div) >= 0.0 ? 1.0 : -1.0;
    const Vec2 shifted = ref.points[i] + normal * (sign * w_avg);
    if (pts.empty() || (shifted - pts.back()).norm() > 1e-9) pts.push_back(shifted);
  }
  if (flags) {
    const double div_extent = geom::cumulative_arclength(div.points).back();
    const double ref_extent = geom::cumulative_arclength(ref.points).back();
    flags->truncated = ref_extent + 1e-9 < div_extent;
  }
  return Polyline2D(pts, geom::MapClass::kBoundary);
}

std::optional<Polyline2D> match_boundary(const PredictedMap& pred, const Polyline2D& like) {
  const Polyline2D like20 = geom::resample_polyline(like, geom::kElementPoints);
  std::optional<Polyline2D> best;
  double best_chamfer = std::numeric_limits<double>::infinity();
  for (const auto& element : pred.elements) {
    if (element.polyline.class_tag != geom::MapClass::kBoundary) continue;
    const Polyline2D cand = geom::resample_polyline(element.polyline, geom::kElementPoints);
    const double d = geom::chamfer_distance(cand, like20);
    if (d < best_chamfer) {
      best_chamfer = d;
      best = cand;
    }
  }
  return best;
}

double straightening_loss(const PredictedMap& pred, const ObjectiveSpec& spec) {
  spec.validate();
  const std::optional<Polyline2D> matched = match_boundary(pred, *spec.target);
  if (!matched) return spec.miss_penalty;
  return geom::chamfer_distance(*matched, geom::resample_polyline(*spec.target, geom::kElementPoints));
}

namespace {

struct DirectionalOffsets {
  std::vector<double> offsets;
};

std::optional<DirectionalOffsets> directional_offsets(const PredictedMap& pred,
                                                      const ObjectiveSpec& spec) {
  const std::optional<Polyline2D> matched = match_boundary(pred, *spec.gt_div);
  if (!matched) return std::nullopt;
  const Polyline2D gt = geom::resample_polyline(*spec.gt_div, geom::kElementPoints);
  const Polyline2D center = geom::resample_polyline(*spec.centerline, geom::kElementPoints);
  const Polyline2D got = *matched;  // already 20 points, index-aligned by resampling
  DirectionalOffsets out;
  out.offsets.reserve(gt.points.size());
  for (std::size_t i = 0; i < gt.points.size(); ++i) {
    const Vec2 d = (gt.points[i] - center.points[std::min(i, center.points.size() - 1)]).normalized();
    out.offsets.push_back((got.points[i] - gt.points[i]).dot(d));
  }
  return out;
}

}  // namespace

double directional_loss(const PredictedMap& pred, const ObjectiveSpec& spec) {
  spec.validate();
  const auto offsets = directional_offsets(pred, spec);
  if (!offsets) {
    // An entirely missing boundary counts as a maximal outward displacement.
    return -spec.alpha * spec.corridor * 2.0;
  }
  double outward = 0.0;
  double inward = 0.0;
  for (double off : offsets->offsets) {
    outward += -std::max(off, 0.0);
    inward += std::max(-off, 0.0);
  }
  const double n = static_cast<double>(offsets->offsets.size());
  return spec.alpha * (outward / n) + spec.beta * (inward / n);
}

std::optional<double> mean_outward_offset(const PredictedMap& pred, const ObjectiveSpec& spec) {
  const auto offsets = directional_offsets(pred, spec);
  if (!offsets) return std::nullopt;
  const double sum = std::accumulate(offsets->offsets.begin(), offsets->offsets.end(), 0.0);
  return sum / static_cast<double>(offsets->offsets.size());
}

double untargeted_loss(const PredictedMap& pred, const ObjectiveSpec& spec) {
  spec.validate();
  double total = 0.0;
  for (const Polyline2D* gt : {&*spec.gt_left, &*spec.gt_right}) {
    const std::optional<Polyline2D> matched = match_boundary(pred, *gt);
    if (!matched) {
      total += -spec.miss_penalty;
      continue;
    }
    total += -geom::chamfer_distance(*matched, geom::resample_polyline(*gt, geom::kElementPoints));
  }
  return total;
}

double scene_flip_loss(const PredictedMap& pred, const ObjectiveSpec& spec) {
  spec.validate();
  const std::optional<Polyline2D> left = match_boundary(pred, *spec.gt_left);
  std::optional<Polyline2D> right;
  {
    // Match the right boundary among elements other than the left match when
    // possible; nearest-Chamfer can legitimately pick the same element when
    // the prediction collapsed both sides.
    right = match_boundary(pred, *spec.gt_right);
  }
  const cls::RuleVerdict verdict = cls::classify_rule_based(left, right, spec.flip_thresholds);
  const double dk = verdict.label == cls::SceneLabel::kNoBoundary ? spec.miss_penalty : verdict.dk_max;
  return *spec.flip_direction == FlipDirection::kToSymmetric ? dk : -dk;
}

double objective_loss(const PredictedMap& pred, const ObjectiveSpec& spec) {
  switch (spec.kind) {
    case ObjectiveKind::kStraighten:
      return straightening_loss(pred, spec);
    case ObjectiveKind::kEarlyTurn:
      return directional_loss(pred, spec);
    case ObjectiveKind::kUntargeted:
      return untargeted_loss(pred, spec);
    case ObjectiveKind::kSceneFlip:
      return scene_flip_loss(pred, spec);
  }
  throw ConfigError("unhandled objective kind");
}

ObjectiveSpec build_objective(ObjectiveKind kind, const SceneFrame& frame,
                              const cls::RuleVerdict& verdict, double alpha, double beta) {
  ObjectiveSpec spec;
  spec.kind = kind;
  spec.alpha = alpha;
  spec.beta = beta;
  if (frame.has_left_boundary()) spec.gt_left = frame.left_boundary();
  if (frame.has_right_boundary()) spec.gt_right = frame.right_boundary();
  spec.centerline = frame.centerline;

  const bool needs_diverging = kind == ObjectiveKind::kStraighten || kind == ObjectiveKind::kEarlyTurn;
  if (needs_diverging) {
    if (verdict.diverging_side == cls::Side::kNone || verdict.anchors.empty())
      throw ConfigError("objective needs an asymmetric verdict with anchors");
    const Polyline2D& div =
        verdict.diverging_side == cls::Side::kLeft ? frame.left_boundary() : frame.right_boundary();
    const Polyline2D& ref =
        verdict.diverging_side == cls::Side::kLeft ? frame.right_boundary() : frame.left_boundary();
    spec.gt_div = div;
    if (kind == ObjectiveKind::kStraighten)
      spec.target = make_straightening_target(div, ref, verdict.anchors.front());
  } else if (kind == ObjectiveKind::kSceneFlip) {
    spec.flip_direction = verdict.label == cls::SceneLabel::kAsymmetric
                              ? FlipDirection::kToSymmetric
                              : FlipDirection::kToAsymmetric;
  }
  spec.validate();
  return spec;
}

std::pair<AttackConfig, SearchTrace> optimize_blackbox(MapOracle& oracle, const SceneFrame& frame,
                                                       const ObjectiveSpec& spec,
                                                       const std::vector<Candidate>& candidates,
                                                       std::uint64_t budget,
                                                       const interf::FlashlightSpec& flashlight) {
  if (budget < 1) throw ConfigError("budget must be >= 1");
  spec.validate();
  SearchTrace trace;
  trace.method = "ranked";
  AttackConfig best;
  best.kind = AttackKind::kBlinding;
  best.flashlight = flashlight;
  double best_loss = std::numeric_limits<double>::infinity();
  bool any = false;

  const std::uint64_t start_queries = oracle.query_count();
  scene::ImageSet scratch;
  for (const Candidate& cand : candidates) {
    if (oracle.query_count() - start_queries >= budget) break;
    interf::render_flare_into(scratch, frame.images, frame.rig, cand.position, flashlight);
    const PredictedMap pred = oracle.predict(scratch, frame);
    const double loss = objective_loss(pred, spec);
    trace.entries.push_back({cand.position, loss, oracle.query_count() - start_queries});
    if (!any || loss < best_loss) {
      any = true;
      best_loss = loss;
      best.position = cand.position;
    }
  }
  if (!any) throw ConfigError("no candidates evaluated within budget");
  trace.best_loss = best_loss;
  trace.total_queries = oracle.query_count() - start_queries;
  return {best, trace};
}

interf::PatchSpec make_patch_at(const Vec3& position, const PatchGeometry& geometry,
                                const img::Image& pattern) {
  interf::PatchSpec spec;
  spec.width_m = geometry.width_m;
  spec.height_m = geometry.height_m;
  spec.pattern = pattern;
  // Board bottom rests on the ground unless the position asks for higher.
  const double min_center = geometry.height_m / 2.0;
  spec.center = {position.x, position.y, std::max(position.z, min_center)};
  // Face the ego origin: board normal (sin a, -cos a, 0) points back at it.
  const Vec2 to_ego = Vec2{-position.x, -position.y}.normalized();
  spec.alpha = std::atan2(to_ego.x, -to_ego.y);
  return spec;
}

void PgdParams::validate() const {
  if (cell_rows < 1 || cell_cols < 1) throw ConfigError("pattern cell grid must be >= 1x1");
  if (step_size <= 0.0 || fd_epsilon <= 0.0) throw ConfigError("PGD steps must be > 0");
  if (iters_per_position < 1) throw ConfigError("iters_per_position must be >= 1");
  if (upsample < 1) throw ConfigError("upsample must be >= 1");
}

namespace {

img::Image clip_pattern(img::Image cells) {
  img::clamp01(cells);
  return cells;
}

// Bilinear refinement at an odd factor keeps every refined knot on the coarse
// grid's bilinear surface (including the clamped border), so compositing the
// upsampled pattern reproduces what the optimizer evaluated.
img::Image upsample_bilinear(const img::Image& cells, int factor) {
  if (factor <= 1) return cells;
  img::Image out(cells.width * factor, cells.height * factor);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const double sx = (x + 0.5) / factor - 0.5;
      const double sy = (y + 0.5) / factor - 0.5;
      out.set(x, y, img::sample_bilinear(cells, sx, sy));
    }
  }
  return out;
}

}  // namespace

std::pair<AttackConfig, SearchTrace> optimize_patch(MapOracle& oracle, const SceneFrame& frame,
                                                    const ObjectiveSpec& spec,
                                                    const std::vector<Candidate>& candidates,
                                                    const PgdParams& pgd, std::uint64_t budget,
                                                    const PatchGeometry& geometry,
                                                    std::uint64_t seed) {
  pgd.validate();
  spec.validate();
  if (budget < static_cast<std::uint64_t>(pgd.iters_per_position))
    throw ConfigError("budget too small for one position");

  const std::uint64_t n_positions =
      std::min<std::uint64_t>(budget / pgd.iters_per_position, candidates.size());
  if (n_positions == 0) throw ConfigError("no candidate positions to visit");

  SearchTrace trace;
  trace.method = "hybrid_pgd";
  trace.seed = seed;
  const std::uint64_t start_queries = oracle.query_count();

  AttackConfig best;
  best.kind = AttackKind::kPatch;
  double best_loss = std::numeric_limits<double>::infinity();
  bool any = false;
  scene::ImageSet scratch;

  for (std::uint64_t pi = 0; pi < n_positions; ++pi) {
    const Candidate& cand = candidates[pi];
    Rng rng(Rng::mix(seed, 0xa77ac0ull + pi));

    img::Image cells(pgd.cell_cols, pgd.cell_rows, geometry.init_color);
    if (pgd.random_init) {
      for (float& v : cells.data) v = static_cast<float>(rng.uniform());
    }

    auto evaluate = [&](const img::Image& pattern_cells) {
      const interf::PatchSpec patch = make_patch_at(cand.position, geometry, pattern_cells);
      interf::composite_patch_into(scratch, frame.images, frame.rig, patch);
      const PredictedMap pred = oracle.predict(scratch, frame);
      const double loss = objective_loss(pred, spec);
      trace.entries.push_back({cand.position, loss, oracle.query_count() - start_queries});
      if (!any || loss < best_loss) {
        any = true;
        best_loss = loss;
        best.position = cand.position;
        best.patch = patch;
      }
      return loss;
    };

    int used = 0;
    double current_loss = evaluate(cells);
    ++used;
    double step = pgd.step_size;
    trace.accepted_by_position.emplace_back();
    trace.accepted_by_position.back().push_back(current_loss);

    while (used + 3 <= pgd.iters_per_position) {
      // Seeded cell-sign direction; central difference along it estimates the
      // directional derivative through the full pipeline.
      std::vector<float> delta(cells.data.size());
      for (float& d : delta) d = static_cast<float>(rng.sign());

      img::Image plus = cells;
      img::Image minus = cells;
      for (std::size_t i = 0; i < cells.data.size(); ++i) {
        plus.data[i] += static_cast<float>(pgd.fd_epsilon) * delta[i];
        minus.data[i] -= static_cast<float>(pgd.fd_epsilon) * delta[i];
      }
      const double loss_plus = evaluate(clip_pattern(plus));
      const double loss_minus = evaluate(clip_pattern(minus));
      used += 2;

      const double grad_dir = (loss_plus - loss_minus) / (2.0 * pgd.fd_epsilon);
      const float move = static_cast<float>(-step * (grad_dir > 0.0 ? 1.0 : (grad_dir < 0.0 ? -1.0 : 0.0)));
      img::Image proposal = cells;
      for (std::size_t i = 0; i < cells.data.size(); ++i) proposal.data[i] += move * delta[i];
      proposal = clip_pattern(proposal);

      const double proposal_loss = evaluate(proposal);
      ++used;
      if (proposal_loss <= current_loss || !pgd.backtracking) {
        cells = proposal;
        current_loss = proposal_loss;
        trace.accepted_by_position.back().push_back(current_loss);
      } else {
        step *= 0.5;  // revert and shrink
      }
    }
    // Spend the remainder of the allotment probing fresh directions; a lucky
    // probe can still become the incumbent through evaluate().
    while (used < pgd.iters_per_position) {
      img::Image probe = cells;
      for (float& v : probe.data)
        v += static_cast<float>(pgd.fd_epsilon) * static_cast<float>(rng.sign());
      evaluate(clip_pattern(probe));
      ++used;
    }
  }

  if (!any) throw ConfigError("patch optimizer evaluated nothing");
  // Persist-ready pattern: upsample the winning cell grid.
  if (best.patch) {
    best.patch->pattern = upsample_bilinear(best.patch->pattern, pgd.upsample);
  }
  trace.best_loss = best_loss;
  trace.total_queries = oracle.query_count() - start_queries;
  return {best, trace};
}

namespace {

struct RoadsideRegion {
  // Band along each designated boundary, parameterized by (side, arc fraction,
  // lateral offset, height).
  const SceneFrame* frame = nullptr;
  double lateral_min = 0.5;
  double lateral_max = 3.0;
  double height_min = 0.5;
  double height_max = 2.0;

  Vec3 at(int side, double arc_fraction, double lateral, double height) const {
    const Polyline2D& boundary = side == 0 ? frame->right_boundary() : frame->left_boundary();
    const std::vector<double> cum = geom::cumulative_arclength(boundary.points);
    const Vec2 q = geom::point_at_arclength(boundary.points, cum, arc_fraction * cum.back());
    Vec2 away = q - geom::closest_point_on_polyline(q, frame->centerline.points);
    if (away.norm() < 1e-6) away = side == 0 ? Vec2{1.0, 0.0} : Vec2{-1.0, 0.0};
    return {q.x + away.normalized().x * lateral, q.y + away.normalized().y * lateral, height};
  }
};

}  // namespace

std::pair<AttackConfig, SearchTrace> random_search(MapOracle& oracle, const SceneFrame& frame,
                                                   const ObjectiveSpec& spec, std::uint64_t budget,
                                                   std::uint64_t seed,
                                                   const interf::FlashlightSpec& flashlight) {
  if (budget < 1) throw ConfigError("budget must be >= 1");
  spec.validate();
  Rng rng(Rng::mix(seed, 0x5a4d0111ull));
  RoadsideRegion region;
  region.frame = &frame;

  SearchTrace trace;
  trace.method = "random";
  trace.seed = seed;
  AttackConfig best;
  best.kind = AttackKind::kBlinding;
  best.flashlight = flashlight;
  double best_loss = std::numeric_limits<double>::infinity();

  const std::uint64_t start_queries = oracle.query_count();
  scene::ImageSet scratch;
  for (std::uint64_t q = 0; q < budget; ++q) {
    const int side = rng.bernoulli(0.5) ? 1 : 0;
    const Vec3 p = region.at(side, rng.uniform(), rng.uniform(region.lateral_min, region.lateral_max),
                             rng.uniform(region.height_min, region.height_max));
    interf::render_flare_into(scratch, frame.images, frame.rig, p, flashlight);
    const PredictedMap pred = oracle.predict(scratch, frame);
    const double loss = objective_loss(pred, spec);
    trace.entries.push_back({p, loss, oracle.query_count() - start_queries});
    if (loss < best_loss) {
      best_loss = loss;
      best.position = p;
    }
  }
  trace.best_loss = best_loss;
  trace.total_queries = oracle.query_count() - start_queries;
  return {best, trace};
}

std::pair<AttackConfig, SearchTrace> pso_search(MapOracle& oracle, const SceneFrame& frame,
                                                const ObjectiveSpec& spec, std::uint64_t budget,
                                                std::uint64_t seed,
                                                const interf::FlashlightSpec& flashlight) {
  if (budget < 1) throw ConfigError("budget must be >= 1");
  spec.validate();
  Rng rng(Rng::mix(seed, 0x9500a2ull));
  RoadsideRegion region;
  region.frame = &frame;

  // Particle state in normalized coordinates (side treated as a coin flip per
  // particle, fixed at initialization).
  struct Particle {
    int side;
    double pos[3];   // arc fraction, lateral fraction, height fraction
    double vel[3];
    double best_val = std::numeric_limits<double>::infinity();
    double best_pos[3];
  };
  const std::size_t swarm_size = std::min<std::uint64_t>(20, std::max<std::uint64_t>(4, budget / 5));
  std::vector<Particle> swarm(swarm_size);
  for (Particle& part : swarm) {
    part.side = rng.bernoulli(0.5) ? 1 : 0;
    for (int d = 0; d < 3; ++d) {
      part.pos[d] = rng.uniform();
      part.vel[d] = rng.uniform(-0.2, 0.2);
      part.best_pos[d] = part.pos[d];
    }
  }

  SearchTrace trace;
  trace.method = "pso";
  trace.seed = seed;
  AttackConfig best;
  best.kind = AttackKind::kBlinding;
  best.flashlight = flashlight;
  double best_loss = std::numeric_limits<double>::infinity();
  double global_best_pos[3] = {0.5, 0.5, 0.5};
  int global_best_side = 0;

  const std::uint64_t start_queries = oracle.query_count();
  std::uint64_t used = 0;
  scene::ImageSet scratch;
  auto evaluate = [&](Particle& part) {
    const Vec3 p = region.at(part.side, part.pos[0],
                             region.lateral_min + part.pos[1] * (region.lateral_max - region.lateral_min),
                             region.height_min + part.pos[2] * (region.height_max - region.height_min));
    interf::render_flare_into(scratch, frame.images, frame.rig, p, flashlight);
    const PredictedMap pred = oracle.predict(scratch, frame);
    const double loss = objective_loss(pred, spec);
    ++used;
    trace.entries.push_back({p, loss, used});
    if (loss < part.best_val) {
      part.best_val = loss;
      for (int d = 0; d < 3; ++d) part.best_pos[d] = part.pos[d];
    }
    if (loss < best_loss) {
      best_loss = loss;
      best.position = p;
      for (int d = 0; d < 3; ++d) global_best_pos[d] = part.pos[d];
      global_best_side = part.side;
    }
  };

  while (used < budget) {
    for (Particle& part : swarm) {
      if (used >= budget) break;
      evaluate(part);
    }
    constexpr double w = 0.7, c1 = 1.5, c2 = 1.5;
    for (Particle& part : swarm) {
      for (int d = 0; d < 3; ++d) {
        part.vel[d] = w * part.vel[d] + c1 * rng.uniform() * (part.best_pos[d] - part.pos[d]) +
                      c2 * rng.uniform() * (global_best_pos[d] - part.pos[d]);
        part.vel[d] = std::clamp(part.vel[d], -0.5, 0.5);
        part.pos[d] = std::clamp(part.pos[d] + part.vel[d], 0.0, 1.0);
      }
      // Swarm drifts toward the global best's side over time.
      if (rng.bernoulli(0.1)) part.side = global_best_side;
    }
  }
  trace.best_loss = best_loss;
  trace.total_queries = oracle.query_count() - start_queries;
  return {best, trace};
}

}  // namespace mapattack::attack
