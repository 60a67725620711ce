#include "mapattack/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mapattack/errors.hpp"

namespace mapattack::metrics {

namespace {

struct PooledPrediction {
  std::size_t scene = 0;
  std::size_t index = 0;  // insertion index within the scene (tie-break)
  Polyline2D polyline;    // resampled to kElementPoints
  double confidence = 0.0;
};

double average_precision(std::vector<std::pair<double, bool>> scored, std::size_t n_gt) {
  // scored: (confidence, is_true_positive), any order.
  if (n_gt == 0) return 0.0;
  if (scored.empty()) return 0.0;
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<double> precision;
  std::vector<double> recall;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    if (scored[i].second) ++tp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
  }
  // All-point interpolation: integrate the precision envelope over recall.
  for (std::size_t i = precision.size(); i-- > 1;)
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

}  // namespace

ApResult map_ap(const std::vector<PredictedMap>& predictions,
                const std::vector<std::vector<Polyline2D>>& gts,
                const std::vector<double>& thresholds) {
  if (predictions.size() != gts.size())
    throw ConfigError("map_ap needs aligned prediction/GT lists");
  if (thresholds.empty()) throw ConfigError("map_ap needs at least one threshold");
  for (std::size_t i = 1; i < thresholds.size(); ++i)
    if (thresholds[i] <= thresholds[i - 1]) throw ConfigError("AP thresholds must ascend");

  ApResult result;
  const MapClass classes[3] = {MapClass::kBoundary, MapClass::kDivider, MapClass::kPedCrossing};
  double map_acc = 0.0;
  std::size_t map_n = 0;

  for (MapClass cls : classes) {
    // Pool GT and predictions of this class across scenes.
    std::vector<std::vector<Polyline2D>> gt_by_scene(gts.size());
    std::size_t n_gt = 0;
    for (std::size_t s = 0; s < gts.size(); ++s) {
      for (const Polyline2D& g : gts[s]) {
        if (g.class_tag != cls) continue;
        gt_by_scene[s].push_back(geom::resample_polyline(g, geom::kElementPoints));
        ++n_gt;
      }
    }
    if (n_gt == 0) {
      result.skipped.push_back(cls);
      continue;
    }
    std::vector<PooledPrediction> preds;
    for (std::size_t s = 0; s < predictions.size(); ++s) {
      std::size_t idx = 0;
      for (const auto& e : predictions[s].elements) {
        if (e.polyline.class_tag != cls) continue;
        preds.push_back(
            {s, idx++, geom::resample_polyline(e.polyline, geom::kElementPoints), e.confidence});
      }
    }
    // Deterministic confidence ordering.
    std::stable_sort(preds.begin(), preds.end(), [](const auto& a, const auto& b) {
      if (a.confidence != b.confidence) return a.confidence > b.confidence;
      if (a.scene != b.scene) return a.scene < b.scene;
      return a.index < b.index;
    });

    double class_ap = 0.0;
    for (double threshold : thresholds) {
      std::vector<std::vector<bool>> used(gts.size());
      for (std::size_t s = 0; s < gts.size(); ++s) used[s].assign(gt_by_scene[s].size(), false);
      std::vector<std::pair<double, bool>> scored;
      scored.reserve(preds.size());
      for (const PooledPrediction& p : preds) {
        double best = std::numeric_limits<double>::infinity();
        int best_gt = -1;
        for (std::size_t g = 0; g < gt_by_scene[p.scene].size(); ++g) {
          if (used[p.scene][g]) continue;
          const double d = geom::chamfer_distance(p.polyline, gt_by_scene[p.scene][g]);
          if (d < best) {
            best = d;
            best_gt = static_cast<int>(g);
          }
        }
        const bool tp = best_gt >= 0 && best <= threshold;
        if (tp) used[p.scene][best_gt] = true;
        scored.push_back({p.confidence, tp});
      }
      class_ap += average_precision(std::move(scored), n_gt);
    }
    class_ap /= static_cast<double>(thresholds.size());
    result.ap_per_class[cls] = class_ap;
    map_acc += class_ap;
    ++map_n;
  }
  result.map = map_n > 0 ? map_acc / static_cast<double>(map_n) : 0.0;
  return result;
}

double unreachable_goal_rate(const std::vector<std::vector<plan::GoalStatus>>& per_frame) {
  if (per_frame.empty()) return 0.0;
  std::size_t frames_with_unreachable = 0;
  for (const auto& goals : per_frame) {
    for (plan::GoalStatus st : goals) {
      if (st == plan::GoalStatus::kUnreachable) {
        ++frames_with_unreachable;
        break;
      }
    }
  }
  return static_cast<double>(frames_with_unreachable) / static_cast<double>(per_frame.size());
}

bool trajectory_unsafe(const plan::Trajectory& traj, const std::vector<Polyline2D>& gt_boundaries,
                       const plan::VehicleParams& vehicle) {
  for (const plan::Pose& pose : traj.poses) {
    const std::vector<geom::Vec2> footprint = plan::footprint_polygon(pose, vehicle);
    for (const Polyline2D& boundary : gt_boundaries) {
      for (std::size_t i = 1; i < boundary.points.size(); ++i) {
        const geom::Vec2& a = boundary.points[i - 1];
        const geom::Vec2& b = boundary.points[i];
        // Edge crossing or containment (closed predicate).
        bool hit = geom::point_in_convex_polygon(a, footprint) ||
                   geom::point_in_convex_polygon(b, footprint);
        for (std::size_t e = 0; e < footprint.size() && !hit; ++e) {
          const geom::Vec2& fa = footprint[e];
          const geom::Vec2& fb = footprint[(e + 1) % footprint.size()];
          hit = geom::segments_intersect(a, b, fa, fb);
        }
        if (hit) return true;
      }
    }
  }
  return false;
}

double unsafe_trajectory_rate(const std::vector<std::vector<plan::Trajectory>>& per_frame,
                              const std::vector<std::vector<Polyline2D>>& gt_boundaries,
                              const plan::VehicleParams& vehicle) {
  if (per_frame.empty()) return 0.0;
  if (per_frame.size() != gt_boundaries.size())
    throw ConfigError("unsafe_trajectory_rate needs aligned frames");
  std::size_t unsafe_frames = 0;
  for (std::size_t f = 0; f < per_frame.size(); ++f) {
    for (const plan::Trajectory& traj : per_frame[f]) {
      if (trajectory_unsafe(traj, gt_boundaries[f], vehicle)) {
        ++unsafe_frames;
        break;
      }
    }
  }
  return static_cast<double>(unsafe_frames) / static_cast<double>(per_frame.size());
}

double ade(const plan::Trajectory& a, const plan::Trajectory& b, int resample_n) {
  if (resample_n < 2) throw ConfigError("ade resample count must be >= 2");
  auto resample = [&](const plan::Trajectory& t) {
    std::vector<geom::Vec2> pts;
    pts.reserve(t.poses.size());
    for (const plan::Pose& p : t.poses) pts.push_back({p.x, p.y});
    if (pts.empty()) throw InvalidGeometryError("ade on an empty trajectory");
    std::vector<geom::Vec2> clean;
    for (const geom::Vec2& p : pts)
      if (clean.empty() || (p - clean.back()).norm() > 1e-12) clean.push_back(p);
    if (clean.size() < 2) return std::vector<geom::Vec2>(static_cast<std::size_t>(resample_n), clean.front());
    const std::vector<double> cum = geom::cumulative_arclength(clean);
    std::vector<geom::Vec2> out;
    out.reserve(static_cast<std::size_t>(resample_n));
    for (int i = 0; i < resample_n; ++i) {
      const double s = cum.back() * static_cast<double>(i) / (resample_n - 1);
      out.push_back(geom::point_at_arclength(clean, cum, s));
    }
    return out;
  };
  const std::vector<geom::Vec2> pa = resample(a);
  const std::vector<geom::Vec2> pb = resample(b);
  double acc = 0.0;
  for (int i = 0; i < resample_n; ++i) acc += (pa[i] - pb[i]).norm();
  return acc / resample_n;
}

}  // namespace mapattack::metrics
