#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mapattack/geometry.hpp"
#include "mapattack/oracle.hpp"
#include "mapattack/planner.hpp"

namespace mapattack::metrics {

using geom::MapClass;
using geom::Polyline2D;
using oracle::PredictedMap;

struct ApResult {
  std::map<MapClass, double> ap_per_class;  // classes present in GT only
  double map = 0.0;                         // mean over present classes
  std::vector<MapClass> skipped;            // classes with no GT elements
};

/// Chamfer-threshold AP: per class and threshold, confidence-ordered greedy
/// matching of predictions to same-scene GT elements (match iff Chamfer <=
/// threshold), all-point interpolated area under the PR curve; class AP is the
/// mean over thresholds, mAP the mean over classes present in GT.
ApResult map_ap(const std::vector<PredictedMap>& predictions,
                const std::vector<std::vector<Polyline2D>>& gts,
                const std::vector<double>& thresholds);

/// Fraction of frames with at least one unreachable goal.
double unreachable_goal_rate(const std::vector<std::vector<plan::GoalStatus>>& per_frame);

/// True when any pose's vehicle footprint intersects a GT boundary polyline
/// (closed predicate: touching counts).
bool trajectory_unsafe(const plan::Trajectory& traj, const std::vector<Polyline2D>& gt_boundaries,
                       const plan::VehicleParams& vehicle);

/// Fraction of frames where any planned trajectory intersects the GT boundary.
double unsafe_trajectory_rate(const std::vector<std::vector<plan::Trajectory>>& per_frame,
                              const std::vector<std::vector<Polyline2D>>& gt_boundaries,
                              const plan::VehicleParams& vehicle);

/// Average displacement error between two trajectories after resampling both
/// to `resample_n` poses by arc length.
double ade(const plan::Trajectory& a, const plan::Trajectory& b, int resample_n = 50);

}  // namespace mapattack::metrics
