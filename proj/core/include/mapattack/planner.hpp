#pragma once

#include <cstdint>
#include <vector>

#include "mapattack/geometry.hpp"
#include "mapattack/scene.hpp"

namespace mapattack::plan {

using geom::Polyline2D;
using geom::Vec2;

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians, standard math convention (+x axis = 0)
};

struct VehicleParams {
  double length = 4.5;
  double width = 1.9;
  double min_turn_radius = 5.0;
};

struct PlannerParams {
  double cell = 0.25;            // m
  int heading_bins = 36;
  int node_budget = 50000;       // A* pops before declaring a goal unreachable
  double goal_pos_tol = 0.6;     // m
  double goal_heading_tol_deg = 15.0;
  double analytic_radius = 8.0;  // m, analytic expansion trigger distance
};

/// Binary occupancy over a BEV window; out-of-grid counts as blocked.
struct OccupancyGrid {
  double x0 = 0.0;
  double y0 = 0.0;
  double cell = 0.25;
  int nx = 0;
  int ny = 0;
  std::vector<std::uint8_t> cells;

  bool in_grid(int ix, int iy) const { return ix >= 0 && ix < nx && iy >= 0 && iy < ny; }
  bool occupied(int ix, int iy) const {
    return !in_grid(ix, iy) || cells[static_cast<std::size_t>(iy) * nx + ix] != 0;
  }
  bool blocked_at(double x, double y) const;
  int index_x(double x) const { return static_cast<int>(std::floor((x - x0) / cell)); }
  int index_y(double y) const { return static_cast<int>(std::floor((y - y0) / cell)); }
  double center_x(int ix) const { return x0 + (ix + 0.5) * cell; }
  double center_y(int iy) const { return y0 + (iy + 0.5) * cell; }
};

/// Rasterizes boundary polylines as walls inflated by `inflate_radius`.
OccupancyGrid build_occupancy(const std::vector<Polyline2D>& walls, const scene::BevRange& range,
                              double cell, double inflate_radius);

struct PlanningProblem {
  Pose start;
  std::vector<Pose> goals;
  VehicleParams vehicle;
  OccupancyGrid occupancy;
  PlannerParams params;
};

enum class GoalStatus { kReached, kUnreachable };

struct Trajectory {
  std::vector<Pose> poses;  // consecutive spacing <= grid cell when reached
  GoalStatus status = GoalStatus::kUnreachable;
  double length = 0.0;
};

struct PlanResult {
  std::vector<Trajectory> trajectories;  // one per goal, same order
  bool start_blocked = false;
};

/// Hybrid A* over an (x, y, heading-bin) lattice with arc/straight motion
/// primitives at the vehicle's turn limit and Dubins-style analytic goal
/// expansion near the goal.
PlanResult plan(const PlanningProblem& problem);

/// Vehicle footprint polygon (CCW) at a pose, centered on the pose.
std::vector<Vec2> footprint_polygon(const Pose& pose, const VehicleParams& vehicle);

/// Goal poses derived from GT boundary/divider termini at the BEV range edge:
/// mutually close far endpoints form corridor mouths; one goal per mouth ahead
/// of the ego, heading tangent to the corridor.
std::vector<Pose> derive_goals(const scene::SceneFrame& frame);

namespace detail {

struct LatticeState {
  int ix = 0;
  int iy = 0;
  int ih = 0;
  bool operator==(const LatticeState& o) const { return ix == o.ix && iy == o.iy && ih == o.ih; }
};

Pose canonical_pose(const LatticeState& s, const OccupancyGrid& grid, const PlannerParams& params);

/// Deterministic primitive expansion from a cell's canonical pose: straight,
/// left arc, right arc (one heading bin per arc). Collision-checked.
std::vector<LatticeState> successors(const LatticeState& s, const OccupancyGrid& grid,
                                     const PlannerParams& params, const VehicleParams& vehicle);

bool goal_test(const LatticeState& s, const Pose& goal, const OccupancyGrid& grid,
               const PlannerParams& params, const VehicleParams& vehicle);

/// Dubins-style analytic connection from pose to goal at the vehicle's minimum
/// turn radius; returns sampled poses when a collision-free path exists.
bool analytic_expansion(const Pose& from, const Pose& goal, const OccupancyGrid& grid,
                        const PlannerParams& params, const VehicleParams& vehicle,
                        std::vector<Pose>* out_poses);

}  // namespace detail

}  // namespace mapattack::plan
