#include "mapattack/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "mapattack/errors.hpp"

namespace mapattack::plan {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

double mod2pi(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  return r;
}

double ang_diff(double a, double b) {
  double d = std::fmod(a - b, kTwoPi);
  if (d > kPi) d -= kTwoPi;
  if (d < -kPi) d += kTwoPi;
  return d;
}

}  // namespace

bool OccupancyGrid::blocked_at(double x, double y) const {
  return occupied(index_x(x), index_y(y));
}

OccupancyGrid build_occupancy(const std::vector<Polyline2D>& walls, const scene::BevRange& range,
                              double cell, double inflate_radius) {
  if (cell <= 0.0) throw ConfigError("occupancy cell must be > 0");
  OccupancyGrid grid;
  grid.cell = cell;
  grid.x0 = range.x_min;
  grid.y0 = range.y_min;
  grid.nx = std::max(1, static_cast<int>(std::ceil((range.x_max - range.x_min) / cell)));
  grid.ny = std::max(1, static_cast<int>(std::ceil((range.y_max - range.y_min) / cell)));
  grid.cells.assign(static_cast<std::size_t>(grid.nx) * grid.ny, 0);

  const int inflate_cells = static_cast<int>(std::ceil(inflate_radius / cell));
  const double inflate_sq = inflate_radius * inflate_radius;
  auto stamp = [&](double x, double y) {
    const int cx = grid.index_x(x);
    const int cy = grid.index_y(y);
    for (int iy = cy - inflate_cells; iy <= cy + inflate_cells; ++iy) {
      for (int ix = cx - inflate_cells; ix <= cx + inflate_cells; ++ix) {
        if (!grid.in_grid(ix, iy)) continue;
        const double dx = grid.center_x(ix) - x;
        const double dy = grid.center_y(iy) - y;
        if (dx * dx + dy * dy <= inflate_sq)
          grid.cells[static_cast<std::size_t>(iy) * grid.nx + ix] = 1;
      }
    }
  };

  for (const Polyline2D& wall : walls) {
    const std::vector<double> cum = geom::cumulative_arclength(wall.points);
    const double total = cum.back();
    const int n = std::max(1, static_cast<int>(std::ceil(total / (cell * 0.5))));
    for (int i = 0; i <= n; ++i) {
      const Vec2 p = geom::point_at_arclength(wall.points, cum, total * i / n);
      stamp(p.x, p.y);
    }
  }
  return grid;
}

std::vector<Vec2> footprint_polygon(const Pose& pose, const VehicleParams& vehicle) {
  const double c = std::cos(pose.heading);
  const double s = std::sin(pose.heading);
  const double hl = vehicle.length / 2.0;
  const double hw = vehicle.width / 2.0;
  auto corner = [&](double lx, double ly) {
    return Vec2{pose.x + c * lx - s * ly, pose.y + s * lx + c * ly};
  };
  return {corner(hl, hw), corner(-hl, hw), corner(-hl, -hw), corner(hl, -hw)};
}

namespace detail {

Pose canonical_pose(const LatticeState& s, const OccupancyGrid& grid, const PlannerParams& params) {
  return {grid.center_x(s.ix), grid.center_y(s.iy),
          s.ih * (kTwoPi / params.heading_bins)};
}

namespace {

struct Primitive {
  int turn;  // -1 right, 0 straight, +1 left
};

constexpr Primitive kPrimitives[3] = {{0}, {1}, {-1}};

/// Integrates a primitive from `from`; returns sampled poses including the end.
std::vector<Pose> integrate(const Pose& from, const Primitive& prim, const PlannerParams& params,
                            const VehicleParams& vehicle, int samples) {
  const double dtheta = kTwoPi / params.heading_bins;
  std::vector<Pose> out;
  out.reserve(samples);
  if (prim.turn == 0) {
    const double len = 2.5 * params.cell;
    for (int i = 1; i <= samples; ++i) {
      const double t = len * i / samples;
      out.push_back({from.x + std::cos(from.heading) * t, from.y + std::sin(from.heading) * t,
                     from.heading});
    }
  } else {
    const double radius = vehicle.min_turn_radius;
    const double side = prim.turn > 0 ? 1.0 : -1.0;
    // Arc about the center perpendicular to the heading.
    const double ccx = from.x - side * radius * std::sin(from.heading);
    const double ccy = from.y + side * radius * std::cos(from.heading);
    const double start_angle = std::atan2(from.y - ccy, from.x - ccx);
    for (int i = 1; i <= samples; ++i) {
      const double a = start_angle + side * dtheta * i / samples;
      out.push_back({ccx + radius * std::cos(a), ccy + radius * std::sin(a),
                     from.heading + side * dtheta * i / samples});
    }
  }
  return out;
}

double primitive_length(const Primitive& prim, const PlannerParams& params,
                        const VehicleParams& vehicle) {
  if (prim.turn == 0) return 2.5 * params.cell;
  return vehicle.min_turn_radius * (kTwoPi / params.heading_bins);
}

bool primitive_clear(const Pose& from, const Primitive& prim, const OccupancyGrid& grid,
                     const PlannerParams& params, const VehicleParams& vehicle) {
  const double len = primitive_length(prim, params, vehicle);
  const int samples = std::max(2, static_cast<int>(std::ceil(len / (0.5 * params.cell))));
  for (const Pose& p : integrate(from, prim, params, vehicle, samples))
    if (grid.blocked_at(p.x, p.y)) return false;
  return true;
}

}  // namespace

std::vector<LatticeState> successors(const LatticeState& s, const OccupancyGrid& grid,
                                     const PlannerParams& params, const VehicleParams& vehicle) {
  std::vector<LatticeState> out;
  const Pose pose = canonical_pose(s, grid, params);
  for (int pi = 0; pi < 3; ++pi) {
    const Primitive& prim = kPrimitives[pi];
    if (!primitive_clear(pose, prim, grid, params, vehicle)) continue;
    const std::vector<Pose> tail = integrate(pose, prim, params, vehicle, 2);
    const Pose& end = tail.back();
    LatticeState next;
    next.ix = grid.index_x(end.x);
    next.iy = grid.index_y(end.y);
    const int bins = params.heading_bins;
    next.ih = ((s.ih + prim.turn) % bins + bins) % bins;
    if (!grid.in_grid(next.ix, next.iy)) continue;
    if (next == s) continue;
    out.push_back(next);
  }
  return out;
}

bool goal_test(const LatticeState& s, const Pose& goal, const OccupancyGrid& grid,
               const PlannerParams& params, const VehicleParams& vehicle) {
  (void)vehicle;
  const Pose pose = canonical_pose(s, grid, params);
  const double dist = std::hypot(pose.x - goal.x, pose.y - goal.y);
  if (dist > params.goal_pos_tol) return false;
  const double dh = std::abs(ang_diff(pose.heading, goal.heading));
  return dh <= params.goal_heading_tol_deg * kPi / 180.0;
}

namespace {

struct DubinsSegment {
  char kind;  // 'L', 'S', 'R'
  double span;  // radians for turns, meters/radius for straight (normalized)
};

Pose apply_segment(const Pose& from, const DubinsSegment& seg, double radius, double fraction) {
  const double s = seg.span * fraction;
  if (seg.kind == 'S')
    return {from.x + std::cos(from.heading) * s * radius,
            from.y + std::sin(from.heading) * s * radius, from.heading};
  const double side = seg.kind == 'L' ? 1.0 : -1.0;
  const double cx = from.x - side * radius * std::sin(from.heading);
  const double cy = from.y + side * radius * std::cos(from.heading);
  const double start_angle = std::atan2(from.y - cy, from.x - cx);
  const double a = start_angle + side * s;
  return {cx + radius * std::cos(a), cy + radius * std::sin(a), from.heading + side * s};
}

struct DubinsWord {
  DubinsSegment segs[3];
  double total = std::numeric_limits<double>::infinity();  // normalized length
  bool valid = false;
};

/// Candidate Dubins words between normalized configurations; each candidate is
/// verified by endpoint reconstruction, so a rejected word is simply skipped.
std::vector<DubinsWord> dubins_words(double alpha, double beta, double d) {
  const double sa = std::sin(alpha), ca = std::cos(alpha);
  const double sb = std::sin(beta), cb = std::cos(beta);
  const double c_ab = std::cos(alpha - beta);
  std::vector<DubinsWord> words;

  {  // LSL
    const double p_sq = 2.0 + d * d - 2.0 * c_ab + 2.0 * d * (sa - sb);
    if (p_sq >= 0.0) {
      const double tmp = std::atan2(cb - ca, d + sa - sb);
      DubinsWord w;
      w.segs[0] = {'L', mod2pi(-alpha + tmp)};
      w.segs[1] = {'S', std::sqrt(p_sq)};
      w.segs[2] = {'L', mod2pi(beta - tmp)};
      w.valid = true;
      words.push_back(w);
    }
  }
  {  // RSR
    const double p_sq = 2.0 + d * d - 2.0 * c_ab + 2.0 * d * (sb - sa);
    if (p_sq >= 0.0) {
      const double tmp = std::atan2(ca - cb, d - sa + sb);
      DubinsWord w;
      w.segs[0] = {'R', mod2pi(alpha - tmp)};
      w.segs[1] = {'S', std::sqrt(p_sq)};
      w.segs[2] = {'R', mod2pi(tmp - beta)};
      w.valid = true;
      words.push_back(w);
    }
  }
  {  // LSR
    const double p_sq = -2.0 + d * d + 2.0 * c_ab + 2.0 * d * (sa + sb);
    if (p_sq >= 0.0) {
      const double p = std::sqrt(p_sq);
      const double tmp = std::atan2(-ca - cb, d + sa + sb) - std::atan2(-2.0, p);
      DubinsWord w;
      w.segs[0] = {'L', mod2pi(-alpha + tmp)};
      w.segs[1] = {'S', p};
      w.segs[2] = {'R', mod2pi(-mod2pi(beta) + tmp)};
      w.valid = true;
      words.push_back(w);
    }
  }
  {  // RSL
    const double p_sq = -2.0 + d * d + 2.0 * c_ab - 2.0 * d * (sa + sb);
    if (p_sq >= 0.0) {
      const double p = std::sqrt(p_sq);
      const double tmp = std::atan2(ca + cb, d - sa - sb) - std::atan2(2.0, p);
      DubinsWord w;
      w.segs[0] = {'R', mod2pi(alpha - tmp)};
      w.segs[1] = {'S', p};
      w.segs[2] = {'L', mod2pi(beta - tmp)};
      w.valid = true;
      words.push_back(w);
    }
  }
  {  // RLR
    const double tmp = (6.0 - d * d + 2.0 * c_ab + 2.0 * d * (sa - sb)) / 8.0;
    if (std::abs(tmp) <= 1.0) {
      const double p = mod2pi(kTwoPi - std::acos(tmp));
      const double t = mod2pi(alpha - std::atan2(ca - cb, d - sa + sb) + p / 2.0);
      DubinsWord w;
      w.segs[0] = {'R', t};
      w.segs[1] = {'L', p};
      w.segs[2] = {'R', mod2pi(alpha - beta - t + p)};
      w.valid = true;
      words.push_back(w);
    }
  }
  {  // LRL
    const double tmp = (6.0 - d * d + 2.0 * c_ab + 2.0 * d * (sb - sa)) / 8.0;
    if (std::abs(tmp) <= 1.0) {
      const double p = mod2pi(kTwoPi - std::acos(tmp));
      const double t = mod2pi(-alpha - std::atan2(ca - cb, d + sa - sb) + p / 2.0);
      DubinsWord w;
      w.segs[0] = {'L', t};
      w.segs[1] = {'R', p};
      w.segs[2] = {'L', mod2pi(mod2pi(beta) - alpha - t + p)};
      w.valid = true;
      words.push_back(w);
    }
  }
  for (DubinsWord& w : words) {
    w.total = 0.0;
    for (const DubinsSegment& seg : w.segs) w.total += seg.span;
  }
  std::sort(words.begin(), words.end(),
            [](const DubinsWord& a, const DubinsWord& b) { return a.total < b.total; });
  return words;
}

}  // namespace

bool analytic_expansion(const Pose& from, const Pose& goal, const OccupancyGrid& grid,
                        const PlannerParams& params, const VehicleParams& vehicle,
                        std::vector<Pose>* out_poses) {
  const double radius = vehicle.min_turn_radius;
  const double dx = (goal.x - from.x) / radius;
  const double dy = (goal.y - from.y) / radius;
  const double d = std::hypot(dx, dy);
  const double theta = std::atan2(dy, dx);
  const double alpha = mod2pi(from.heading - theta);
  const double beta = mod2pi(goal.heading - theta);

  for (const DubinsWord& word : dubins_words(alpha, beta, d)) {
    // Verify by endpoint reconstruction before trusting the word.
    Pose end = from;
    for (const DubinsSegment& seg : word.segs) end = apply_segment(end, seg, radius, 1.0);
    if (std::hypot(end.x - goal.x, end.y - goal.y) > 0.05 ||
        std::abs(ang_diff(end.heading, goal.heading)) > 0.02)
      continue;

    // Collision check along the word.
    std::vector<Pose> samples;
    Pose cursor = from;
    bool clear = true;
    for (const DubinsSegment& seg : word.segs) {
      const double len_m = seg.span * radius;
      const int n = std::max(1, static_cast<int>(std::ceil(len_m / (0.5 * params.cell))));
      for (int i = 1; i <= n && clear; ++i) {
        const Pose p = apply_segment(cursor, seg, radius, static_cast<double>(i) / n);
        if (grid.blocked_at(p.x, p.y)) clear = false;
        samples.push_back(p);
      }
      if (!clear) break;
      cursor = apply_segment(cursor, seg, radius, 1.0);
    }
    if (!clear) continue;
    if (out_poses) *out_poses = std::move(samples);
    return true;
  }
  return false;
}

}  // namespace detail

namespace {

struct FieldResult {
  std::vector<double> dist;  // per 2D cell, +inf when unreachable
};

FieldResult distance_field(const OccupancyGrid& grid, const Pose& goal, double seed_radius) {
  FieldResult field;
  field.dist.assign(static_cast<std::size_t>(grid.nx) * grid.ny,
                    std::numeric_limits<double>::infinity());

  using Entry = std::pair<double, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  auto idx = [&](int x, int y) { return static_cast<std::size_t>(y) * grid.nx + x; };
  // Seed every free cell the goal tolerance accepts, not just the exact cell
  // (which may itself sit inside an inflated wall).
  const int gx = grid.index_x(goal.x);
  const int gy = grid.index_y(goal.y);
  const int reach = std::max(1, static_cast<int>(std::ceil(seed_radius / grid.cell)));
  for (int dy = -reach; dy <= reach; ++dy) {
    for (int dx = -reach; dx <= reach; ++dx) {
      const int x = gx + dx;
      const int y = gy + dy;
      if (!grid.in_grid(x, y) || grid.occupied(x, y)) continue;
      if (std::hypot(grid.center_x(x) - goal.x, grid.center_y(y) - goal.y) > seed_radius) continue;
      field.dist[idx(x, y)] = 0.0;
      open.push({0.0, static_cast<int>(idx(x, y))});
    }
  }
  const double diag = grid.cell * std::sqrt(2.0);
  while (!open.empty()) {
    const auto [d, flat] = open.top();
    open.pop();
    const int x = flat % grid.nx;
    const int y = flat / grid.nx;
    if (d > field.dist[static_cast<std::size_t>(flat)]) continue;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const int nx = x + dx;
        const int ny = y + dy;
        if (!grid.in_grid(nx, ny) || grid.occupied(nx, ny)) continue;
        const double step = (dx != 0 && dy != 0) ? diag : grid.cell;
        const double nd = d + step;
        if (nd < field.dist[idx(nx, ny)]) {
          field.dist[idx(nx, ny)] = nd;
          open.push({nd, static_cast<int>(idx(nx, ny))});
        }
      }
    }
  }
  return field;
}

struct NodeRecord {
  detail::LatticeState state;
  int parent = -1;
  double g = 0.0;
};

Trajectory search_goal(const PlanningProblem& problem, const Pose& goal) {
  const OccupancyGrid& grid = problem.occupancy;
  const PlannerParams& params = problem.params;
  const VehicleParams& vehicle = problem.vehicle;

  Trajectory traj;
  const FieldResult field = distance_field(grid, goal, params.goal_pos_tol);
  auto heuristic = [&](const detail::LatticeState& s) {
    const Pose p = detail::canonical_pose(s, grid, params);
    const double euclid = std::hypot(p.x - goal.x, p.y - goal.y);
    const double d2 = field.dist[static_cast<std::size_t>(s.iy) * grid.nx + s.ix];
    // Octile distance can overestimate free-space length by up to ~8.24%.
    return std::max(euclid, d2 / 1.0824);
  };

  detail::LatticeState start;
  start.ix = grid.index_x(problem.start.x);
  start.iy = grid.index_y(problem.start.y);
  const int bins = params.heading_bins;
  start.ih = ((static_cast<int>(std::lround(problem.start.heading / (kTwoPi / bins))) % bins) +
              bins) %
             bins;
  if (!grid.in_grid(start.ix, start.iy) || grid.occupied(start.ix, start.iy)) return traj;
  if (!std::isfinite(heuristic(start))) return traj;

  std::vector<NodeRecord> nodes;
  nodes.push_back({start, -1, 0.0});
  std::vector<std::uint8_t> closed(static_cast<std::size_t>(grid.nx) * grid.ny * bins, 0);
  auto state_index = [&](const detail::LatticeState& s) {
    return (static_cast<std::size_t>(s.iy) * grid.nx + s.ix) * bins + s.ih;
  };

  using QueueEntry = std::pair<double, int>;  // (f, node idx)
  std::priority_queue<QueueEntry, std::vector<QueueEntry>, std::greater<>> open;
  open.push({heuristic(start), 0});

  int pops = 0;
  std::vector<Pose> analytic_tail;
  int goal_node = -1;
  bool by_tolerance = false;
  while (!open.empty() && pops < params.node_budget) {
    const auto [f, ni] = open.top();
    open.pop();
    const NodeRecord node = nodes[ni];
    const std::size_t si = state_index(node.state);
    if (closed[si]) continue;
    closed[si] = 1;
    ++pops;

    if (detail::goal_test(node.state, goal, grid, params, vehicle)) {
      goal_node = ni;
      by_tolerance = true;
      break;
    }
    const Pose pose = detail::canonical_pose(node.state, grid, params);
    if (std::hypot(pose.x - goal.x, pose.y - goal.y) <= params.analytic_radius &&
        detail::analytic_expansion(pose, goal, grid, params, vehicle, &analytic_tail)) {
      goal_node = ni;
      by_tolerance = false;
      break;
    }

    for (const detail::LatticeState& next : detail::successors(node.state, grid, params, vehicle)) {
      if (closed[state_index(next)]) continue;
      const double h = heuristic(next);
      if (!std::isfinite(h)) continue;
      const double step = next.ih == node.state.ih
                              ? 2.5 * params.cell
                              : vehicle.min_turn_radius * (kTwoPi / bins);
      nodes.push_back({next, ni, node.g + step});
      open.push({node.g + step + h, static_cast<int>(nodes.size()) - 1});
    }
  }
  if (goal_node < 0) return traj;

  // Backtrace and densify so consecutive poses are at most one cell apart.
  std::vector<detail::LatticeState> chain;
  for (int ni = goal_node; ni >= 0; ni = nodes[ni].parent) chain.push_back(nodes[ni].state);
  std::reverse(chain.begin(), chain.end());

  std::vector<Pose> poses;
  poses.push_back(detail::canonical_pose(chain.front(), grid, params));
  for (std::size_t i = 1; i < chain.size(); ++i) {
    const Pose from = detail::canonical_pose(chain[i - 1], grid, params);
    const Pose to = detail::canonical_pose(chain[i], grid, params);
    const int segs = std::max(
        1, static_cast<int>(std::ceil(std::hypot(to.x - from.x, to.y - from.y) / params.cell)));
    // Lattice steps are short arcs; linear interpolation at <= cell spacing
    // stays within a fraction of a cell of the true arc.
    for (int k = 1; k <= segs; ++k) {
      const double t = static_cast<double>(k) / segs;
      poses.push_back({from.x + (to.x - from.x) * t, from.y + (to.y - from.y) * t,
                       from.heading + ang_diff(to.heading, from.heading) * t});
    }
  }
  if (!by_tolerance) {
    for (const Pose& p : analytic_tail) poses.push_back(p);
  }

  traj.status = GoalStatus::kReached;
  traj.poses = std::move(poses);
  for (std::size_t i = 1; i < traj.poses.size(); ++i)
    traj.length += std::hypot(traj.poses[i].x - traj.poses[i - 1].x,
                              traj.poses[i].y - traj.poses[i - 1].y);
  return traj;
}

}  // namespace

PlanResult plan(const PlanningProblem& problem) {
  PlanResult result;
  const OccupancyGrid& grid = problem.occupancy;
  const bool start_blocked =
      grid.occupied(grid.index_x(problem.start.x), grid.index_y(problem.start.y));
  result.start_blocked = start_blocked;
  for (const Pose& goal : problem.goals) {
    if (start_blocked) {
      result.trajectories.emplace_back();
      continue;
    }
    result.trajectories.push_back(search_goal(problem, goal));
  }
  return result;
}

std::vector<Pose> derive_goals(const scene::SceneFrame& frame) {
  const scene::BevRange range = scene::bev_range(frame);
  struct Endpoint {
    Vec2 position;
    Vec2 outward;  // tangent pointing out of the scene
  };
  std::vector<Endpoint> endpoints;
  for (const Polyline2D& poly : frame.gt_map) {
    if (poly.class_tag == geom::MapClass::kPedCrossing) continue;
    const auto near_border = [&](const Vec2& p) {
      const double m = std::min(std::min(p.x - range.x_min, range.x_max - p.x),
                                std::min(p.y - range.y_min, range.y_max - p.y));
      return m <= 5.0;
    };
    const Vec2& first = poly.points.front();
    const Vec2& last = poly.points.back();
    if (near_border(first))
      endpoints.push_back({first, (first - poly.points[1]).normalized()});
    if (near_border(last))
      endpoints.push_back({last, (last - poly.points[poly.points.size() - 2]).normalized()});
  }

  const Vec2 ego{frame.ego_pose.x, frame.ego_pose.y};
  const Vec2 ego_dir{std::cos(frame.ego_pose.heading), std::sin(frame.ego_pose.heading)};

  std::vector<Pose> goals;
  for (std::size_t i = 0; i < endpoints.size(); ++i) {
    for (std::size_t j = i + 1; j < endpoints.size(); ++j) {
      const double dist = (endpoints[i].position - endpoints[j].position).norm();
      if (dist < 2.5 || dist > 12.0) continue;
      // Reject mouths with a third terminus between the pair.
      bool blocked = false;
      for (std::size_t k = 0; k < endpoints.size() && !blocked; ++k) {
        if (k == i || k == j) continue;
        if (geom::point_segment_distance(endpoints[k].position, endpoints[i].position,
                                         endpoints[j].position) < 1.0)
          blocked = true;
      }
      if (blocked) continue;
      const Vec2 mid = (endpoints[i].position + endpoints[j].position) * 0.5;
      if ((mid - ego).dot(ego_dir) <= 2.0) continue;  // behind or beside the ego
      Vec2 out_dir = (endpoints[i].outward + endpoints[j].outward);
      if (out_dir.norm() < 1e-6) out_dir = (mid - ego);
      out_dir = out_dir.normalized();
      const Vec2 at = mid - out_dir * 2.0;
      goals.push_back({at.x, at.y, std::atan2(out_dir.y, out_dir.x)});
    }
  }
  return goals;
}

}  // namespace mapattack::plan
