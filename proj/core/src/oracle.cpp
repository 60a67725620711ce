#include "mapattack/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "mapattack/errors.hpp"

namespace mapattack::oracle {

using cam::CameraModel;
using geom::Vec3;

std::string predicted_map_to_json(const PredictedMap& map) {
  nlohmann::ordered_json elements = nlohmann::ordered_json::array();
  for (const PredictedElement& e : map.elements) {
    nlohmann::ordered_json pts = nlohmann::ordered_json::array();
    for (const Vec2& p : e.polyline.points) pts.push_back(nlohmann::ordered_json::array({p.x, p.y}));
    elements.push_back(nlohmann::ordered_json{{"class", geom::to_string(e.polyline.class_tag)},
                                              {"points", std::move(pts)},
                                              {"confidence", e.confidence}});
  }
  return nlohmann::ordered_json{{"elements", std::move(elements)}}.dump();
}

PredictedMap predicted_map_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DecodeError("bad predicted-map payload: " + std::string(e.what()), e.byte);
  }
  PredictedMap out;
  try {
    for (const auto& el : j.at("elements")) {
      PredictedElement pe;
      std::vector<Vec2> pts;
      for (const auto& p : el.at("points"))
        pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      pe.polyline = Polyline2D(pts, geom::map_class_from_string(el.at("class").get<std::string>()));
      pe.confidence = std::clamp(el.at("confidence").get<double>(), 0.0, 1.0);
      out.elements.push_back(std::move(pe));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError("bad predicted-map payload: " + std::string(e.what()));
  }
  return out;
}

double edge_evidence(const img::Image& image, int x, int y, int window) {
  const int half = std::max(1, window) / 2;
  double acc = 0.0;
  int count = 0;
  for (int dy = -half; dy <= half; ++dy) {
    for (int dx = -half; dx <= half; ++dx) {
      const int px = x + dx;
      const int py = y + dy;
      if (px < 0 || px >= image.width || py < 0 || py >= image.height) continue;
      const double gx = 0.5 * (img::luminance_at(image, px + 1, py) -
                               img::luminance_at(image, px - 1, py));
      const double gy = 0.5 * (img::luminance_at(image, px, py + 1) -
                               img::luminance_at(image, px, py - 1));
      acc += std::sqrt(gx * gx + gy * gy);
      ++count;
    }
  }
  if (count == 0) return 0.0;
  // An ideal unit step contributes mean gradient 1/window; normalize so it
  // scores exactly 1, clamping double edges.
  const double score = (acc / count) * window;
  return std::clamp(score, 0.0, 1.0);
}

void SurrogateParams::validate() const {
  if (evidence_window < 3 || evidence_window % 2 == 0)
    throw ConfigError("evidence_window must be odd and >= 3");
  if (evidence_thre <= 0.0 || evidence_thre >= 1.0)
    throw ConfigError("evidence_thre must be in (0, 1)");
  if (corridor <= 0.0 || snap_step <= 0.0 || mirror_window <= 0.0)
    throw ConfigError("surrogate distances must be > 0");
  if (snap_margin < 0.0) throw ConfigError("snap_margin must be >= 0");
  if (min_probe_px < 0.0) throw ConfigError("min_probe_px must be >= 0");
  if (max_interp_run < 0) throw ConfigError("max_interp_run must be >= 0");
  if (occlusion_fraction_thre <= 0.0 || occlusion_fraction_thre > 1.0)
    throw ConfigError("occlusion_fraction_thre must be in (0, 1]");
  if (internal_points < 8) throw ConfigError("internal_points must be >= 8");
}

namespace {

struct PointState {
  Vec2 gt;
  Vec2 outward;     // unit direction away from the road center
  int camera = -1;  // best-facing camera index, -1 when invisible
  double evidence = 0.0;
  bool lost = true;
  Vec2 predicted;
  bool mirrored = false;
};

double evidence_at_world(const ImageSet& images, const scene::SceneFrame& frame, int camera_index,
                         const Vec2& world, int window) {
  if (camera_index < 0) return 0.0;
  const CameraModel& camera = frame.rig.cameras[camera_index];
  const auto px = camera.project({world.x, world.y, 0.0});
  if (!px) return 0.0;
  const auto it = images.find(camera.id);
  if (it == images.end()) return 0.0;
  return edge_evidence(it->second, static_cast<int>(std::lround(px->x)),
                       static_cast<int>(std::lround(px->y)), window);
}

}  // namespace

PredictedMap surrogate_predict(const SceneFrame& frame, const ImageSet& images,
                               const SurrogateParams& params) {
  params.validate();
  if (frame.gt_map.empty()) return {};

  // Anchors come from the same curvature rule the classifier uses, applied to
  // the GT boundary pair; the attack pipeline never feeds its verdicts in here.
  std::vector<Vec2> anchors;
  if (frame.has_left_boundary() && frame.has_right_boundary()) {
    const cls::RuleVerdict verdict = cls::classify_rule_based(
        frame.left_boundary(), frame.right_boundary(), params.anchor_rule);
    anchors = verdict.anchors;
  }

  PredictedMap out;
  for (std::size_t element_idx = 0; element_idx < frame.gt_map.size(); ++element_idx) {
    const Polyline2D& element = frame.gt_map[element_idx];
    const bool is_boundary = element.class_tag == MapClass::kBoundary;
    const bool is_designated =
        static_cast<int>(element_idx) == frame.left_boundary_index ||
        static_cast<int>(element_idx) == frame.right_boundary_index;

    const Polyline2D dense =
        geom::resample_polyline(element, static_cast<std::size_t>(params.internal_points));
    const std::vector<double> arc = geom::cumulative_arclength(dense.points);

    std::vector<PointState> states(dense.points.size());
    for (std::size_t i = 0; i < dense.points.size(); ++i) {
      PointState& st = states[i];
      st.gt = dense.points[i];
      if (is_boundary) {
        const Vec2 away = st.gt - geom::closest_point_on_polyline(st.gt, frame.centerline.points);
        st.outward = away.norm() > 1e-9 ? away.normalized()
                                        : geom::tangent_at(dense.points, i).perp();
      } else {
        st.outward = geom::tangent_at(dense.points, i).perp();
      }
      st.camera = cam::best_facing_camera(frame.rig, {st.gt.x, st.gt.y, 0.0});
      st.evidence = evidence_at_world(images, frame, st.camera, st.gt, params.evidence_window);
      st.lost = st.evidence < params.evidence_thre;
      st.predicted = st.gt;
    }

    // Symmetry fallback: when most points in a window around an anchor lose
    // their edge evidence, the post-anchor segment mirrors the opposite
    // boundary across the centerline.
    std::size_t mirror_from = states.size();
    if (is_boundary && is_designated && !anchors.empty() && frame.has_left_boundary() &&
        frame.has_right_boundary()) {
      const bool is_left = static_cast<int>(element_idx) == frame.left_boundary_index;
      const Polyline2D& opposite = is_left ? frame.right_boundary() : frame.left_boundary();
      for (const Vec2& anchor : anchors) {
        if (geom::point_polyline_distance(anchor, dense.points) > 1.5) continue;  // other side
        const Vec2 on = geom::closest_point_on_polyline(anchor, dense.points);
        // Arc position of the anchor on this element.
        double anchor_s = 0.0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < dense.points.size(); ++i) {
          const double d = (dense.points[i] - on).squared_norm();
          if (d < best) {
            best = d;
            anchor_s = arc[i];
          }
        }
        std::size_t in_window = 0;
        std::size_t lost_in_window = 0;
        std::size_t first_past = states.size();
        for (std::size_t i = 0; i < states.size(); ++i) {
          if (std::abs(arc[i] - anchor_s) <= params.mirror_window) {
            ++in_window;
            if (states[i].lost) ++lost_in_window;
          }
          if (arc[i] >= anchor_s && first_past == states.size()) first_past = i;
        }
        if (in_window > 0 &&
            static_cast<double>(lost_in_window) / static_cast<double>(in_window) >=
                params.occlusion_fraction_thre) {
          mirror_from = std::min(mirror_from, first_past);
        }
      }
      if (mirror_from < states.size()) {
        // Local road width from the pre-divergence section, where both
        // boundaries still run parallel.
        double width = 0.0;
        std::size_t n_pre = 0;
        for (std::size_t i = 0; i < mirror_from; ++i) {
          width += geom::point_polyline_distance(states[i].gt, opposite.points);
          ++n_pre;
        }
        if (n_pre > 0) width /= static_cast<double>(n_pre);

        // Follow the opposite boundary from the divergence onset to its end,
        // offset by the local road width toward this side: the prediction
        // keeps the reference's full extent instead of the diverging branch.
        const std::vector<double> opp_cum = geom::cumulative_arclength(opposite.points);
        const Vec2 onset_gt = states[mirror_from].gt;
        const Vec2 onset_foot = geom::closest_point_on_polyline(onset_gt, opposite.points);
        double onset_s = 0.0;
        {
          double best_d = std::numeric_limits<double>::infinity();
          const int probes = 400;
          for (int k = 0; k <= probes; ++k) {
            const double s = opp_cum.back() * k / probes;
            const double d =
                (geom::point_at_arclength(opposite.points, opp_cum, s) - onset_foot).squared_norm();
            if (d < best_d) {
              best_d = d;
              onset_s = s;
            }
          }
        }
        const Vec2 side_probe =
            geom::point_at_arclength(opposite.points, opp_cum, std::max(0.0, onset_s - 1.0));
        auto opposite_tangent = [&](double s) {
          const double ds = std::min(0.5, opp_cum.back() * 0.01);
          const Vec2 a = geom::point_at_arclength(opposite.points, opp_cum,
                                                  std::max(0.0, s - ds));
          const Vec2 b = geom::point_at_arclength(opposite.points, opp_cum,
                                                  std::min(opp_cum.back(), s + ds));
          return (b - a).normalized();
        };
        const double sign =
            opposite_tangent(onset_s).perp().dot(onset_gt - side_probe) >= 0.0 ? 1.0 : -1.0;

        const std::size_t n_mirror = states.size() - mirror_from;
        const double remaining = std::max(opp_cum.back() - onset_s, 1.0);
        for (std::size_t i = mirror_from; i < states.size(); ++i) {
          const double frac = n_mirror > 1
                                  ? static_cast<double>(i - mirror_from) /
                                        static_cast<double>(n_mirror - 1)
                                  : 0.0;
          const double s = onset_s + remaining * frac;
          const Vec2 o = geom::point_at_arclength(opposite.points, opp_cum, s);
          states[i].predicted = o + opposite_tangent(s).perp() * (sign * width);
          states[i].mirrored = true;
        }
      }
    }

    // Corridor snap for surviving points: strongest evidence offset along the
    // outward axis at snap_step resolution (spurious edges attract the point).
    // A point only leaves its prior when the gain clears snap_margin, so
    // stroke aliasing cannot jitter clean predictions.
    for (PointState& st : states) {
      if (st.mirrored || st.lost) continue;
      double best_e = st.evidence + params.snap_margin;
      double best_offset = 0.0;
      const int steps = static_cast<int>(std::floor(params.corridor / params.snap_step));
      const CameraModel& snap_cam = frame.rig.cameras[st.camera];
      const auto prior_px = snap_cam.project({st.gt.x, st.gt.y, 0.0});
      for (int k = -steps; k <= steps; ++k) {
        const double offset = k * params.snap_step;
        if (offset == 0.0) continue;
        const Vec2 probe = st.gt + st.outward * offset;
        if (prior_px) {
          const auto probe_px = snap_cam.project({probe.x, probe.y, 0.0});
          if (probe_px && std::hypot(probe_px->x - prior_px->x, probe_px->y - prior_px->y) <
                              params.min_probe_px)
            continue;  // same evidence neighbourhood, not a distinct edge
        }
        const double e =
            evidence_at_world(images, frame, st.camera, probe, params.evidence_window);
        const bool better =
            e > best_e + 1e-12 ||
            (std::abs(e - best_e) <= 1e-12 && best_offset != 0.0 &&
             (std::abs(offset) < std::abs(best_offset) - 1e-12 ||
              (std::abs(std::abs(offset) - std::abs(best_offset)) <= 1e-12 && offset < best_offset)));
        if (better) {
          best_e = e;
          best_offset = offset;
        }
      }
      st.predicted = st.gt + st.outward * best_offset;
    }

    // Isolated evidence loss: short lost runs interpolate between the nearest
    // surviving neighbours; longer runs (and runs without both neighbours)
    // keep the GT prior so local occlusion cannot silently erase structure —
    // only the anchored mirror pathway replaces whole segments.
    for (std::size_t i = 0; i < states.size(); ++i) {
      if (!states[i].lost || states[i].mirrored) continue;
      std::ptrdiff_t prev = static_cast<std::ptrdiff_t>(i) - 1;
      while (prev >= 0 && states[prev].lost && !states[prev].mirrored) --prev;
      std::size_t next = i + 1;
      while (next < states.size() && states[next].lost && !states[next].mirrored) ++next;
      const bool has_prev = prev >= 0;
      const bool has_next = next < states.size();
      const std::size_t run_len = next - static_cast<std::size_t>(prev) - 1;
      if (has_prev && has_next && run_len <= static_cast<std::size_t>(params.max_interp_run)) {
        const double t = (arc[i] - arc[prev]) / (arc[next] - arc[prev]);
        states[i].predicted =
            states[prev].predicted + (states[next].predicted - states[prev].predicted) * t;
      }  // else: keep the GT prior
    }

    // Confidence: mean evidence measured at the final predicted points.
    double conf_acc = 0.0;
    std::vector<Vec2> predicted;
    predicted.reserve(states.size());
    for (const PointState& st : states) {
      conf_acc += evidence_at_world(images, frame, st.camera, st.predicted, params.evidence_window);
      predicted.push_back(st.predicted);
    }

    std::vector<Vec2> clean;
    for (const Vec2& p : predicted)
      if (clean.empty() || (p - clean.back()).norm() > 1e-9) clean.push_back(p);

    PredictedElement pe;
    if (clean.size() < 2 || geom::cumulative_arclength(clean).back() < 1e-9) {
      pe.polyline = geom::resample_polyline(element, geom::kElementPoints);
    } else {
      pe.polyline =
          geom::resample_polyline(Polyline2D(clean, element.class_tag), geom::kElementPoints);
    }
    pe.polyline.class_tag = element.class_tag;
    pe.confidence = std::clamp(conf_acc / static_cast<double>(states.size()), 0.0, 1.0);
    out.elements.push_back(std::move(pe));
  }
  return out;
}

DesignatedBoundaries designate_boundaries(const PredictedMap& map) {
  DesignatedBoundaries out;
  double best_left = std::numeric_limits<double>::infinity();
  double best_right = std::numeric_limits<double>::infinity();
  for (const PredictedElement& e : map.elements) {
    if (e.polyline.class_tag != MapClass::kBoundary) continue;
    double acc = 0.0;
    int n = 0;
    for (const Vec2& p : e.polyline.points) {
      if (std::abs(p.y) > 15.0) continue;
      acc += p.x;
      ++n;
    }
    if (n < 3) continue;  // not alongside the ego
    const double mean_x = acc / n;
    if (mean_x < 0.0 && -mean_x < best_left) {
      best_left = -mean_x;
      out.left = e.polyline;
    } else if (mean_x >= 0.0 && mean_x < best_right) {
      best_right = mean_x;
      out.right = e.polyline;
    }
  }
  return out;
}

cls::RuleThresholds prediction_rule_thresholds() {
  cls::RuleThresholds th;
  th.resample_count = 96;
  return th;
}

SurrogateOracle::SurrogateOracle(SurrogateParams params) : params_(std::move(params)) {
  params_.validate();
}

PredictedMap SurrogateOracle::do_predict(const ImageSet& images, const SceneFrame& frame) {
  return surrogate_predict(frame, images, params_);
}

std::unique_ptr<MapOracle> make_oracle(const OracleSpec& spec) {
  if (spec.kind == "surrogate") return std::make_unique<SurrogateOracle>(spec.surrogate);
  if (spec.kind == "external") {
    if (spec.command.empty()) throw ConfigError("external oracle needs a command");
    return std::make_unique<ExternalOracle>(spec.command, spec.timeout_ms);
  }
  throw ConfigError("unknown oracle kind: " + spec.kind);
}

}  // namespace mapattack::oracle
