#include "mapattack/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "mapattack/errors.hpp"

namespace mapattack::cls {

void RuleThresholds::validate() const {
  if (dk_thre <= 0.0 || kbar_thre <= 0.0 || anchor_dk_thre <= 0.0)
    throw ConfigError("classifier thresholds must be > 0");
  if (window_len < 1 || window_len % 2 == 0)
    throw ConfigError("classifier window_len must be odd and >= 1");
  if (resample_count < 3) throw ConfigError("classifier resample_count must be >= 3");
}

std::string to_string(SceneLabel label) {
  switch (label) {
    case SceneLabel::kSymmetric:
      return "symmetric";
    case SceneLabel::kAsymmetric:
      return "asymmetric";
    case SceneLabel::kNoBoundary:
      return "no_boundary";
  }
  return "symmetric";
}

SceneLabel scene_label_from_string(const std::string& s) {
  if (s == "symmetric") return SceneLabel::kSymmetric;
  if (s == "asymmetric") return SceneLabel::kAsymmetric;
  if (s == "no_boundary") return SceneLabel::kNoBoundary;
  throw DecodeError("unknown scene label: " + s);
}

std::string to_string(Side side) {
  switch (side) {
    case Side::kLeft:
      return "left";
    case Side::kRight:
      return "right";
    case Side::kNone:
      return "none";
  }
  return "none";
}

RuleVerdict classify_rule_based(const std::optional<Polyline2D>& left,
                                const std::optional<Polyline2D>& right,
                                const RuleThresholds& th) {
  th.validate();
  RuleVerdict verdict;
  if (!left || !right) {
    verdict.label = SceneLabel::kNoBoundary;
    return verdict;
  }

  const Polyline2D l = geom::resample_polyline(*left, static_cast<std::size_t>(th.resample_count));
  const Polyline2D r = geom::resample_polyline(*right, static_cast<std::size_t>(th.resample_count));
  const geom::CurvatureProfile pl = geom::curvature_profile(l, th.window_len);
  const geom::CurvatureProfile pr = geom::curvature_profile(r, th.window_len);

  const std::size_t n = pl.pointwise.size();
  std::vector<double> dk(n);
  std::size_t t_max = 0;
  for (std::size_t t = 0; t < n; ++t) {
    dk[t] = std::abs(pl.pointwise[t] - pr.pointwise[t]);
    if (dk[t] > dk[t_max]) t_max = t;
  }
  verdict.dk_max = dk[t_max];

  const bool straight_side_ok =
      std::min(pl.regional[t_max], pr.regional[t_max]) < th.kbar_thre;
  if (verdict.dk_max > th.dk_thre && straight_side_ok) {
    verdict.label = SceneLabel::kAsymmetric;
    verdict.diverging_side =
        pl.regional[t_max] >= pr.regional[t_max] ? Side::kLeft : Side::kRight;
    const Polyline2D& diverging = verdict.diverging_side == Side::kLeft ? l : r;

    // Divergence onset points: first index of each run where the aligned
    // curvature difference exceeds the anchor threshold.
    bool in_run = false;
    for (std::size_t t = 0; t < n; ++t) {
      const bool above = dk[t] > th.anchor_dk_thre;
      if (above && !in_run) verdict.anchors.push_back(diverging.points[t]);
      in_run = above;
    }
    // The asymmetric criterion fired, so the maximizing index is above the
    // anchor threshold whenever anchor_dk_thre <= dk_thre; guard the other case.
    if (verdict.anchors.empty()) verdict.anchors.push_back(diverging.points[t_max]);
  }
  return verdict;
}

BalanceAudit audit_dataset_balance(const std::vector<SceneLabel>& labels) {
  BalanceAudit audit;
  audit.n_total = labels.size();
  for (SceneLabel label : labels)
    if (label == SceneLabel::kAsymmetric) ++audit.n_asym;
  audit.fraction = audit.n_total == 0
                       ? 0.0
                       : static_cast<double>(audit.n_asym) / static_cast<double>(audit.n_total);
  return audit;
}

}  // namespace mapattack::cls
