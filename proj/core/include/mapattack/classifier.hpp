#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mapattack/geometry.hpp"

namespace mapattack::cls {

using geom::Polyline2D;
using geom::Vec2;

struct RuleThresholds {
  double dk_thre = 0.3;         // 1/m, curvature-difference threshold
  double kbar_thre = 0.15;      // 1/m, regional-curvature ceiling for the straighter side
  double anchor_dk_thre = 0.3;  // 1/m, per-point threshold for anchor marking
  int window_len = 5;           // points, regional curvature window
  int resample_count = 128;     // shared cardinality for index alignment

  void validate() const;
};

enum class SceneLabel { kSymmetric, kAsymmetric, kNoBoundary };
enum class Side { kLeft, kRight, kNone };

std::string to_string(SceneLabel label);
SceneLabel scene_label_from_string(const std::string& s);
std::string to_string(Side side);

struct RuleVerdict {
  SceneLabel label = SceneLabel::kSymmetric;
  double dk_max = 0.0;
  std::vector<Vec2> anchors;  // divergence onset points on the diverging boundary
  Side diverging_side = Side::kNone;
};

/// Curvature-difference classification over index-aligned resampled boundaries.
/// A missing boundary yields the no_boundary verdict rather than an error.
RuleVerdict classify_rule_based(const std::optional<Polyline2D>& left,
                                const std::optional<Polyline2D>& right,
                                const RuleThresholds& th = {});

struct BalanceAudit {
  std::size_t n_total = 0;
  std::size_t n_asym = 0;
  double fraction = 0.0;  // 0 by convention on an empty set
};

BalanceAudit audit_dataset_balance(const std::vector<SceneLabel>& labels);

}  // namespace mapattack::cls
