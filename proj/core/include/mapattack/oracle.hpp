#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mapattack/classifier.hpp"
#include "mapattack/geometry.hpp"
#include "mapattack/image.hpp"
#include "mapattack/scene.hpp"

namespace mapattack::oracle {

using geom::MapClass;
using geom::Polyline2D;
using geom::Vec2;
using scene::ImageSet;
using scene::SceneFrame;

struct PredictedElement {
  Polyline2D polyline;  // resampled to geom::kElementPoints
  double confidence = 0.0;
};

struct PredictedMap {
  std::vector<PredictedElement> elements;
};

std::string predicted_map_to_json(const PredictedMap& map);
PredictedMap predicted_map_from_json(const std::string& text);

/// Normalized mean gradient magnitude (central differences on luminance) over
/// an odd `window` around (x, y); an ideal unit step through the window center
/// scores 1. Clipped at image borders.
double edge_evidence(const img::Image& image, int x, int y, int window);

struct SurrogateParams {
  int evidence_window = 5;              // px
  double evidence_thre = 0.22;          // normalized gradient threshold
  double corridor = 2.0;                // m, snap search half-width
  double snap_step = 0.25;              // m, corridor search step
  double snap_margin = 0.2;            // min evidence gain before a point leaves its prior
  double min_probe_px = 4.0;            // probes closer than this to the prior's pixel are not
                                        // distinct edges (far-field aliasing guard)
  double mirror_window = 3.5;           // m around anchors triggering fallback
  double occlusion_fraction_thre = 0.8; // fraction of window points losing evidence
  int max_interp_run = 3;               // longest lost run interpolated; longer runs keep the prior
  int internal_points = 64;             // working resolution per element
  cls::RuleThresholds anchor_rule{};    // internal anchor extraction from GT

  void validate() const;
};

/// Queryable map-construction model. Implementations must be deterministic in
/// (frame, images); query_count increments by one per predict call.
class MapOracle {
 public:
  virtual ~MapOracle() = default;

  PredictedMap predict(const ImageSet& images, const SceneFrame& frame) {
    ++query_count_;
    return do_predict(images, frame);
  }
  std::uint64_t query_count() const { return query_count_; }
  virtual std::string name() const = 0;

 protected:
  virtual PredictedMap do_predict(const ImageSet& images, const SceneFrame& frame) = 0;

 private:
  std::uint64_t query_count_ = 0;
};

/// Pure-function form of the built-in surrogate (see SurrogateOracle).
PredictedMap surrogate_predict(const SceneFrame& frame, const ImageSet& images,
                               const SurrogateParams& params = {});

/// Designated left/right boundaries of a predicted map for scene-level
/// re-classification: per side of the ego, the boundary element with points
/// alongside the ego (|y| <= 15 m) whose mean lateral offset is smallest.
struct DesignatedBoundaries {
  std::optional<Polyline2D> left;
  std::optional<Polyline2D> right;
};
DesignatedBoundaries designate_boundaries(const PredictedMap& map);

/// Thresholds for re-classifying predicted maps with the GT-side criteria at
/// a fine shared cardinality (real structure keeps its curvature, straightened
/// predictions read symmetric).
cls::RuleThresholds prediction_rule_thresholds();

/// Deterministic symmetry-biased surrogate. GT geometry acts as the prediction
/// prior: points snap to the strongest nearby image edge along the outward
/// corridor; losing edge evidence around an asymmetry anchor replaces the
/// post-anchor segment with the opposite boundary mirrored across the
/// centerline. This reproduces the symmetric-fallback failure mode explicitly
/// and is a surrogate mechanism, not a claim about any production model.
class SurrogateOracle : public MapOracle {
 public:
  explicit SurrogateOracle(SurrogateParams params = {});
  std::string name() const override { return "surrogate"; }
  const SurrogateParams& params() const { return params_; }

 protected:
  PredictedMap do_predict(const ImageSet& images, const SceneFrame& frame) override;

 private:
  SurrogateParams params_;
};

// --- external oracle wire format --------------------------------------------

inline constexpr int kWireVersion = 1;

/// Frame a JSON payload as a length-prefixed wire message (u32 big-endian).
std::vector<std::uint8_t> encode_wire_message(const std::string& json_payload);

/// Parse one length-prefixed message from `bytes` starting at `offset`;
/// advances offset past the message. Throws DecodeError (with byte offset) on
/// truncation or malformed payloads.
std::string decode_wire_message(const std::vector<std::uint8_t>& bytes, std::size_t& offset);

std::string make_handshake_json();
std::string make_predict_request_json(const std::string& frame_ref, const ImageSet& images);
PredictedMap parse_predict_reply_json(const std::string& payload);

/// Adapter that spawns a subprocess speaking the length-prefixed JSON protocol
/// on stdio (versioned handshake first). Throws OracleUnavailableError when
/// the handshake fails.
class ExternalOracle : public MapOracle {
 public:
  explicit ExternalOracle(std::vector<std::string> command, int timeout_ms = 30000);
  ~ExternalOracle() override;
  std::string name() const override { return "external"; }

 protected:
  PredictedMap do_predict(const ImageSet& images, const SceneFrame& frame) override;

 private:
  struct Process;
  std::unique_ptr<Process> proc_;
};

struct OracleSpec {
  std::string kind = "surrogate";  // surrogate | external
  SurrogateParams surrogate;
  std::vector<std::string> command;  // external adapter argv
  int timeout_ms = 30000;
};

std::unique_ptr<MapOracle> make_oracle(const OracleSpec& spec);

}  // namespace mapattack::oracle
