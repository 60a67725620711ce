#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mapattack/classifier.hpp"
#include "mapattack/image.hpp"
#include "mapattack/scene.hpp"

namespace mapattack::vlm {

using cls::RuleVerdict;
using cls::SceneLabel;
using scene::SceneFrame;

struct VlmConfig {
  std::string endpoint = "http://127.0.0.1:8080/v1/chat/completions";
  std::string model = "gpt-4o";
  std::string token_env = "MAPATTACK_VLM_TOKEN";  // bearer token, from the environment
  int max_retries = 3;
  int backoff_ms = 250;  // doubles per retry
  int timeout_s = 60;
  std::string log_dir;  // when set, requests/responses are written here for replay
};

struct VlmVerdict {
  SceneLabel label = SceneLabel::kSymmetric;
  std::string road_type;     // fork, turn, lane merging, ... when given
  std::string reasoning;
  std::string raw_response;  // stored verbatim
};

struct VlmRequest {
  std::string scene_id;
  std::string system_prompt;
  std::string payload_json;  // boundary coordinates + anchors as JSON text
  img::Image bev_view;       // map visualization: boundaries, ego, anchors
  std::optional<img::Image> annotated_front;  // front view with red anchor boxes
  std::string front_camera_id;
  bool front_annotation_missing = false;  // no anchor projected into a front-facing view
};

/// Multi-modal refinement request for a rule-flagged asymmetric scene.
VlmRequest build_vlm_request(const SceneFrame& frame, const RuleVerdict& verdict);

/// Chat-completion body for the request (text + data-URL image parts).
std::string encode_vlm_request(const VlmRequest& request, const std::string& model);
/// Inverse of encode_vlm_request, used for wire round-trip checks and replay.
VlmRequest decode_vlm_request(const std::string& body);

/// First balanced JSON object embedded in free text, if any.
std::optional<std::string> extract_first_json_object(const std::string& text);

/// Parse a chat-completion reply body into a verdict. Throws
/// RefinementFailedError when no verdict object can be extracted.
VlmVerdict parse_vlm_reply(const std::string& reply_body);

class VlmClient {
 public:
  explicit VlmClient(VlmConfig config);
  ~VlmClient();

  /// Sends the request with retries/backoff on transient failures.
  VlmVerdict refine(const VlmRequest& request);

  const VlmConfig& config() const { return config_; }

 private:
  VlmConfig config_;
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

inline VlmVerdict refine_with_vlm(VlmClient& client, const VlmRequest& request) {
  return client.refine(request);
}

/// The structured system prompt (role, skills, criteria, task, I/O format,
/// step-by-step reasoning, three worked examples).
std::string system_prompt();

}  // namespace mapattack::vlm
