#include "mapattack/vlm.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "mapattack/errors.hpp"

namespace mapattack::vlm {

namespace {

using json = nlohmann::ordered_json;

constexpr const char* kBevCamId = "__bev__";

struct UrlParts {
  std::string scheme_host_port;
  std::string path;
};

UrlParts split_url(const std::string& url) {
  const std::size_t scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("VLM endpoint needs a scheme: " + url);
  const std::size_t path_start = url.find('/', scheme_end + 3);
  UrlParts parts;
  if (path_start == std::string::npos) {
    parts.scheme_host_port = url;
    parts.path = "/";
  } else {
    parts.scheme_host_port = url.substr(0, path_start);
    parts.path = url.substr(path_start);
  }
  return parts;
}

std::string image_data_url(const img::Image& image) {
  return "data:image/png;base64," + img::base64_encode(img::encode_png(image));
}

img::Image image_from_data_url(const std::string& url) {
  const std::string prefix = "data:image/png;base64,";
  if (url.rfind(prefix, 0) != 0) throw DecodeError("not a PNG data URL");
  return img::decode_png(img::base64_decode(url.substr(prefix.size())));
}

}  // namespace

std::string system_prompt() {
  return R"(Role: You are a road-structure analyst for autonomous-driving map data. You inspect bird's-eye-view road boundary geometry together with camera imagery and judge whether a scene is structurally symmetric or asymmetric.

Skills: reading BEV coordinate plots, relating map geometry to camera views, recognizing road layouts (straight roads, intersections, forks, splits, merges, turn lanes), and judging whether left and right boundaries mirror each other.

Classification criteria:
- symmetric: left and right boundaries have similar or mirrored structure. Straight roads with roughly parallel edges and regular intersections where both sides open comparably are symmetric, even when the boundary polylines are irregular.
- asymmetric: exactly one boundary clearly diverges (turns, splits off, or merges) while the opposite boundary stays comparatively straight. Forks, driveway or parking-lot entrances, lane merges, and lane splits are asymmetric.

Task: You receive (1) structured JSON with left/right boundary coordinates in meters (ego at the origin, y forward) and candidate divergence positions ("anchors"), (2) a BEV plot of the boundaries, the ego, and the anchors, and (3) when available, a front camera image with red boxes at the anchor positions. A rule-based curvature filter already flagged this scene as asymmetric; your job is to confirm or reject that flag.

Reasoning steps: (1) describe the road layout from the BEV plot; (2) compare how the left and right boundaries behave around the anchors; (3) cross-check with the camera image when provided; (4) decide symmetric or asymmetric and name the road type when applicable; (5) note any safety-relevant structure you see.

Output format: reply with a single JSON object:
{"classification": "symmetric" | "asymmetric", "road_type": "<fork|turn|lane merging|lane split|intersection|straight|other>", "reasoning": "<short explanation>"}

Example 1: Both boundaries run parallel for the whole frame, anchors sit on small curvature noise. -> {"classification": "symmetric", "road_type": "straight", "reasoning": "Both boundaries stay parallel; the flagged points are noise, no divergence."}

Example 2: The right boundary bends away at y=14 m into a side entrance while the left boundary continues straight. -> {"classification": "asymmetric", "road_type": "fork", "reasoning": "Right boundary diverges into an entrance at the anchor while the left stays straight."}

Example 3: Both boundaries open outward at a crossroad; the left corner is drawn with an irregular jagged polyline that inflated its curvature. -> {"classification": "symmetric", "road_type": "intersection", "reasoning": "Both sides open at the junction; the curvature spike comes from an irregular corner, not a one-sided divergence."})";
}

namespace {

img::Image render_bev_view(const SceneFrame& frame, const RuleVerdict& verdict) {
  const scene::BevRange range = scene::bev_range(frame, 2.0);
  const int size = 480;
  img::Image view(size, size, {1.0f, 1.0f, 1.0f});
  const double span_x = range.x_max - range.x_min;
  const double span_y = range.y_max - range.y_min;
  const double scale = std::min(size / span_x, size / span_y);
  auto to_px = [&](const geom::Vec2& p) {
    return geom::Vec2{(p.x - range.x_min) * scale, size - (p.y - range.y_min) * scale};
  };

  auto draw = [&](const geom::Polyline2D& poly, const img::Color& color, double stroke) {
    for (std::size_t i = 1; i < poly.points.size(); ++i) {
      const geom::Vec2 a = to_px(poly.points[i - 1]);
      const geom::Vec2 b = to_px(poly.points[i]);
      img::stroke_line(view, a.x, a.y, b.x, b.y, stroke, color);
    }
  };
  for (const geom::Polyline2D& poly : frame.gt_map) {
    switch (poly.class_tag) {
      case geom::MapClass::kBoundary:
        draw(poly, {0.05f, 0.05f, 0.05f}, 1.6);
        break;
      case geom::MapClass::kDivider:
        draw(poly, {0.55f, 0.55f, 0.55f}, 1.0);
        break;
      case geom::MapClass::kPedCrossing:
        draw(poly, {0.4f, 0.55f, 0.9f}, 1.0);
        break;
    }
  }
  // Ego marker (triangle pointing forward) and anchors.
  const geom::Vec2 ego = to_px({frame.ego_pose.x, frame.ego_pose.y});
  img::stamp_disk(view, ego.x, ego.y, 4.0, {0.1f, 0.6f, 0.1f});
  img::stroke_line(view, ego.x, ego.y, ego.x, ego.y - 10.0, 1.5, {0.1f, 0.6f, 0.1f});
  for (const geom::Vec2& anchor : verdict.anchors) {
    const geom::Vec2 a = to_px(anchor);
    img::stroke_rect(view, a.x - 6, a.y - 6, a.x + 6, a.y + 6, 1.2, {0.9f, 0.1f, 0.1f});
  }
  img::quantize_to_8bit(view);
  return view;
}

}  // namespace

VlmRequest build_vlm_request(const SceneFrame& frame, const RuleVerdict& verdict) {
  if (verdict.label != SceneLabel::kAsymmetric)
    throw ConfigError("VLM refinement runs on rule-asymmetric scenes only");

  VlmRequest request;
  request.scene_id = frame.scene_id;
  request.system_prompt = system_prompt();
  request.bev_view = render_bev_view(frame, verdict);

  // Annotate the front-facing view containing the most anchors.
  const char* front_ids[3] = {"front", "front_left", "front_right"};
  int best_count = 0;
  std::string best_cam;
  for (const char* id : front_ids) {
    const cam::CameraModel* camera = frame.rig.find(id);
    if (!camera || frame.images.find(id) == frame.images.end()) continue;
    int count = 0;
    for (const geom::Vec2& anchor : verdict.anchors)
      if (camera->project({anchor.x, anchor.y, 0.0})) ++count;
    if (count > best_count) {
      best_count = count;
      best_cam = id;
    }
  }
  if (best_count > 0) {
    const cam::CameraModel& camera = *frame.rig.find(best_cam);
    img::Image annotated = frame.images.at(best_cam);
    for (const geom::Vec2& anchor : verdict.anchors) {
      if (const auto px = camera.project({anchor.x, anchor.y, 0.0})) {
        img::stroke_rect(annotated, px->x - 12, px->y - 12, px->x + 12, px->y + 12, 1.5,
                         {0.95f, 0.05f, 0.05f});
      }
    }
    img::quantize_to_8bit(annotated);
    request.annotated_front = std::move(annotated);
    request.front_camera_id = best_cam;
  } else {
    request.front_annotation_missing = true;
  }

  json payload;
  payload["scene_id"] = frame.scene_id;
  payload["front_camera_id"] = request.front_camera_id;
  payload["front_annotation_missing"] = request.front_annotation_missing;
  auto poly_json = [](const geom::Polyline2D& poly) {
    json pts = json::array();
    for (const geom::Vec2& p : poly.points) pts.push_back(json::array({p.x, p.y}));
    return pts;
  };
  payload["left_boundary"] =
      frame.has_left_boundary() ? poly_json(frame.left_boundary()) : json::array();
  payload["right_boundary"] =
      frame.has_right_boundary() ? poly_json(frame.right_boundary()) : json::array();
  json anchors = json::array();
  for (const geom::Vec2& a : verdict.anchors) anchors.push_back(json::array({a.x, a.y}));
  payload["anchors"] = std::move(anchors);
  payload["dk_max"] = verdict.dk_max;
  payload["diverging_side"] = cls::to_string(verdict.diverging_side);
  request.payload_json = payload.dump();
  return request;
}

std::string encode_vlm_request(const VlmRequest& request, const std::string& model) {
  json content = json::array();
  content.push_back(json{{"type", "text"}, {"text", request.payload_json}});
  content.push_back(json{{"type", "image_url"},
                         {"image_url", json{{"url", image_data_url(request.bev_view)},
                                            {"detail", kBevCamId}}}});
  if (request.annotated_front) {
    content.push_back(json{{"type", "image_url"},
                           {"image_url", json{{"url", image_data_url(*request.annotated_front)},
                                              {"detail", request.front_camera_id}}}});
  }
  json body;
  body["model"] = model;
  body["messages"] = json::array({
      json{{"role", "system"}, {"content", request.system_prompt}},
      json{{"role", "user"}, {"content", std::move(content)}},
  });
  body["scene_id"] = request.scene_id;
  return body.dump();
}

VlmRequest decode_vlm_request(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw DecodeError("bad VLM request body: " + std::string(e.what()), e.byte);
  }
  VlmRequest request;
  try {
    request.scene_id = j.value("scene_id", "");
    for (const auto& msg : j.at("messages")) {
      const std::string role = msg.at("role").get<std::string>();
      if (role == "system") {
        request.system_prompt = msg.at("content").get<std::string>();
      } else if (role == "user") {
        bool saw_bev = false;
        for (const auto& part : msg.at("content")) {
          const std::string type = part.at("type").get<std::string>();
          if (type == "text") {
            request.payload_json = part.at("text").get<std::string>();
          } else if (type == "image_url") {
            const img::Image image =
                image_from_data_url(part.at("image_url").at("url").get<std::string>());
            if (!saw_bev) {
              request.bev_view = image;
              saw_bev = true;
            } else {
              request.annotated_front = image;
              request.front_camera_id =
                  part.at("image_url").value("detail", std::string{});
            }
          }
        }
      }
    }
    if (!request.payload_json.empty()) {
      const json payload = json::parse(request.payload_json);
      request.front_annotation_missing = payload.value("front_annotation_missing", false);
      if (request.front_camera_id.empty())
        request.front_camera_id = payload.value("front_camera_id", "");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError("bad VLM request body: " + std::string(e.what()));
  }
  return request;
}

std::optional<std::string> extract_first_json_object(const std::string& text) {
  const std::size_t start = text.find('{');
  if (start == std::string::npos) return std::nullopt;
  for (std::size_t begin = start; begin != std::string::npos; begin = text.find('{', begin + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = begin; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped)
          escaped = false;
        else if (c == '\\')
          escaped = true;
        else if (c == '"')
          in_string = false;
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        --depth;
        if (depth == 0) {
          const std::string candidate = text.substr(begin, i - begin + 1);
          try {
            (void)nlohmann::json::parse(candidate);
            return candidate;
          } catch (const nlohmann::json::parse_error&) {
            break;  // try the next opening brace
          }
        }
      }
    }
  }
  return std::nullopt;
}

VlmVerdict parse_vlm_reply(const std::string& reply_body) {
  std::string content;
  try {
    const nlohmann::json j = nlohmann::json::parse(reply_body);
    if (j.contains("choices") && !j.at("choices").empty())
      content = j.at("choices").at(0).at("message").at("content").get<std::string>();
    else if (j.contains("message"))
      content = j.at("message").at("content").get<std::string>();
    else if (j.contains("content") && j.at("content").is_string())
      content = j.at("content").get<std::string>();
    else
      content = reply_body;
  } catch (const nlohmann::json::exception&) {
    content = reply_body;  // maybe the verdict object is embedded in raw text
  }

  const std::optional<std::string> object = extract_first_json_object(content);
  if (!object) throw RefinementFailedError("no JSON verdict object in VLM reply");

  VlmVerdict verdict;
  verdict.raw_response = reply_body;
  try {
    const nlohmann::json obj = nlohmann::json::parse(*object);
    std::string label;
    if (obj.contains("classification"))
      label = obj.at("classification").get<std::string>();
    else if (obj.contains("label"))
      label = obj.at("label").get<std::string>();
    else
      throw RefinementFailedError("VLM verdict object lacks a classification");
    if (label == "symmetric")
      verdict.label = SceneLabel::kSymmetric;
    else if (label == "asymmetric")
      verdict.label = SceneLabel::kAsymmetric;
    else
      throw RefinementFailedError("VLM verdict classification not parseable: " + label);
    verdict.road_type = obj.value("road_type", std::string{});
    verdict.reasoning = obj.value("reasoning", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw RefinementFailedError("VLM verdict object malformed: " + std::string(e.what()));
  }
  // Keep surrounding prose as context when the reply wrapped the object.
  if (verdict.reasoning.empty() && content != *object) verdict.reasoning = content;
  return verdict;
}

struct VlmClient::Impl {
  std::unique_ptr<httplib::Client> http;
  UrlParts url;
};

VlmClient::VlmClient(VlmConfig config) : config_(std::move(config)), impl_(new Impl) {
  impl_->url = split_url(config_.endpoint);
  impl_->http = std::make_unique<httplib::Client>(impl_->url.scheme_host_port);
  impl_->http->set_connection_timeout(config_.timeout_s, 0);
  impl_->http->set_read_timeout(config_.timeout_s, 0);
}

VlmClient::~VlmClient() = default;

VlmVerdict VlmClient::refine(const VlmRequest& request) {
  const std::string body = encode_vlm_request(request, config_.model);

  httplib::Headers headers;
  if (!config_.token_env.empty()) {
    if (const char* token = std::getenv(config_.token_env.c_str()); token && *token)
      headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  if (!config_.log_dir.empty()) {
    std::filesystem::create_directories(config_.log_dir);
    std::ofstream out(std::filesystem::path(config_.log_dir) /
                      (request.scene_id + "_request.json"));
    out << body << "\n";
  }

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(
          std::chrono::milliseconds(config_.backoff_ms * (1LL << (attempt - 1))));
    }
    httplib::Result result =
        impl_->http->Post(impl_->url.path, headers, body, "application/json");
    if (!result) {
      last_error = "transport error contacting " + config_.endpoint + ": " +
                   httplib::to_string(result.error());
      continue;
    }
    if (result->status == 401 || result->status == 403)
      throw ServiceError("VLM endpoint rejected auth (" + std::to_string(result->status) + ") at " +
                         config_.endpoint);
    if (result->status >= 500 || result->status == 429) {
      last_error = "VLM endpoint returned " + std::to_string(result->status);
      continue;
    }
    if (result->status != 200) {
      throw ServiceError("VLM endpoint returned " + std::to_string(result->status) + " at " +
                         config_.endpoint + ": " + result->body);
    }
    if (!config_.log_dir.empty()) {
      std::ofstream out(std::filesystem::path(config_.log_dir) /
                        (request.scene_id + "_response.json"));
      out << result->body << "\n";
    }
    try {
      return parse_vlm_reply(result->body);
    } catch (const RefinementFailedError& e) {
      last_error = e.what();  // non-JSON reply counts as transient per contract
      continue;
    }
  }
  throw RefinementFailedError("VLM refinement failed after " +
                              std::to_string(config_.max_retries + 1) + " attempts: " + last_error);
}

}  // namespace mapattack::vlm
