#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "mapattack/classifier.hpp"
#include "mapattack/errors.hpp"
#include "mapattack/scene.hpp"
#include "mapattack/vlm.hpp"

using namespace mapattack;
using cls::RuleVerdict;
using cls::SceneLabel;

namespace {

scene::SceneFrame fork_frame(std::uint64_t seed = 91) {
  scene::SceneSpec spec;
  spec.road_kind = scene::RoadKind::kFork;
  spec.seed = seed;
  spec.turn_radius = 2.2;
  scene::SceneFrame frame = scene::generate_scene(spec);
  scene::render_surround_views(frame);
  return frame;
}

RuleVerdict rule_verdict(const scene::SceneFrame& frame) {
  return cls::classify_rule_based(frame.left_boundary(), frame.right_boundary(), {});
}

/// Serves canned bodies on 127.0.0.1; stops on destruction.
class MockVlmServer {
 public:
  explicit MockVlmServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockVlmServer() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const {
    return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::string chat_body(const std::string& content) {
  nlohmann::json j;
  j["choices"] = nlohmann::json::array(
      {nlohmann::json{{"message", nlohmann::json{{"role", "assistant"}, {"content", content}}}}});
  return j.dump();
}

vlm::VlmConfig fast_config(const std::string& endpoint) {
  vlm::VlmConfig config;
  config.endpoint = endpoint;
  config.max_retries = 2;
  config.backoff_ms = 5;
  config.timeout_s = 5;
  return config;
}

bool has_red_box_pixels(const img::Image& im) {
  int red = 0;
  for (std::size_t i = 0; i < im.data.size(); i += 3) {
    if (im.data[i] > 0.85f && im.data[i + 1] < 0.15f && im.data[i + 2] < 0.15f) ++red;
  }
  return red > 10;
}

}  // namespace

TEST_CASE("request construction annotates anchors in the front view") {
  const scene::SceneFrame frame = fork_frame();
  const RuleVerdict verdict = rule_verdict(frame);
  REQUIRE(verdict.label == SceneLabel::kAsymmetric);
  REQUIRE(verdict.anchors.size() == 1);

  const vlm::VlmRequest request = vlm::build_vlm_request(frame, verdict);
  CHECK(request.scene_id == frame.scene_id);
  CHECK_FALSE(request.front_annotation_missing);
  REQUIRE(request.annotated_front.has_value());
  CHECK(has_red_box_pixels(*request.annotated_front));
  CHECK(has_red_box_pixels(request.bev_view));  // anchor markers in the BEV plot
  CHECK(request.system_prompt.find("Output format") != std::string::npos);
  CHECK(request.system_prompt.find("Example 3") != std::string::npos);

  const nlohmann::json payload = nlohmann::json::parse(request.payload_json);
  CHECK(payload.at("anchors").size() == 1);
  CHECK(payload.at("left_boundary").size() > 2);
}

TEST_CASE("an anchor behind the ego sets the annotation-missing flag") {
  const scene::SceneFrame frame = fork_frame();
  RuleVerdict verdict = rule_verdict(frame);
  verdict.anchors = {{0.0, -10.0}};  // behind every front-facing camera
  const vlm::VlmRequest request = vlm::build_vlm_request(frame, verdict);
  CHECK(request.front_annotation_missing);
  CHECK_FALSE(request.annotated_front.has_value());
}

TEST_CASE("request encoding round-trips through the wire format") {
  const scene::SceneFrame frame = fork_frame();
  const vlm::VlmRequest request = vlm::build_vlm_request(frame, rule_verdict(frame));
  const std::string body = vlm::encode_vlm_request(request, "gpt-4o");
  const vlm::VlmRequest back = vlm::decode_vlm_request(body);
  CHECK(back.scene_id == request.scene_id);
  CHECK(back.system_prompt == request.system_prompt);
  CHECK(back.payload_json == request.payload_json);
  CHECK(back.bev_view == request.bev_view);
  REQUIRE(back.annotated_front.has_value());
  CHECK(*back.annotated_front == *request.annotated_front);
  CHECK(back.front_camera_id == request.front_camera_id);
  CHECK(back.front_annotation_missing == request.front_annotation_missing);
}

TEST_CASE("first JSON object extraction handles prose and nesting") {
  CHECK_FALSE(vlm::extract_first_json_object("no json here").has_value());
  CHECK(*vlm::extract_first_json_object(R"({"a":1})") == R"({"a":1})");
  CHECK(*vlm::extract_first_json_object(R"(text before {"a":{"b":2}} after)") ==
        R"({"a":{"b":2}})");
  // Braces inside strings do not fool the scanner.
  CHECK(*vlm::extract_first_json_object(R"({"a":"}{","b":1})") == R"({"a":"}{","b":1})");
  // A broken first candidate falls through to the next object.
  const auto got = vlm::extract_first_json_object(R"({broken {"x": 3})");
  REQUIRE(got.has_value());
  CHECK(*got == R"({"x": 3})");
}

TEST_CASE("mock service: asymmetric confirmation parses into a verdict") {
  MockVlmServer server([](const httplib::Request&, httplib::Response& res) {
    res.set_content(
        chat_body(R"({"classification":"asymmetric","road_type":"fork","reasoning":"right boundary diverges"})"),
        "application/json");
  });
  vlm::VlmClient client(fast_config(server.endpoint()));
  const scene::SceneFrame frame = fork_frame();
  const vlm::VlmVerdict verdict = client.refine(vlm::build_vlm_request(frame, rule_verdict(frame)));
  CHECK(verdict.label == SceneLabel::kAsymmetric);
  CHECK(verdict.road_type == "fork");
  CHECK(verdict.reasoning == "right boundary diverges");
  CHECK_FALSE(verdict.raw_response.empty());
}

TEST_CASE("mock service: irregular crossroad flagged by the rule step is corrected to symmetric") {
  // Rule-based false positive: skewed intersection with uneven corner fillets.
  scene::SceneSpec spec;
  spec.road_kind = scene::RoadKind::kIntersection;
  spec.seed = 92;
  spec.skew = 2.5;
  scene::SceneFrame frame = scene::generate_scene(spec);
  scene::render_surround_views(frame);
  const RuleVerdict rule = rule_verdict(frame);
  REQUIRE(rule.label == SceneLabel::kAsymmetric);  // misidentified crossroad
  REQUIRE_FALSE(frame.truth.asymmetric);

  MockVlmServer server([](const httplib::Request&, httplib::Response& res) {
    res.set_content(
        chat_body(R"({"classification":"symmetric","road_type":"intersection","reasoning":"both sides open at the junction"})"),
        "application/json");
  });
  vlm::VlmClient client(fast_config(server.endpoint()));
  const vlm::VlmVerdict verdict = client.refine(vlm::build_vlm_request(frame, rule));
  CHECK(verdict.label == SceneLabel::kSymmetric);
}

TEST_CASE("mock service: prose with an embedded JSON object is parsed") {
  MockVlmServer server([](const httplib::Request&, httplib::Response& res) {
    res.set_content(chat_body("Looking at the scene, the layout is clear.\n"
                              "{\"classification\": \"asymmetric\", \"road_type\": \"lane merging\"}\n"
                              "Hope that helps."),
                    "application/json");
  });
  vlm::VlmClient client(fast_config(server.endpoint()));
  const scene::SceneFrame frame = fork_frame();
  const vlm::VlmVerdict verdict = client.refine(vlm::build_vlm_request(frame, rule_verdict(frame)));
  CHECK(verdict.label == SceneLabel::kAsymmetric);
  CHECK(verdict.road_type == "lane merging");
  CHECK(verdict.reasoning.find("Hope that helps") != std::string::npos);
}

TEST_CASE("mock service: transient 500s are retried with backoff") {
  std::atomic<int> calls{0};
  MockVlmServer server([&calls](const httplib::Request&, httplib::Response& res) {
    if (calls.fetch_add(1) < 2) {
      res.status = 500;
      res.set_content("overloaded", "text/plain");
      return;
    }
    res.set_content(chat_body(R"({"classification":"asymmetric"})"), "application/json");
  });
  vlm::VlmClient client(fast_config(server.endpoint()));
  const scene::SceneFrame frame = fork_frame();
  const vlm::VlmVerdict verdict = client.refine(vlm::build_vlm_request(frame, rule_verdict(frame)));
  CHECK(verdict.label == SceneLabel::kAsymmetric);
  CHECK(calls.load() == 3);
}

TEST_CASE("mock service: non-JSON replies fail refinement after retries") {
  std::atomic<int> calls{0};
  MockVlmServer server([&calls](const httplib::Request&, httplib::Response& res) {
    calls.fetch_add(1);
    res.set_content(chat_body("the scene looks asymmetric to me"), "application/json");
  });
  vlm::VlmClient client(fast_config(server.endpoint()));
  const scene::SceneFrame frame = fork_frame();
  CHECK_THROWS_AS(client.refine(vlm::build_vlm_request(frame, rule_verdict(frame))),
                  RefinementFailedError);
  CHECK(calls.load() == 3);  // initial try plus two retries
}

TEST_CASE("mock service: auth failures surface the endpoint") {
  MockVlmServer server([](const httplib::Request&, httplib::Response& res) {
    res.status = 401;
    res.set_content("unauthorized", "text/plain");
  });
  vlm::VlmClient client(fast_config(server.endpoint()));
  const scene::SceneFrame frame = fork_frame();
  try {
    client.refine(vlm::build_vlm_request(frame, rule_verdict(frame)));
    FAIL("expected ServiceError");
  } catch (const ServiceError& e) {
    CHECK(std::string(e.what()).find("127.0.0.1") != std::string::npos);
  }
}

TEST_CASE("bearer token from the environment reaches the request") {
  std::string seen_auth;
  MockVlmServer server([&seen_auth](const httplib::Request& req, httplib::Response& res) {
    if (req.has_header("Authorization")) seen_auth = req.get_header_value("Authorization");
    res.set_content(chat_body(R"({"classification":"symmetric"})"), "application/json");
  });
  setenv("MAPATTACK_TEST_TOKEN", "sekrit", 1);
  vlm::VlmConfig config = fast_config(server.endpoint());
  config.token_env = "MAPATTACK_TEST_TOKEN";
  vlm::VlmClient client(config);
  const scene::SceneFrame frame = fork_frame();
  (void)client.refine(vlm::build_vlm_request(frame, rule_verdict(frame)));
  CHECK(seen_auth == "Bearer sekrit");
  unsetenv("MAPATTACK_TEST_TOKEN");
}
