#include "mapattack/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "mapattack/errors.hpp"
#include "mapattack/plots.hpp"
#include "mapattack/rng.hpp"
#include "mapattack/version.hpp"

namespace mapattack::pipeline {

namespace {

using json = nlohmann::ordered_json;

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t hash = 1469598103934665603ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write: " + tmp.string());
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

json parse_json_file(const std::filesystem::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DecodeError("bad JSON in " + path.string() + ": " + e.what(), e.byte);
  }
}

/// Records artifacts a stage wrote, keyed by path relative to the run dir.
class ArtifactLog {
 public:
  explicit ArtifactLog(std::filesystem::path root) : root_(std::move(root)) {}

  void add(const std::filesystem::path& path) {
    const std::string rel = std::filesystem::relative(path, root_).generic_string();
    std::lock_guard<std::mutex> lock(mu_);
    crcs_[rel] = img::crc32_of_file(path);
  }

  json to_json() const {
    json out = json::object();
    for (const auto& [rel, crc] : crcs_) out[rel] = crc;
    return out;
  }

 private:
  std::filesystem::path root_;
  std::mutex mu_;
  std::map<std::string, std::uint32_t> crcs_;
};

void update_manifest(const RunConfig& config, const std::string& stage, double wall_ms,
                     const ArtifactLog& artifacts) {
  const std::filesystem::path path = config.out_dir / "manifest.json";
  json manifest;
  if (std::filesystem::exists(path)) manifest = parse_json_file(path);
  manifest["tool_version"] = kVersion;
  manifest["schema_version"] = kSchemaVersion;
  manifest["config_snapshot"] = json::parse(config.snapshot_json());
  if (!manifest.contains("stages")) manifest["stages"] = json::object();
  manifest["stages"][stage] =
      json{{"wall_ms", wall_ms}, {"artifacts", artifacts.to_json()}};
  write_text_atomic(path, manifest.dump(2) + "\n");
}

class StageTimer {
 public:
  StageTimer() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

// --- config parsing ----------------------------------------------------------

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_classifier(const json& j, cls::RuleThresholds& th) {
  maybe(j, "dk_thre", th.dk_thre);
  maybe(j, "kbar_thre", th.kbar_thre);
  maybe(j, "anchor_dk_thre", th.anchor_dk_thre);
  maybe(j, "window_len", th.window_len);
  maybe(j, "resample_count", th.resample_count);
}

void parse_surrogate(const json& j, oracle::SurrogateParams& params) {
  maybe(j, "evidence_window", params.evidence_window);
  maybe(j, "evidence_thre", params.evidence_thre);
  maybe(j, "corridor", params.corridor);
  maybe(j, "snap_step", params.snap_step);
  maybe(j, "snap_margin", params.snap_margin);
  maybe(j, "min_probe_px", params.min_probe_px);
  maybe(j, "max_interp_run", params.max_interp_run);
  maybe(j, "mirror_window", params.mirror_window);
  maybe(j, "occlusion_fraction_thre", params.occlusion_fraction_thre);
  maybe(j, "internal_points", params.internal_points);
  if (j.contains("anchor_rule")) parse_classifier(j.at("anchor_rule"), params.anchor_rule);
}

void parse_flashlight(const json& j, interf::FlashlightSpec& spec) {
  maybe(j, "lumens", spec.lumens);
  maybe(j, "beam_angle_deg", spec.beam_angle_deg);
  maybe(j, "reference_distance", spec.reference_distance);
  maybe(j, "radius_px", spec.radius_px);
  maybe(j, "min_luminance", spec.min_luminance);
  if (j.contains("color")) {
    for (int c = 0; c < 3; ++c) spec.color[c] = j.at("color").at(c).get<float>();
  }
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  RunConfig config;
  if (!j.contains("seed")) throw ConfigError("config requires a seed");
  config.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("out_dir")) config.out_dir = j.at("out_dir").get<std::string>();
  maybe(j, "jobs", config.jobs);
  if (config.jobs < 1) throw ConfigError("jobs must be >= 1");

  if (j.contains("suite")) {
    SuiteConfig suite;
    suite.suite_seed = config.seed;
    const json& s = j.at("suite");
    maybe(s, "suite_seed", suite.suite_seed);
    if (s.contains("counts")) {
      for (const auto& [kind, count] : s.at("counts").items()) {
        (void)scene::road_kind_from_string(kind);  // validates
        suite.counts[kind] = count.get<int>();
        if (suite.counts[kind] < 0) throw ConfigError("suite counts must be >= 0");
      }
    }
    config.suite = std::move(suite);
  }
  if (j.contains("scenes")) {
    for (const auto& p : j.at("scenes")) config.scenes.emplace_back(p.get<std::string>());
  }
  if (j.contains("classifier")) parse_classifier(j.at("classifier"), config.classifier);
  if (j.contains("vlm")) {
    const json& v = j.at("vlm");
    maybe(v, "enabled", config.vlm.enabled);
    maybe(v, "endpoint", config.vlm.client.endpoint);
    maybe(v, "model", config.vlm.client.model);
    maybe(v, "token_env", config.vlm.client.token_env);
    maybe(v, "max_retries", config.vlm.client.max_retries);
    maybe(v, "backoff_ms", config.vlm.client.backoff_ms);
    maybe(v, "timeout_s", config.vlm.client.timeout_s);
    maybe(v, "max_in_flight", config.vlm.max_in_flight);
  }
  if (j.contains("oracle")) {
    const json& o = j.at("oracle");
    maybe(o, "kind", config.oracle.kind);
    if (config.oracle.kind != "surrogate" && config.oracle.kind != "external")
      throw ConfigError("oracle.kind must be surrogate or external");
    if (o.contains("command"))
      for (const auto& arg : o.at("command"))
        config.oracle.command.push_back(arg.get<std::string>());
    maybe(o, "timeout_ms", config.oracle.timeout_ms);
    if (o.contains("surrogate")) parse_surrogate(o.at("surrogate"), config.oracle.surrogate);
  }
  if (j.contains("ranking")) {
    const json& r = j.at("ranking");
    maybe(r, "phi_max_deg", config.ranking.phi_max_deg);
    maybe(r, "top_n", config.ranking.top_n);
    maybe(r, "longitudinal_step", config.ranking.longitudinal_step);
    if (r.contains("lateral_offsets"))
      config.ranking.lateral_offsets = r.at("lateral_offsets").get<std::vector<double>>();
    if (r.contains("heights")) config.ranking.heights = r.at("heights").get<std::vector<double>>();
  }
  if (j.contains("objective")) {
    const json& o = j.at("objective");
    maybe(o, "kind", config.objective);
    (void)attack::objective_kind_from_string(config.objective);  // validates
    maybe(o, "alpha", config.alpha);
    maybe(o, "beta", config.beta);
  }
  if (j.contains("attack")) {
    const json& a = j.at("attack");
    maybe(a, "vector", config.attack.vector);
    if (config.attack.vector != "blinding" && config.attack.vector != "patch")
      throw ConfigError("attack.vector must be blinding or patch");
    maybe(a, "budget", config.attack.budget);
    if (a.contains("flashlight")) parse_flashlight(a.at("flashlight"), config.attack.flashlight);
    if (a.contains("patch")) {
      maybe(a.at("patch"), "width_m", config.attack.patch.width_m);
      maybe(a.at("patch"), "height_m", config.attack.patch.height_m);
    }
    if (a.contains("pgd")) {
      const json& p = a.at("pgd");
      maybe(p, "cell_rows", config.attack.pgd.cell_rows);
      maybe(p, "cell_cols", config.attack.pgd.cell_cols);
      maybe(p, "step_size", config.attack.pgd.step_size);
      maybe(p, "iters_per_position", config.attack.pgd.iters_per_position);
      maybe(p, "fd_epsilon", config.attack.pgd.fd_epsilon);
      maybe(p, "backtracking", config.attack.pgd.backtracking);
      maybe(p, "random_init", config.attack.pgd.random_init);
      maybe(p, "upsample", config.attack.pgd.upsample);
    }
    if (a.contains("baselines"))
      for (const auto& b : a.at("baselines")) {
        const std::string name = b.get<std::string>();
        if (name != "random" && name != "pso") throw ConfigError("unknown baseline: " + name);
        config.attack.baselines.push_back(name);
      }
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    if (e.contains("ap_thresholds"))
      config.eval.ap_thresholds = e.at("ap_thresholds").get<std::vector<double>>();
    if (e.contains("planner")) {
      const json& p = e.at("planner");
      maybe(p, "cell", config.eval.planner.cell);
      maybe(p, "heading_bins", config.eval.planner.heading_bins);
      maybe(p, "node_budget", config.eval.planner.node_budget);
      maybe(p, "goal_pos_tol", config.eval.planner.goal_pos_tol);
      maybe(p, "goal_heading_tol_deg", config.eval.planner.goal_heading_tol_deg);
      maybe(p, "analytic_radius", config.eval.planner.analytic_radius);
    }
    if (e.contains("vehicle")) {
      const json& v = e.at("vehicle");
      maybe(v, "length", config.eval.vehicle.length);
      maybe(v, "width", config.eval.vehicle.width);
      maybe(v, "min_turn_radius", config.eval.vehicle.min_turn_radius);
    }
  }
  return config;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  RunConfig config = from_json_text(read_text(path));
  // Referenced scene paths must exist at validation time.
  for (const auto& p : config.scenes) {
    if (!std::filesystem::exists(p))
      throw ConfigError("configured scene path does not exist: " + p.string());
  }
  return config;
}

std::string RunConfig::snapshot_json() const {
  json j;
  j["seed"] = seed;
  j["out_dir"] = out_dir.generic_string();
  j["jobs"] = jobs;
  if (suite) {
    json counts = json::object();
    for (const auto& [kind, count] : suite->counts) counts[kind] = count;
    j["suite"] = json{{"suite_seed", suite->suite_seed}, {"counts", std::move(counts)}};
  }
  if (!scenes.empty()) {
    json arr = json::array();
    for (const auto& p : scenes) arr.push_back(p.generic_string());
    j["scenes"] = std::move(arr);
  }
  j["classifier"] = json{{"dk_thre", classifier.dk_thre},
                         {"kbar_thre", classifier.kbar_thre},
                         {"anchor_dk_thre", classifier.anchor_dk_thre},
                         {"window_len", classifier.window_len},
                         {"resample_count", classifier.resample_count}};
  j["vlm"] = json{{"enabled", vlm.enabled},
                  {"endpoint", vlm.client.endpoint},
                  {"model", vlm.client.model},
                  {"token_env", vlm.client.token_env},
                  {"max_retries", vlm.client.max_retries},
                  {"backoff_ms", vlm.client.backoff_ms},
                  {"timeout_s", vlm.client.timeout_s},
                  {"max_in_flight", vlm.max_in_flight}};
  json oracle_json =
      json{{"kind", oracle.kind},
           {"surrogate",
            json{{"evidence_window", oracle.surrogate.evidence_window},
                 {"evidence_thre", oracle.surrogate.evidence_thre},
                 {"corridor", oracle.surrogate.corridor},
                 {"snap_step", oracle.surrogate.snap_step},
                 {"snap_margin", oracle.surrogate.snap_margin},
                 {"min_probe_px", oracle.surrogate.min_probe_px},
                 {"max_interp_run", oracle.surrogate.max_interp_run},
                 {"mirror_window", oracle.surrogate.mirror_window},
                 {"occlusion_fraction_thre", oracle.surrogate.occlusion_fraction_thre},
                 {"internal_points", oracle.surrogate.internal_points}}}};
  if (!oracle.command.empty()) {
    json cmd = json::array();
    for (const auto& c : oracle.command) cmd.push_back(c);
    oracle_json["command"] = std::move(cmd);
    oracle_json["timeout_ms"] = oracle.timeout_ms;
  }
  j["oracle"] = std::move(oracle_json);
  json lateral = json::array();
  for (double v : ranking.lateral_offsets) lateral.push_back(v);
  json heights = json::array();
  for (double v : ranking.heights) heights.push_back(v);
  j["ranking"] = json{{"phi_max_deg", ranking.phi_max_deg},
                      {"top_n", ranking.top_n},
                      {"longitudinal_step", ranking.longitudinal_step},
                      {"lateral_offsets", std::move(lateral)},
                      {"heights", std::move(heights)}};
  j["objective"] = json{{"kind", objective}, {"alpha", alpha}, {"beta", beta}};
  j["attack"] = json{{"vector", attack.vector},
                     {"budget", attack.budget},
                     {"flashlight",
                      json{{"lumens", attack.flashlight.lumens},
                           {"beam_angle_deg", attack.flashlight.beam_angle_deg},
                           {"reference_distance", attack.flashlight.reference_distance},
                           {"radius_px", attack.flashlight.radius_px},
                           {"min_luminance", attack.flashlight.min_luminance}}},
                     {"patch", json{{"width_m", attack.patch.width_m},
                                    {"height_m", attack.patch.height_m}}},
                     {"pgd", json{{"cell_rows", attack.pgd.cell_rows},
                                  {"cell_cols", attack.pgd.cell_cols},
                                  {"step_size", attack.pgd.step_size},
                                  {"iters_per_position", attack.pgd.iters_per_position},
                                  {"fd_epsilon", attack.pgd.fd_epsilon},
                                  {"backtracking", attack.pgd.backtracking},
                                  {"random_init", attack.pgd.random_init},
                                  {"upsample", attack.pgd.upsample}}},
                     {"baselines", attack.baselines}};
  json thresholds = json::array();
  for (double t : eval.ap_thresholds) thresholds.push_back(t);
  j["eval"] = json{{"ap_thresholds", std::move(thresholds)},
                   {"planner", json{{"cell", eval.planner.cell},
                                    {"heading_bins", eval.planner.heading_bins},
                                    {"node_budget", eval.planner.node_budget},
                                    {"goal_pos_tol", eval.planner.goal_pos_tol},
                                    {"goal_heading_tol_deg", eval.planner.goal_heading_tol_deg},
                                    {"analytic_radius", eval.planner.analytic_radius}}},
                   {"vehicle", json{{"length", eval.vehicle.length},
                                    {"width", eval.vehicle.width},
                                    {"min_turn_radius", eval.vehicle.min_turn_radius}}}};
  return j.dump();
}

std::uint64_t scene_seed(std::uint64_t run_seed, const std::string& scene_id) {
  return Rng::mix(run_seed, fnv1a(scene_id));
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::vector<std::filesystem::path> list_scene_dirs(const RunConfig& config) {
  std::vector<std::filesystem::path> dirs;
  if (!config.scenes.empty()) {
    dirs = config.scenes;
  } else {
    const std::filesystem::path root = config.out_dir / "scenes";
    if (!std::filesystem::exists(root))
      throw IoError("no scenes found; run the gen stage or configure scene paths (" +
                    root.string() + ")");
    for (const auto& entry : std::filesystem::directory_iterator(root)) {
      if (entry.is_directory() && std::filesystem::exists(entry.path() / "manifest.json"))
        dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw ConfigError("scene list is empty");
  return dirs;
}

// --- gen ----------------------------------------------------------------------

void run_gen(const RunConfig& config) {
  if (!config.suite) throw ConfigError("gen needs a suite block in the config");
  StageTimer timer;
  std::filesystem::create_directories(config.out_dir / "scenes");
  ArtifactLog artifacts(config.out_dir);

  struct Job {
    scene::SceneSpec spec;
    std::string scene_id;
  };
  std::vector<Job> jobs_list;
  int index = 0;
  for (const auto& [kind_name, count] : config.suite->counts) {
    const scene::RoadKind kind = scene::road_kind_from_string(kind_name);
    for (int i = 0; i < count; ++i, ++index) {
      Job job;
      job.spec = scene::suite_spec(kind, config.suite->suite_seed, index);
      std::ostringstream id;
      id << kind_name << "_" << std::setw(4) << std::setfill('0') << index;
      job.scene_id = id.str();
      jobs_list.push_back(std::move(job));
    }
  }

  parallel_for(jobs_list.size(), config.jobs, [&](std::size_t i) {
    scene::SceneFrame frame = scene::generate_scene(jobs_list[i].spec);
    frame.scene_id = jobs_list[i].scene_id;
    scene::render_surround_views(frame);
    const std::filesystem::path dir = config.out_dir / "scenes" / frame.scene_id;
    scene::save_scene(frame, dir);
    artifacts.add(dir / "manifest.json");
    for (const auto& [cam_id, unused] : frame.images) {
      (void)unused;
      artifacts.add(dir / (frame.scene_id + "_" + cam_id + ".png"));
    }
  });

  json index_json;
  index_json["schema_version"] = kSchemaVersion;
  json list = json::array();
  for (const Job& job : jobs_list) list.push_back(job.scene_id);
  index_json["scenes"] = std::move(list);
  write_text_atomic(config.out_dir / "suite_index.json", index_json.dump(2) + "\n");
  artifacts.add(config.out_dir / "suite_index.json");
  update_manifest(config, "gen", timer.ms(), artifacts);
}

// --- classify -------------------------------------------------------------------

namespace {

json verdict_to_json(const SceneVerdict& v) {
  json rule;
  rule["label"] = cls::to_string(v.rule.label);
  rule["dk_max"] = v.rule.dk_max;
  rule["diverging_side"] = cls::to_string(v.rule.diverging_side);
  json anchors = json::array();
  for (const auto& a : v.rule.anchors) anchors.push_back(json::array({a.x, a.y}));
  rule["anchors"] = std::move(anchors);

  json out;
  out["scene_id"] = v.scene_id;
  out["rule"] = std::move(rule);
  if (v.vlm_verdict) {
    out["vlm"] = json{{"label", cls::to_string(v.vlm_verdict->label)},
                      {"road_type", v.vlm_verdict->road_type},
                      {"reasoning", v.vlm_verdict->reasoning}};
  } else {
    out["vlm"] = nullptr;
  }
  out["refined"] = v.refined;
  out["final"] = cls::to_string(v.final_label);
  if (v.truth_asym)
    out["truth_asym"] = *v.truth_asym;
  else
    out["truth_asym"] = nullptr;
  return out;
}

SceneVerdict verdict_from_json(const json& j) {
  SceneVerdict v;
  v.scene_id = j.at("scene_id").get<std::string>();
  v.rule.label = cls::scene_label_from_string(j.at("rule").at("label").get<std::string>());
  v.rule.dk_max = j.at("rule").at("dk_max").get<double>();
  const std::string side = j.at("rule").at("diverging_side").get<std::string>();
  v.rule.diverging_side = side == "left"    ? cls::Side::kLeft
                          : side == "right" ? cls::Side::kRight
                                            : cls::Side::kNone;
  for (const auto& a : j.at("rule").at("anchors"))
    v.rule.anchors.push_back({a.at(0).get<double>(), a.at(1).get<double>()});
  v.refined = j.at("refined").get<bool>();
  v.final_label = cls::scene_label_from_string(j.at("final").get<std::string>());
  if (!j.at("truth_asym").is_null()) v.truth_asym = j.at("truth_asym").get<bool>();
  return v;
}

}  // namespace

std::vector<SceneVerdict> run_classify(const RunConfig& config) {
  StageTimer timer;
  const std::vector<std::filesystem::path> dirs = list_scene_dirs(config);
  ArtifactLog artifacts(config.out_dir);

  std::optional<vlm::VlmClient> client;
  std::mutex vlm_mu;
  if (config.vlm.enabled) {
    vlm::VlmConfig vc = config.vlm.client;
    if (vc.log_dir.empty()) vc.log_dir = (config.out_dir / "vlm_logs").string();
    client.emplace(vc);
  }

  std::vector<SceneVerdict> verdicts(dirs.size());
  parallel_for(dirs.size(), config.jobs, [&](std::size_t i) {
    const scene::SceneFrame frame = scene::load_scene(dirs[i]);
    SceneVerdict v;
    v.scene_id = frame.scene_id;
    v.truth_asym = frame.truth.asymmetric;
    std::optional<geom::Polyline2D> left, right;
    if (frame.has_left_boundary() && frame.left_boundary().length() >= 10.0)
      left = frame.left_boundary();
    if (frame.has_right_boundary() && frame.right_boundary().length() >= 10.0)
      right = frame.right_boundary();
    v.rule = cls::classify_rule_based(left, right, config.classifier);
    v.final_label = v.rule.label;

    if (config.vlm.enabled && v.rule.label == cls::SceneLabel::kAsymmetric) {
      const vlm::VlmRequest request = vlm::build_vlm_request(frame, v.rule);
      try {
        vlm::VlmVerdict reply;
        {
          // The in-flight cap is the worker count; serialize actual HTTP use
          // of the shared client.
          std::lock_guard<std::mutex> lock(vlm_mu);
          reply = client->refine(request);
        }
        v.vlm_verdict = reply;
        v.refined = true;
        // The VLM only filters: final asymmetric requires both stages to agree.
        v.final_label = reply.label == cls::SceneLabel::kAsymmetric
                            ? cls::SceneLabel::kAsymmetric
                            : cls::SceneLabel::kSymmetric;
      } catch (const RefinementFailedError&) {
        v.refined = false;  // fall back to the rule verdict, flagged unrefined
      }
    }
    verdicts[i] = std::move(v);
  });

  std::sort(verdicts.begin(), verdicts.end(),
            [](const SceneVerdict& a, const SceneVerdict& b) { return a.scene_id < b.scene_id; });

  std::vector<cls::SceneLabel> final_labels;
  for (const SceneVerdict& v : verdicts) final_labels.push_back(v.final_label);
  const cls::BalanceAudit audit = cls::audit_dataset_balance(final_labels);

  json out;
  out["schema_version"] = kSchemaVersion;
  out["balance"] = json{{"n_total", audit.n_total}, {"n_asym", audit.n_asym},
                        {"fraction", audit.fraction}};
  json rows = json::array();
  for (const SceneVerdict& v : verdicts) rows.push_back(verdict_to_json(v));
  out["scenes"] = std::move(rows);
  write_text_atomic(config.out_dir / "verdicts.json", out.dump(2) + "\n");
  artifacts.add(config.out_dir / "verdicts.json");

  // Confusion table vs generator truth when every scene carries a label.
  const bool have_truth = std::all_of(verdicts.begin(), verdicts.end(),
                                      [](const SceneVerdict& v) { return v.truth_asym.has_value(); });
  if (have_truth) {
    std::map<std::string, std::map<std::string, int>> table;
    int tp = 0, fp = 0, fn = 0;
    for (const SceneVerdict& v : verdicts) {
      const std::string truth_row = *v.truth_asym ? "asymmetric" : "symmetric";
      table[truth_row][cls::to_string(v.final_label)] += 1;
      const bool pred_asym = v.final_label == cls::SceneLabel::kAsymmetric;
      if (pred_asym && *v.truth_asym) ++tp;
      if (pred_asym && !*v.truth_asym) ++fp;
      if (!pred_asym && *v.truth_asym) ++fn;
    }
    json confusion;
    confusion["rows"] = json::object();
    for (const auto& [row, cols] : table) {
      json cols_json = json::object();
      for (const auto& [col, count] : cols) cols_json[col] = count;
      confusion["rows"][row] = std::move(cols_json);
    }
    confusion["precision"] = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    confusion["recall"] = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    write_text_atomic(config.out_dir / "confusion.json", confusion.dump(2) + "\n");
    artifacts.add(config.out_dir / "confusion.json");
  }
  update_manifest(config, "classify", timer.ms(), artifacts);
  return verdicts;
}

// --- attack ---------------------------------------------------------------------

namespace {

std::vector<SceneVerdict> load_verdicts(const RunConfig& config) {
  const std::filesystem::path path = config.out_dir / "verdicts.json";
  if (!std::filesystem::exists(path))
    throw IoError("verdicts.json not found; run the classify stage first (" + path.string() + ")");
  const json j = parse_json_file(path);
  std::vector<SceneVerdict> out;
  for (const auto& row : j.at("scenes")) out.push_back(verdict_from_json(row));
  return out;
}

json attack_config_to_json(const attack::AttackConfig& cfg, const std::string& pattern_file) {
  json out;
  out["kind"] = interf::to_string(cfg.kind);
  out["position"] = json::array({cfg.position.x, cfg.position.y, cfg.position.z});
  if (cfg.flashlight) {
    out["flashlight"] = json{{"lumens", cfg.flashlight->lumens},
                             {"beam_angle_deg", cfg.flashlight->beam_angle_deg},
                             {"reference_distance", cfg.flashlight->reference_distance},
                             {"radius_px", cfg.flashlight->radius_px},
                             {"min_luminance", cfg.flashlight->min_luminance}};
  }
  if (cfg.patch) {
    out["patch"] = json{{"W", cfg.patch->width_m},
                        {"H", cfg.patch->height_m},
                        {"alpha", cfg.patch->alpha},
                        {"center", json::array({cfg.patch->center.x, cfg.patch->center.y,
                                                cfg.patch->center.z})},
                        {"pattern_file", pattern_file}};
  }
  return out;
}

void write_trace(const std::filesystem::path& path, const attack::SearchTrace& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace: " + path.string());
  for (const auto& entry : trace.entries) {
    json line;
    line["position"] = json::array({entry.position.x, entry.position.y, entry.position.z});
    line["loss"] = entry.loss;
    line["queries"] = entry.queries_after;
    out << line.dump() << "\n";
  }
}

}  // namespace

void run_attack(const RunConfig& config) {
  StageTimer timer;
  const std::vector<std::filesystem::path> dirs = list_scene_dirs(config);
  const std::vector<SceneVerdict> verdicts = load_verdicts(config);
  std::map<std::string, const SceneVerdict*> verdict_by_id;
  for (const SceneVerdict& v : verdicts) verdict_by_id[v.scene_id] = &v;
  ArtifactLog artifacts(config.out_dir);
  const attack::ObjectiveKind objective_kind = attack::objective_kind_from_string(config.objective);

  parallel_for(dirs.size(), config.jobs, [&](std::size_t i) {
    const scene::SceneFrame frame = scene::load_scene(dirs[i]);
    const auto it = verdict_by_id.find(frame.scene_id);
    if (it == verdict_by_id.end()) return;
    const SceneVerdict& verdict = *it->second;
    if (verdict.final_label != cls::SceneLabel::kAsymmetric) return;
    if (verdict.rule.anchors.empty()) return;

    const std::filesystem::path dir = config.out_dir / "attacks" / frame.scene_id;
    std::filesystem::create_directories(dir);
    const std::uint64_t seed = scene_seed(config.seed, frame.scene_id);

    const attack::ObjectiveSpec objective =
        attack::build_objective(objective_kind, frame, verdict.rule, config.alpha, config.beta);
    const std::vector<attack::Candidate> ranked =
        attack::rank_positions(frame, verdict.rule.anchors, config.ranking);

    auto oracle_inst = oracle::make_oracle(config.oracle);
    attack::AttackConfig best;
    attack::SearchTrace trace;
    if (config.attack.vector == "blinding") {
      std::tie(best, trace) = attack::optimize_blackbox(*oracle_inst, frame, objective, ranked,
                                                        config.attack.budget,
                                                        config.attack.flashlight);
    } else {
      std::tie(best, trace) =
          attack::optimize_patch(*oracle_inst, frame, objective, ranked, config.attack.pgd,
                                 config.attack.budget, config.attack.patch, seed);
    }
    trace.seed = seed;

    std::string pattern_file;
    if (best.patch) {
      pattern_file = "patch.png";
      interf::save_patch(*best.patch, dir / pattern_file);
      artifacts.add(dir / pattern_file);
      artifacts.add(dir / "patch.json");
    }
    json cfg_json = attack_config_to_json(best, pattern_file);
    cfg_json["objective"] = config.objective;
    cfg_json["budget"] = config.attack.budget;
    cfg_json["total_queries"] = trace.total_queries;
    cfg_json["best_loss"] = trace.best_loss;
    cfg_json["method"] = trace.method;
    cfg_json["seed"] = seed;
    write_text_atomic(dir / "attack_config.json", cfg_json.dump(2) + "\n");
    artifacts.add(dir / "attack_config.json");
    write_trace(dir / "trace.jsonl", trace);
    artifacts.add(dir / "trace.jsonl");

    // Final attacked images and the attacked prediction.
    const scene::ImageSet attacked_images = interf::apply_attack(frame.images, frame.rig, best);
    for (const auto& [cam_id, image] : attacked_images) {
      img::Image q = image;
      img::quantize_to_8bit(q);
      const std::filesystem::path path = dir / ("attacked_" + cam_id + ".png");
      img::write_png(path, q);
      artifacts.add(path);
    }
    auto fresh_oracle = oracle::make_oracle(config.oracle);
    const oracle::PredictedMap attacked_pred = fresh_oracle->predict(attacked_images, frame);
    write_text_atomic(dir / "predicted_attacked.json",
                      oracle::predicted_map_to_json(attacked_pred) + "\n");
    artifacts.add(dir / "predicted_attacked.json");

    // Baselines share the budget accounting for parity comparisons.
    for (const std::string& baseline : config.attack.baselines) {
      auto baseline_oracle = oracle::make_oracle(config.oracle);
      attack::AttackConfig b_cfg;
      attack::SearchTrace b_trace;
      if (baseline == "random") {
        std::tie(b_cfg, b_trace) =
            attack::random_search(*baseline_oracle, frame, objective, config.attack.budget, seed,
                                  config.attack.flashlight);
      } else {
        std::tie(b_cfg, b_trace) = attack::pso_search(*baseline_oracle, frame, objective,
                                                      config.attack.budget, seed,
                                                      config.attack.flashlight);
      }
      json b_json = attack_config_to_json(b_cfg, "");
      b_json["best_loss"] = b_trace.best_loss;
      b_json["total_queries"] = b_trace.total_queries;
      b_json["method"] = b_trace.method;
      write_text_atomic(dir / ("baseline_" + baseline + "_config.json"), b_json.dump(2) + "\n");
      artifacts.add(dir / ("baseline_" + baseline + "_config.json"));
      write_trace(dir / ("baseline_" + baseline + "_trace.jsonl"), b_trace);
      artifacts.add(dir / ("baseline_" + baseline + "_trace.jsonl"));
      auto b_eval_oracle = oracle::make_oracle(config.oracle);
      const scene::ImageSet b_images = interf::apply_attack(frame.images, frame.rig, b_cfg);
      const oracle::PredictedMap b_pred = b_eval_oracle->predict(b_images, frame);
      write_text_atomic(dir / ("baseline_" + baseline + "_predicted.json"),
                        oracle::predicted_map_to_json(b_pred) + "\n");
      artifacts.add(dir / ("baseline_" + baseline + "_predicted.json"));
    }
  });
  update_manifest(config, "attack", timer.ms(), artifacts);
}

// --- eval -----------------------------------------------------------------------

namespace {

struct SceneEvalInputs {
  std::string scene_id;
  scene::SceneFrame frame;
  oracle::PredictedMap clean;
  std::optional<oracle::PredictedMap> attacked;
  std::map<std::string, oracle::PredictedMap> baselines;
  std::optional<SceneVerdict> verdict;
};

struct SceneEvalRow {
  std::string scene_id;
  std::string road_kind;
  bool truth_asym = false;
  bool attacked = false;
  int goals = 0;
  int unreachable_clean = 0;
  int unreachable_attacked = 0;
  bool unsafe_clean = false;
  bool unsafe_attacked = false;
  std::optional<double> ade;
  std::optional<double> outward_offset;
  std::map<std::string, int> baseline_unreachable;
  std::map<std::string, bool> baseline_unsafe;
};

struct PlanOutcome {
  std::vector<plan::GoalStatus> statuses;
  std::vector<plan::Trajectory> trajectories;
};

PlanOutcome plan_on_prediction(const scene::SceneFrame& frame,
                               const oracle::PredictedMap& prediction,
                               const std::vector<plan::Pose>& goals, const EvalRunConfig& eval) {
  std::vector<geom::Polyline2D> walls;
  for (const auto& e : prediction.elements)
    if (e.polyline.class_tag == geom::MapClass::kBoundary) walls.push_back(e.polyline);
  plan::PlanningProblem problem;
  problem.start = {frame.ego_pose.x, frame.ego_pose.y, frame.ego_pose.heading};
  problem.goals = goals;
  problem.vehicle = eval.vehicle;
  problem.params = eval.planner;
  // Tight range: walls must reach the grid border so sealed corridors stay
  // sealed (out-of-grid counts as blocked).
  problem.occupancy = plan::build_occupancy(walls, scene::bev_range(frame, 0.5),
                                            eval.planner.cell, eval.vehicle.width / 2.0);
  const plan::PlanResult result = plan::plan(problem);
  PlanOutcome out;
  for (const plan::Trajectory& t : result.trajectories) {
    out.statuses.push_back(t.status);
    out.trajectories.push_back(t);
  }
  return out;
}

json ap_to_json(const metrics::ApResult& ap) {
  json out;
  auto get = [&](geom::MapClass c) {
    const auto it = ap.ap_per_class.find(c);
    return it == ap.ap_per_class.end() ? json(nullptr) : json(it->second);
  };
  out["ap_boundary"] = get(geom::MapClass::kBoundary);
  out["ap_divider"] = get(geom::MapClass::kDivider);
  out["ap_ped"] = get(geom::MapClass::kPedCrossing);
  out["map"] = ap.map;
  return out;
}

/// Pure function of persisted artifacts; eval and replay both call this.
json assemble_report(const RunConfig& config, std::vector<SceneEvalInputs>& scenes) {
  std::sort(scenes.begin(), scenes.end(),
            [](const SceneEvalInputs& a, const SceneEvalInputs& b) { return a.scene_id < b.scene_id; });

  std::vector<SceneEvalRow> rows(scenes.size());
  parallel_for(scenes.size(), config.jobs, [&](std::size_t i) {
    SceneEvalInputs& input = scenes[i];
    SceneEvalRow row;
    row.scene_id = input.scene_id;
    row.road_kind = scene::to_string(input.frame.road_kind);
    row.truth_asym = input.frame.truth.asymmetric;
    row.attacked = input.attacked.has_value();

    const std::vector<plan::Pose> goals = plan::derive_goals(input.frame);
    row.goals = static_cast<int>(goals.size());
    std::vector<geom::Polyline2D> gt_boundaries;
    for (const auto* b : input.frame.boundaries()) gt_boundaries.push_back(*b);

    const PlanOutcome clean = plan_on_prediction(input.frame, input.clean, goals, config.eval);
    row.unreachable_clean = static_cast<int>(
        std::count(clean.statuses.begin(), clean.statuses.end(), plan::GoalStatus::kUnreachable));
    for (const auto& t : clean.trajectories)
      if (metrics::trajectory_unsafe(t, gt_boundaries, config.eval.vehicle)) row.unsafe_clean = true;

    if (input.attacked) {
      const PlanOutcome att = plan_on_prediction(input.frame, *input.attacked, goals, config.eval);
      row.unreachable_attacked = static_cast<int>(std::count(
          att.statuses.begin(), att.statuses.end(), plan::GoalStatus::kUnreachable));
      for (const auto& t : att.trajectories)
        if (metrics::trajectory_unsafe(t, gt_boundaries, config.eval.vehicle))
          row.unsafe_attacked = true;
      // ADE over goals reached in both conditions.
      double acc = 0.0;
      int n = 0;
      for (std::size_t g = 0; g < goals.size(); ++g) {
        if (clean.statuses[g] == plan::GoalStatus::kReached &&
            att.statuses[g] == plan::GoalStatus::kReached) {
          acc += metrics::ade(clean.trajectories[g], att.trajectories[g]);
          ++n;
        }
      }
      if (n > 0) row.ade = acc / n;
      // Outward displacement of the matched attacked boundary.
      if (input.verdict && input.verdict->rule.diverging_side != cls::Side::kNone) {
        try {
          const attack::ObjectiveSpec eta = attack::build_objective(
              attack::ObjectiveKind::kEarlyTurn, input.frame, input.verdict->rule);
          row.outward_offset = attack::mean_outward_offset(*input.attacked, eta);
        } catch (const ConfigError&) {
          // verdict lacked anchors; leave the column empty
        }
      }
      for (const auto& [name, pred] : input.baselines) {
        const PlanOutcome b = plan_on_prediction(input.frame, pred, goals, config.eval);
        row.baseline_unreachable[name] = static_cast<int>(std::count(
            b.statuses.begin(), b.statuses.end(), plan::GoalStatus::kUnreachable));
        bool unsafe = false;
        for (const auto& t : b.trajectories)
          if (metrics::trajectory_unsafe(t, gt_boundaries, config.eval.vehicle)) unsafe = true;
        row.baseline_unsafe[name] = unsafe;
      }
    }
    rows[i] = std::move(row);
  });

  // Aggregate metrics.
  std::vector<oracle::PredictedMap> clean_preds;
  std::vector<std::vector<geom::Polyline2D>> gts;
  for (const SceneEvalInputs& input : scenes) {
    clean_preds.push_back(input.clean);
    gts.push_back(input.frame.gt_map);
  }
  const metrics::ApResult clean_ap = metrics::map_ap(clean_preds, gts, config.eval.ap_thresholds);

  auto rate = [](const std::vector<SceneEvalRow>& rows, auto goal_count, auto unsafe_flag) {
    std::size_t n = rows.size();
    if (n == 0) return std::pair<double, double>{0.0, 0.0};
    std::size_t ugr = 0, uptr = 0;
    for (const SceneEvalRow& r : rows) {
      if (goal_count(r) > 0) ++ugr;
      if (unsafe_flag(r)) ++uptr;
    }
    return std::pair<double, double>{static_cast<double>(ugr) / n, static_cast<double>(uptr) / n};
  };
  const auto [ugr_clean_all, uptr_clean_all] =
      rate(rows, [](const SceneEvalRow& r) { return r.unreachable_clean; },
           [](const SceneEvalRow& r) { return r.unsafe_clean; });

  json report;
  report["tool_version"] = kVersion;
  report["seed"] = config.seed;
  report["n_scenes"] = scenes.size();
  json thresholds = json::array();
  for (double t : config.eval.ap_thresholds) thresholds.push_back(t);
  report["ap_thresholds"] = std::move(thresholds);
  json clean_block = ap_to_json(clean_ap);
  clean_block["ugr"] = ugr_clean_all;
  clean_block["uptr"] = uptr_clean_all;
  report["clean"] = std::move(clean_block);

  // Attacked subset.
  std::vector<SceneEvalRow> attacked_rows;
  std::vector<oracle::PredictedMap> att_preds, att_clean_preds;
  std::vector<std::vector<geom::Polyline2D>> att_gts;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    if (!scenes[i].attacked) continue;
    attacked_rows.push_back(rows[i]);
    att_preds.push_back(*scenes[i].attacked);
    att_clean_preds.push_back(scenes[i].clean);
    att_gts.push_back(scenes[i].frame.gt_map);
  }
  report["n_attacked"] = attacked_rows.size();
  if (!attacked_rows.empty()) {
    const metrics::ApResult att_ap = metrics::map_ap(att_preds, att_gts, config.eval.ap_thresholds);
    const metrics::ApResult att_clean_ap =
        metrics::map_ap(att_clean_preds, att_gts, config.eval.ap_thresholds);
    const auto [ugr_c, uptr_c] =
        rate(attacked_rows, [](const SceneEvalRow& r) { return r.unreachable_clean; },
             [](const SceneEvalRow& r) { return r.unsafe_clean; });
    const auto [ugr_a, uptr_a] =
        rate(attacked_rows, [](const SceneEvalRow& r) { return r.unreachable_attacked; },
             [](const SceneEvalRow& r) { return r.unsafe_attacked; });
    double ade_acc = 0.0;
    int ade_n = 0;
    double off_acc = 0.0;
    int off_n = 0;
    for (const SceneEvalRow& r : attacked_rows) {
      if (r.ade) {
        ade_acc += *r.ade;
        ++ade_n;
      }
      if (r.outward_offset) {
        off_acc += *r.outward_offset;
        ++off_n;
      }
    }
    json attacked;
    attacked["n"] = attacked_rows.size();
    json clean_side = ap_to_json(att_clean_ap);
    clean_side["ugr"] = ugr_c;
    clean_side["uptr"] = uptr_c;
    attacked["clean"] = std::move(clean_side);
    json att_side = ap_to_json(att_ap);
    att_side["ugr"] = ugr_a;
    att_side["uptr"] = uptr_a;
    attacked["attacked"] = std::move(att_side);
    attacked["ade_mean"] = ade_n > 0 ? json(ade_acc / ade_n) : json(nullptr);
    attacked["mean_outward_offset"] = off_n > 0 ? json(off_acc / off_n) : json(nullptr);
    report["attacked"] = std::move(attacked);

    // Baselines, when the attack stage produced them.
    std::vector<std::string> baseline_names;
    for (const SceneEvalInputs& input : scenes) {
      for (const auto& [name, unused] : input.baselines) {
        (void)unused;
        if (std::find(baseline_names.begin(), baseline_names.end(), name) == baseline_names.end())
          baseline_names.push_back(name);
      }
    }
    std::sort(baseline_names.begin(), baseline_names.end());
    json baselines = json::object();
    for (const std::string& name : baseline_names) {
      std::vector<oracle::PredictedMap> preds;
      std::vector<std::vector<geom::Polyline2D>> bgts;
      std::size_t ugr_count = 0, uptr_count = 0, n = 0;
      for (std::size_t i = 0; i < scenes.size(); ++i) {
        if (!scenes[i].attacked) continue;
        const auto it = scenes[i].baselines.find(name);
        if (it == scenes[i].baselines.end()) continue;
        preds.push_back(it->second);
        bgts.push_back(scenes[i].frame.gt_map);
        ++n;
        if (rows[i].baseline_unreachable.at(name) > 0) ++ugr_count;
        if (rows[i].baseline_unsafe.at(name)) ++uptr_count;
      }
      if (n == 0) continue;
      const metrics::ApResult bap = metrics::map_ap(preds, bgts, config.eval.ap_thresholds);
      json b = ap_to_json(bap);
      b["ugr"] = static_cast<double>(ugr_count) / n;
      b["uptr"] = static_cast<double>(uptr_count) / n;
      baselines[name] = std::move(b);
    }
    if (!baselines.empty()) report["baselines"] = std::move(baselines);
  }

  json per_scene = json::array();
  for (const SceneEvalRow& r : rows) {
    json row;
    row["scene_id"] = r.scene_id;
    row["road_kind"] = r.road_kind;
    row["truth_asym"] = r.truth_asym;
    row["attacked"] = r.attacked;
    row["goals"] = r.goals;
    row["unreachable_clean"] = r.unreachable_clean;
    row["unreachable_attacked"] = r.attacked ? json(r.unreachable_attacked) : json(nullptr);
    row["unsafe_clean"] = r.unsafe_clean;
    row["unsafe_attacked"] = r.attacked ? json(r.unsafe_attacked) : json(nullptr);
    row["ade"] = r.ade ? json(*r.ade) : json(nullptr);
    row["outward_offset"] = r.outward_offset ? json(*r.outward_offset) : json(nullptr);
    per_scene.push_back(std::move(row));
  }
  report["per_scene"] = std::move(per_scene);
  return report;
}

std::vector<SceneEvalInputs> load_eval_inputs(const RunConfig& config, bool compute_clean,
                                              ArtifactLog* artifacts) {
  const std::vector<std::filesystem::path> dirs = list_scene_dirs(config);
  std::map<std::string, SceneVerdict> verdicts;
  if (std::filesystem::exists(config.out_dir / "verdicts.json")) {
    for (SceneVerdict& v : load_verdicts(config)) verdicts[v.scene_id] = std::move(v);
  }

  std::vector<SceneEvalInputs> inputs(dirs.size());
  parallel_for(dirs.size(), config.jobs, [&](std::size_t i) {
    SceneEvalInputs input;
    input.frame = scene::load_scene(dirs[i]);
    input.scene_id = input.frame.scene_id;
    const auto vit = verdicts.find(input.scene_id);
    if (vit != verdicts.end()) input.verdict = vit->second;

    const std::filesystem::path clean_path =
        config.out_dir / "predictions" / (input.scene_id + "_clean.json");
    if (compute_clean) {
      auto oracle_inst = oracle::make_oracle(config.oracle);
      input.clean = oracle_inst->predict(input.frame.images, input.frame);
      std::filesystem::create_directories(config.out_dir / "predictions");
      write_text_atomic(clean_path, oracle::predicted_map_to_json(input.clean) + "\n");
      if (artifacts) artifacts->add(clean_path);
    } else {
      if (!std::filesystem::exists(clean_path))
        throw IoError("missing clean prediction for replay: " + clean_path.string());
      input.clean = oracle::predicted_map_from_json(read_text(clean_path));
    }

    const std::filesystem::path attack_dir = config.out_dir / "attacks" / input.scene_id;
    const std::filesystem::path attacked_path = attack_dir / "predicted_attacked.json";
    if (std::filesystem::exists(attacked_path)) {
      input.attacked = oracle::predicted_map_from_json(read_text(attacked_path));
      for (const std::string& name : config.attack.baselines) {
        const std::filesystem::path bpath = attack_dir / ("baseline_" + name + "_predicted.json");
        if (std::filesystem::exists(bpath))
          input.baselines[name] = oracle::predicted_map_from_json(read_text(bpath));
      }
    }
    // Metrics and planning only need geometry from here on.
    input.frame.images.clear();
    inputs[i] = std::move(input);
  });
  return inputs;
}

void write_per_scene_csv(const std::filesystem::path& path, const json& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write csv: " + path.string());
  out << "scene_id,road_kind,truth_asym,attacked,goals,unreachable_clean,unreachable_attacked,"
         "unsafe_clean,unsafe_attacked,ade,outward_offset\n";
  for (const auto& row : report.at("per_scene")) {
    auto cell = [&](const char* key) -> std::string {
      const auto& v = row.at(key);
      if (v.is_null()) return "";
      if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
      if (v.is_string()) return v.get<std::string>();
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.6g", v.get<double>());
      return buf;
    };
    out << cell("scene_id") << "," << cell("road_kind") << "," << cell("truth_asym") << ","
        << cell("attacked") << "," << cell("goals") << "," << cell("unreachable_clean") << ","
        << cell("unreachable_attacked") << "," << cell("unsafe_clean") << ","
        << cell("unsafe_attacked") << "," << cell("ade") << "," << cell("outward_offset") << "\n";
  }
}

void write_overlays(const RunConfig& config, const std::vector<SceneEvalInputs>& scenes,
                    ArtifactLog& artifacts) {
  const std::filesystem::path dir = config.out_dir / "overlays";
  std::filesystem::create_directories(dir);
  for (const SceneEvalInputs& input : scenes) {
    if (!input.attacked) continue;
    const scene::BevRange range = scene::bev_range(input.frame, 2.0);
    const int size = 560;
    img::Image view(size, size, {1.0f, 1.0f, 1.0f});
    const double scale =
        std::min(size / (range.x_max - range.x_min), size / (range.y_max - range.y_min));
    auto to_px = [&](const geom::Vec2& p) {
      return geom::Vec2{(p.x - range.x_min) * scale, size - (p.y - range.y_min) * scale};
    };
    auto draw = [&](const geom::Polyline2D& poly, const img::Color& color, double stroke,
                    bool dashed) {
      for (std::size_t k = 1; k < poly.points.size(); ++k) {
        if (dashed && k % 2 == 0) continue;
        const geom::Vec2 a = to_px(poly.points[k - 1]);
        const geom::Vec2 b = to_px(poly.points[k]);
        img::stroke_line(view, a.x, a.y, b.x, b.y, stroke, color);
      }
    };
    // GT black, prediction green, straightening target red-dashed.
    for (const geom::Polyline2D& poly : input.frame.gt_map)
      draw(poly, {0.05f, 0.05f, 0.05f}, 1.4, false);
    for (const auto& e : input.attacked->elements) draw(e.polyline, {0.1f, 0.65f, 0.15f}, 1.2, false);
    if (input.verdict && !input.verdict->rule.anchors.empty() &&
        input.verdict->rule.diverging_side != cls::Side::kNone) {
      try {
        const auto spec = attack::build_objective(attack::ObjectiveKind::kStraighten, input.frame,
                                                  input.verdict->rule);
        draw(geom::resample_polyline(*spec.target, 60), {0.85f, 0.1f, 0.1f}, 1.2, true);
      } catch (const ConfigError&) {
      }
    }
    img::quantize_to_8bit(view);
    const std::filesystem::path path = dir / (input.scene_id + ".png");
    img::write_png(path, view);
    artifacts.add(path);
  }
}

void write_plots(const RunConfig& config, const json& report, ArtifactLog& artifacts) {
  const std::filesystem::path dir = config.out_dir / "plots";
  std::filesystem::create_directories(dir);

  if (report.contains("attacked")) {
    const json& att = report.at("attacked");
    const std::vector<std::string> cats = {"mAP", "UGR", "UPTR"};
    std::vector<plots::Series> series;
    auto val = [](const json& j, const char* key) {
      return j.at(key).is_null() ? 0.0 : j.at(key).get<double>();
    };
    series.push_back({"clean", {val(att.at("clean"), "map"), val(att.at("clean"), "ugr"),
                                val(att.at("clean"), "uptr")}});
    series.push_back({"attacked", {val(att.at("attacked"), "map"), val(att.at("attacked"), "ugr"),
                                   val(att.at("attacked"), "uptr")}});
    if (report.contains("baselines")) {
      for (const auto& [name, b] : report.at("baselines").items())
        series.push_back({name, {val(b, "map"), val(b, "ugr"), val(b, "uptr")}});
    }
    plots::svg_bar_chart(dir / "metrics_bar.svg", "clean vs attacked", cats, series);
    artifacts.add(dir / "metrics_bar.svg");
    std::vector<std::vector<double>> rows;
    for (std::size_t c = 0; c < cats.size(); ++c) {
      std::vector<double> row;
      row.push_back(static_cast<double>(c));
      for (const auto& s : series) row.push_back(s.values[c]);
      rows.push_back(std::move(row));
    }
    std::vector<std::string> header = {"metric_index"};
    for (const auto& s : series) header.push_back(s.name);
    plots::write_csv(dir / "metrics_bar.csv", header, rows);
    artifacts.add(dir / "metrics_bar.csv");
  }

  // Mean running-best loss per query index across attacked scenes.
  std::vector<std::vector<double>> best_curves;
  const std::filesystem::path attacks_dir = config.out_dir / "attacks";
  if (std::filesystem::exists(attacks_dir)) {
    std::vector<std::filesystem::path> trace_paths;
    for (const auto& entry : std::filesystem::directory_iterator(attacks_dir)) {
      const std::filesystem::path trace = entry.path() / "trace.jsonl";
      if (std::filesystem::exists(trace)) trace_paths.push_back(trace);
    }
    std::sort(trace_paths.begin(), trace_paths.end());
    for (const auto& path : trace_paths) {
      std::ifstream in(path);
      std::vector<double> best;
      double current = std::numeric_limits<double>::infinity();
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        current = std::min(current, j.at("loss").get<double>());
        best.push_back(current);
      }
      if (!best.empty()) best_curves.push_back(std::move(best));
    }
  }
  if (!best_curves.empty()) {
    std::size_t max_len = 0;
    for (const auto& c : best_curves) max_len = std::max(max_len, c.size());
    std::vector<double> xs(max_len);
    std::vector<double> mean(max_len, 0.0);
    for (std::size_t q = 0; q < max_len; ++q) {
      xs[q] = static_cast<double>(q + 1);
      double acc = 0.0;
      for (const auto& c : best_curves) acc += q < c.size() ? c[q] : c.back();
      mean[q] = acc / static_cast<double>(best_curves.size());
    }
    plots::svg_line_chart(dir / "loss_curve.svg", "mean best loss vs queries", xs,
                          {{"best_loss", mean}}, "queries", "loss");
    artifacts.add(dir / "loss_curve.svg");
    std::vector<std::vector<double>> rows;
    for (std::size_t q = 0; q < max_len; ++q) rows.push_back({xs[q], mean[q]});
    plots::write_csv(dir / "loss_curve.csv", {"query", "best_loss"}, rows);
    artifacts.add(dir / "loss_curve.csv");
  }
}

}  // namespace

void run_eval(const RunConfig& config) {
  StageTimer timer;
  ArtifactLog artifacts(config.out_dir);
  std::vector<SceneEvalInputs> inputs = load_eval_inputs(config, /*compute_clean=*/true, &artifacts);
  const json report = assemble_report(config, inputs);
  write_text_atomic(config.out_dir / "report.json", report.dump(2) + "\n");
  artifacts.add(config.out_dir / "report.json");
  write_per_scene_csv(config.out_dir / "per_scene.csv", report);
  artifacts.add(config.out_dir / "per_scene.csv");
  write_overlays(config, inputs, artifacts);
  write_plots(config, report, artifacts);
  update_manifest(config, "eval", timer.ms(), artifacts);
}

bool run_replay(const std::filesystem::path& out_dir) {
  const std::filesystem::path manifest_path = out_dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path))
    throw IoError("no run manifest at " + manifest_path.string() + "; nothing to replay");
  const json manifest = parse_json_file(manifest_path);
  if (manifest.value("schema_version", -1) != kSchemaVersion)
    throw SchemaVersionError("run manifest has an unsupported schema_version");

  // Verify every recorded artifact before recomputing anything.
  if (!manifest.contains("stages")) throw IoError("run manifest records no stages");
  for (const auto& [stage, info] : manifest.at("stages").items()) {
    for (const auto& [rel, crc] : info.at("artifacts").items()) {
      const std::filesystem::path path = out_dir / rel;
      if (!std::filesystem::exists(path))
        throw IoError("missing artifact from stage " + stage + ": " + path.string());
      if (img::crc32_of_file(path) != crc.get<std::uint32_t>())
        throw ChecksumError("artifact checksum mismatch (stage " + stage + "): " + path.string());
    }
  }

  RunConfig config =
      RunConfig::from_json_text(manifest.at("config_snapshot").dump());
  config.out_dir = out_dir;
  if (!manifest.at("stages").contains("eval"))
    throw IoError("run has no eval stage to replay");

  std::vector<SceneEvalInputs> inputs =
      load_eval_inputs(config, /*compute_clean=*/false, nullptr);
  const json report = assemble_report(config, inputs);
  const std::string recomputed = report.dump(2) + "\n";
  write_text_atomic(out_dir / "report_replay.json", recomputed);
  const std::string stored = read_text(out_dir / "report.json");
  return recomputed == stored;
}

}  // namespace mapattack::pipeline
