#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "mapattack/errors.hpp"
#include "mapattack/pipeline.hpp"

using namespace mapattack;
using pipeline::RunConfig;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mapattack_test_pipeline" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string small_config_json(const fs::path& out_dir, int jobs) {
  nlohmann::json j;
  j["seed"] = 2026;
  j["out_dir"] = out_dir.string();
  j["jobs"] = jobs;
  j["suite"] = {{"counts", {{"fork", 2}, {"straight", 1}, {"merge", 1}}}};
  j["attack"] = {{"vector", "blinding"}, {"budget", 40}};
  j["ranking"] = {{"top_n", 40}};
  j["objective"] = {{"kind", "straighten"}};
  return j.dump(2);
}

RunConfig write_and_load_config(const fs::path& dir, const std::string& text) {
  const fs::path path = dir / "config.json";
  std::ofstream out(path);
  out << text;
  out.close();
  return RunConfig::from_file(path);
}

int run_cli(const std::string& args) {
  const char* bin = std::getenv("MAPATTACK_BIN");
  REQUIRE(bin != nullptr);
  const std::string cmd = std::string(bin) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

void run_full_pipeline(const RunConfig& config) {
  pipeline::run_gen(config);
  pipeline::run_classify(config);
  pipeline::run_attack(config);
  pipeline::run_eval(config);
}

}  // namespace

TEST_CASE("config parsing validates required fields and values") {
  CHECK_THROWS_AS(RunConfig::from_json_text("{}"), ConfigError);  // seed mandatory
  CHECK_THROWS_AS(RunConfig::from_json_text("not json"), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"seed":1,"objective":{"kind":"nope"}})"),
                  ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"seed":1,"attack":{"vector":"laser"}})"),
                  ConfigError);
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"seed":1,"oracle":{"kind":"magic"}})"),
                  ConfigError);
  const RunConfig ok = RunConfig::from_json_text(R"({"seed": 7, "out_dir": "/tmp/x"})");
  CHECK(ok.seed == 7);
  CHECK(ok.attack.budget == 400);
  CHECK(ok.eval.ap_thresholds == std::vector<double>{0.5, 1.0, 1.5});
}

TEST_CASE("full pipeline produces a coherent run directory") {
  const fs::path out = fresh_dir("full");
  const RunConfig config = write_and_load_config(out, small_config_json(out / "run", 1));
  run_full_pipeline(config);

  // Scenes, verdicts, confusion table.
  CHECK(fs::exists(config.out_dir / "suite_index.json"));
  const nlohmann::json verdicts = nlohmann::json::parse(read_file(config.out_dir / "verdicts.json"));
  CHECK(verdicts.at("scenes").size() == 4);
  const nlohmann::json confusion =
      nlohmann::json::parse(read_file(config.out_dir / "confusion.json"));
  int total = 0;
  for (const auto& [row, cols] : confusion.at("rows").items()) {
    (void)row;
    for (const auto& [col, count] : cols.items()) {
      (void)col;
      total += count.get<int>();
    }
  }
  CHECK(total == 4);  // rows sum to the suite size

  // Attack artifacts exist for asymmetric scenes only.
  int attacked_dirs = 0;
  for (const auto& row : verdicts.at("scenes")) {
    const fs::path dir = config.out_dir / "attacks" / row.at("scene_id").get<std::string>();
    const bool is_asym = row.at("final").get<std::string>() == "asymmetric";
    CHECK(fs::exists(dir / "attack_config.json") == is_asym);
    if (is_asym) {
      ++attacked_dirs;
      CHECK(fs::exists(dir / "trace.jsonl"));
      CHECK(fs::exists(dir / "predicted_attacked.json"));
      // Budget honored exactly: cumulative queries never exceed the budget.
      std::ifstream trace(dir / "trace.jsonl");
      std::string line;
      std::uint64_t last = 0;
      while (std::getline(trace, line)) {
        if (line.empty()) continue;
        last = nlohmann::json::parse(line).at("queries").get<std::uint64_t>();
      }
      CHECK(last <= 40);
    }
  }
  CHECK(attacked_dirs >= 2);  // the forks and the merge

  // Report and plots.
  const nlohmann::json report = nlohmann::json::parse(read_file(config.out_dir / "report.json"));
  CHECK(report.at("n_scenes").get<int>() == 4);
  CHECK(report.at("n_attacked").get<int>() == attacked_dirs);
  CHECK(report.at("clean").at("map").get<double>() > 0.5);
  for (const char* key : {"ugr", "uptr"}) {
    const double clean_v = report.at("clean").at(key).get<double>();
    CHECK(clean_v >= 0.0);
    CHECK(clean_v <= 1.0);
    const double att_v = report.at("attacked").at("attacked").at(key).get<double>();
    CHECK(att_v >= 0.0);
    CHECK(att_v <= 1.0);
  }
  CHECK(fs::exists(config.out_dir / "per_scene.csv"));
  CHECK(fs::exists(config.out_dir / "plots" / "metrics_bar.svg"));
  CHECK(fs::exists(config.out_dir / "plots" / "loss_curve.csv"));
  int overlays = 0;
  for (const auto& entry : fs::directory_iterator(config.out_dir / "overlays")) {
    (void)entry;
    ++overlays;
  }
  CHECK(overlays == attacked_dirs);

  SUBCASE("replay recomputes a byte-identical report") {
    CHECK(pipeline::run_replay(config.out_dir));
    CHECK(read_file(config.out_dir / "report_replay.json") ==
          read_file(config.out_dir / "report.json"));
  }

  SUBCASE("tampered artifacts are rejected by checksum") {
    const nlohmann::json v = nlohmann::json::parse(read_file(config.out_dir / "verdicts.json"));
    const std::string any_scene = v.at("scenes").at(0).at("scene_id").get<std::string>();
    // Find an attacked scene to tamper with.
    fs::path trace_path;
    for (const auto& row : v.at("scenes")) {
      const fs::path p =
          config.out_dir / "attacks" / row.at("scene_id").get<std::string>() / "trace.jsonl";
      if (fs::exists(p)) trace_path = p;
    }
    REQUIRE_FALSE(trace_path.empty());
    std::ofstream tamper(trace_path, std::ios::app);
    tamper << "{\"position\":[0,0,0],\"loss\":-999,\"queries\":1}\n";
    tamper.close();
    CHECK_THROWS_AS(pipeline::run_replay(config.out_dir), ChecksumError);
  }

  SUBCASE("missing artifacts name the stage") {
    fs::remove(config.out_dir / "verdicts.json");
    try {
      pipeline::run_replay(config.out_dir);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("classify") != std::string::npos);
    }
  }
}

TEST_CASE("identical seeds give byte-identical reports across worker counts") {
  const fs::path out_a = fresh_dir("jobs1");
  const fs::path out_b = fresh_dir("jobs2");
  const RunConfig config_a = write_and_load_config(out_a, small_config_json(out_a / "run", 1));
  const RunConfig config_b = write_and_load_config(out_b, small_config_json(out_b / "run", 2));
  run_full_pipeline(config_a);
  run_full_pipeline(config_b);
  CHECK(read_file(config_a.out_dir / "report.json") == read_file(config_b.out_dir / "report.json"));
  CHECK(read_file(config_a.out_dir / "verdicts.json") ==
        read_file(config_b.out_dir / "verdicts.json"));
  CHECK(read_file(config_a.out_dir / "per_scene.csv") ==
        read_file(config_b.out_dir / "per_scene.csv"));
}

TEST_CASE("cli maps error classes to exit codes") {
  const fs::path out = fresh_dir("cli");
  SUBCASE("usage errors exit 2") {
    CHECK(run_cli("definitely-not-a-command") == 2);
    CHECK(run_cli("gen") == 2);  // --config required
  }
  SUBCASE("config errors exit 3") {
    const fs::path bad = out / "bad.json";
    std::ofstream f(bad);
    f << R"({"out_dir": "x"})";  // no seed
    f.close();
    CHECK(run_cli("gen --config " + bad.string()) == 3);
  }
  SUBCASE("gen then classify work through the binary") {
    const fs::path cfg = out / "config.json";
    std::ofstream f(cfg);
    f << small_config_json(out / "run", 1);
    f.close();
    CHECK(run_cli("gen --config " + cfg.string()) == 0);
    CHECK(run_cli("classify --config " + cfg.string()) == 0);
    CHECK(fs::exists(out / "run" / "verdicts.json"));
    // attack before classify on a fresh dir exits with an internal error code
    // (verdicts.json missing names the stage).
    const fs::path cfg2 = out / "config2.json";
    std::ofstream f2(cfg2);
    nlohmann::json j = nlohmann::json::parse(small_config_json(out / "run2", 1));
    f2 << j.dump();
    f2.close();
    CHECK(run_cli("gen --config " + cfg2.string()) == 0);
    CHECK(run_cli("attack --config " + cfg2.string()) == 5);
  }
  SUBCASE("external oracle handshake failure exits 4") {
    const char* stub = std::getenv("MAPATTACK_STUB");
    REQUIRE(stub != nullptr);
    const fs::path cfg = out / "config_ext.json";
    nlohmann::json j = nlohmann::json::parse(small_config_json(out / "run_ext", 1));
    j["oracle"] = {{"kind", "external"},
                   {"command", {"python3", std::string(stub), "badshake"}}};
    std::ofstream f(cfg);
    f << j.dump();
    f.close();
    CHECK(run_cli("gen --config " + cfg.string()) == 0);
    CHECK(run_cli("classify --config " + cfg.string()) == 0);
    CHECK(run_cli("attack --config " + cfg.string()) == 4);
  }
}

TEST_CASE("vlm-disabled runs flag every verdict unrefined") {
  const fs::path out = fresh_dir("unrefined");
  const RunConfig config = write_and_load_config(out, small_config_json(out / "run", 1));
  pipeline::run_gen(config);
  const auto verdicts = pipeline::run_classify(config);
  for (const auto& v : verdicts) CHECK_FALSE(v.refined);
}
