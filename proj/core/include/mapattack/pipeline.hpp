#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mapattack/attack.hpp"
#include "mapattack/classifier.hpp"
#include "mapattack/interference.hpp"
#include "mapattack/metrics.hpp"
#include "mapattack/oracle.hpp"
#include "mapattack/planner.hpp"
#include "mapattack/scene.hpp"
#include "mapattack/vlm.hpp"

namespace mapattack::pipeline {

struct SuiteConfig {
  std::map<std::string, int> counts;  // road kind -> scene count
  std::uint64_t suite_seed = 0;       // defaults to the run seed
};

struct VlmRunConfig {
  bool enabled = false;
  vlm::VlmConfig client;
  int max_in_flight = 4;
};

struct AttackRunConfig {
  std::string vector = "blinding";  // blinding | patch
  std::uint64_t budget = 400;
  interf::FlashlightSpec flashlight;
  attack::PatchGeometry patch;
  attack::PgdParams pgd;
  std::vector<std::string> baselines;  // subset of {random, pso}
};

struct EvalRunConfig {
  std::vector<double> ap_thresholds = {0.5, 1.0, 1.5};
  plan::PlannerParams planner;
  plan::VehicleParams vehicle;
};

struct RunConfig {
  std::uint64_t seed = 0;  // mandatory in config files
  std::filesystem::path out_dir;
  int jobs = 1;
  std::optional<SuiteConfig> suite;
  std::vector<std::filesystem::path> scenes;  // explicit scene dirs/manifests
  cls::RuleThresholds classifier;
  VlmRunConfig vlm;
  oracle::OracleSpec oracle;
  attack::RankingParams ranking;
  std::string objective = "straighten";
  double alpha = 1.0;
  double beta = 1.0;
  AttackRunConfig attack;
  EvalRunConfig eval;

  static RunConfig from_file(const std::filesystem::path& path);
  static RunConfig from_json_text(const std::string& text);
  /// Resolved snapshot (all effective values) as canonical JSON text.
  std::string snapshot_json() const;
};

/// Scene directories of a run (gen output or explicit config paths), sorted by
/// scene id for deterministic processing.
std::vector<std::filesystem::path> list_scene_dirs(const RunConfig& config);

struct SceneVerdict {
  std::string scene_id;
  cls::RuleVerdict rule;
  std::optional<vlm::VlmVerdict> vlm_verdict;
  bool refined = false;  // false = rule-only (VLM off or failed)
  cls::SceneLabel final_label = cls::SceneLabel::kSymmetric;
  std::optional<bool> truth_asym;
};

void run_gen(const RunConfig& config);
std::vector<SceneVerdict> run_classify(const RunConfig& config);
void run_attack(const RunConfig& config);
void run_eval(const RunConfig& config);
/// Verifies artifact checksums and recomputes the report from persisted
/// artifacts; throws ChecksumError on tampering. Returns true when the
/// recomputed report is byte-identical to the stored one.
bool run_replay(const std::filesystem::path& out_dir);

/// Deterministic per-scene substream seed.
std::uint64_t scene_seed(std::uint64_t run_seed, const std::string& scene_id);

/// Minimal worker pool: calls fn(i) for i in [0, n) using `jobs` threads.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace mapattack::pipeline
