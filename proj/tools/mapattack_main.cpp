#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mapattack/errors.hpp"
#include "mapattack/pipeline.hpp"
#include "mapattack/version.hpp"

namespace {

// Exit codes: 0 ok, 2 usage, 3 config, 4 external service, 5 internal.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitService = 4;
constexpr int kExitInternal = 5;

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  int jobs = 0;
  std::string seed;
  std::string oracle;
  std::string vlm;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required = true) {
  auto* opt = cmd->add_option("--config", flags.config_path, "run config JSON file");
  if (config_required) opt->required();
  cmd->add_option("--out", flags.out_dir, "output directory (overrides config out_dir)");
  cmd->add_option("--jobs", flags.jobs, "worker threads for scene-level parallelism");
  cmd->add_option("--seed", flags.seed, "seed override");
  cmd->add_option("--oracle", flags.oracle, "oracle kind override: surrogate|external")
      ->check(CLI::IsMember({"surrogate", "external"}));
  cmd->add_option("--vlm", flags.vlm, "VLM refinement override: on|off")
      ->check(CLI::IsMember({"on", "off"}));
}

mapattack::pipeline::RunConfig resolve_config(const CommonFlags& flags) {
  using mapattack::pipeline::RunConfig;
  RunConfig config = RunConfig::from_file(flags.config_path);
  if (!flags.out_dir.empty()) config.out_dir = flags.out_dir;
  if (flags.jobs > 0) config.jobs = flags.jobs;
  if (!flags.seed.empty()) config.seed = std::stoull(flags.seed);
  if (!flags.oracle.empty()) config.oracle.kind = flags.oracle;
  if (!flags.vlm.empty()) config.vlm.enabled = flags.vlm == "on";
  if (config.out_dir.empty()) throw mapattack::ConfigError("no output directory (config out_dir or --out)");
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adversarial robustness toolkit for online vectorized map construction"};
  app.set_version_flag("--version", std::string("mapattack ") + mapattack::kVersion);
  app.require_subcommand(1);

  CommonFlags gen_flags, classify_flags, attack_flags, eval_flags;
  std::string replay_dir;

  CLI::App* cmd_gen = app.add_subcommand("gen", "generate a labeled synthetic scene suite");
  add_common(cmd_gen, gen_flags);
  CLI::App* cmd_classify =
      app.add_subcommand("classify", "stage 1: rule-based classification plus optional VLM refinement");
  add_common(cmd_classify, classify_flags);
  CLI::App* cmd_attack =
      app.add_subcommand("attack", "stage 2: rank positions and optimize attack configurations");
  add_common(cmd_attack, attack_flags);
  CLI::App* cmd_eval = app.add_subcommand("eval", "evaluate map quality and planning impact");
  add_common(cmd_eval, eval_flags);
  CLI::App* cmd_replay = app.add_subcommand("replay", "recompute a run's report from persisted artifacts");
  cmd_replay->add_option("run_dir", replay_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (cmd_gen->parsed()) {
      mapattack::pipeline::run_gen(resolve_config(gen_flags));
    } else if (cmd_classify->parsed()) {
      const auto config = resolve_config(classify_flags);
      const auto verdicts = mapattack::pipeline::run_classify(config);
      std::size_t asym = 0;
      for (const auto& v : verdicts)
        if (v.final_label == mapattack::cls::SceneLabel::kAsymmetric) ++asym;
      std::cout << "classified " << verdicts.size() << " scenes, " << asym << " asymmetric\n";
    } else if (cmd_attack->parsed()) {
      mapattack::pipeline::run_attack(resolve_config(attack_flags));
    } else if (cmd_eval->parsed()) {
      mapattack::pipeline::run_eval(resolve_config(eval_flags));
    } else if (cmd_replay->parsed()) {
      const bool identical = mapattack::pipeline::run_replay(replay_dir);
      std::cout << (identical ? "replay: report is byte-identical\n"
                              : "replay: report DIFFERS from the stored report\n");
      if (!identical) return kExitInternal;
    }
  } catch (const mapattack::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const mapattack::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const mapattack::OracleUnavailableError& e) {
    std::cerr << "external service error: " << e.what() << "\n";
    return kExitService;
  } catch (const mapattack::ServiceError& e) {
    std::cerr << "external service error: " << e.what() << "\n";
    return kExitService;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitOk;
}
