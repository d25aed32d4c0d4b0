// gcav: train and compare graph-based driving policies in the built-in
// mixed-traffic scenarios.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gcav/harness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

gcav::ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& sets) {
  if (path.empty()) return gcav::parse_config_text("", sets);
  return gcav::parse_config(path, sets);
}

void print_run_results(const gcav::ExperimentConfig& cfg, gcav::EncoderKind encoder,
                       const std::vector<gcav::RunResult>& runs) {
  for (const auto& r : runs) {
    std::cout << "seed " << r.seed << ": ";
    if (r.diverged) std::cout << "[diverged] ";
    std::cout << r.records.size() << " epochs";
    if (!r.records.empty())
      std::cout << ", final-quarter mean reward " << r.final_quarter_mean();
    std::cout << ", " << r.wall_seconds << " s"
              << "\n  -> " << gcav::run_directory(cfg, encoder, r.seed).string() << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gcav - graph-based multi-agent driving policies in mixed traffic"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::string checkpoint_path;
  int episodes = 10;
  std::string algorithms_csv;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config file");
    cmd->add_option("--set", sets, "override `key=value` (repeatable)");
  };

  CLI::App* cmd_train = app.add_subcommand("train", "train one experiment (all seeds)");
  add_common(cmd_train);
  CLI::App* cmd_eval = app.add_subcommand("evaluate", "greedy rollouts from a checkpoint");
  add_common(cmd_eval);
  cmd_eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  cmd_eval->add_option("--episodes", episodes, "evaluation episodes");
  CLI::App* cmd_ablate = app.add_subcommand("ablate", "train gcn and flat arms, report the gap");
  add_common(cmd_ablate);
  CLI::App* cmd_compare =
      app.add_subcommand("compare", "ablation sweep over several algorithms");
  add_common(cmd_compare);
  cmd_compare->add_option("--algorithms", algorithms_csv, "comma-separated algorithm ids");
  CLI::App* cmd_validate = app.add_subcommand("validate-config", "parse and validate a config");
  add_common(cmd_validate);
  CLI::App* cmd_list = app.add_subcommand("list-algorithms", "print the available algorithm ids");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (cmd_list->parsed()) {
      for (const auto& [id, name] : gcav::algorithm_table()) {
        (void)id;
        std::cout << name << "\n";
      }
      return kExitOk;
    }

    if (cmd_validate->parsed()) {
      const auto cfg = load_config(config_path, sets);
      std::cout << "config ok (fingerprint " << gcav::config_fingerprint(cfg) << ")\n";
      return kExitOk;
    }

    if (cmd_train->parsed()) {
      const auto cfg = load_config(config_path, sets);
      const auto runs = gcav::train(cfg);
      print_run_results(cfg, cfg.encoder_kind, runs);
      return kExitOk;
    }

    if (cmd_eval->parsed()) {
      const auto cfg = load_config(config_path, sets);
      const auto summary = gcav::evaluate(checkpoint_path, cfg, episodes);
      if (summary.no_data) {
        std::cout << "no data (0 episodes)\n";
        return kExitOk;
      }
      std::cout << "episodes: " << summary.episodes << "\n"
                << "mean reward: " << summary.mean_reward << " +- " << summary.std_reward << "\n"
                << "collisions/episode: " << summary.collisions_per_episode << "\n"
                << "ramp-exit success rate: " << summary.ramp_exit_success_rate << "\n"
                << "mean AV speed (m/s): " << summary.mean_av_speed << "\n";
      return kExitOk;
    }

    if (cmd_ablate->parsed() || cmd_compare->parsed()) {
      const auto base = load_config(config_path, sets);
      std::vector<std::string> algo_ids;
      if (cmd_compare->parsed() && !algorithms_csv.empty()) {
        std::stringstream ss(algorithms_csv);
        std::string tok;
        while (std::getline(ss, tok, ',')) algo_ids.push_back(tok);
      } else {
        algo_ids.push_back(gcav::to_string(base.algo.algorithm));
      }
      std::vector<gcav::ComparisonReport> reports;
      for (const auto& name : algo_ids) {
        const auto id = gcav::algorithm_from_string(name);
        if (!id) throw gcav::ConfigError("algorithm.id: unknown algorithm '" + name + "'");
        gcav::ExperimentConfig cfg = base;
        cfg.algo.algorithm = *id;
        cfg.validate();
        reports.push_back(gcav::ablate(cfg));
      }
      nlohmann::json j = nlohmann::json::array();
      for (const auto& r : reports) j.push_back(gcav::comparison_to_json(r));
      const std::string table = gcav::comparison_table(reports);
      const std::filesystem::path out_dir(base.run.out_dir);
      std::filesystem::create_directories(out_dir);
      {
        std::ofstream jf(out_dir / "comparison.json", std::ios::binary);
        jf << j.dump(2) << "\n";
        std::ofstream tf(out_dir / "comparison.txt", std::ios::binary);
        tf << table;
      }
      std::cout << table;
      std::cout << "written: " << (out_dir / "comparison.json").string() << ", "
                << (out_dir / "comparison.txt").string() << "\n";
      return kExitOk;
    }
  } catch (const gcav::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
