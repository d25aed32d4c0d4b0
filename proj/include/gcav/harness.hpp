#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gcav/agents.hpp"
#include "gcav/checkpoint.hpp"
#include "gcav/config.hpp"
#include "gcav/env.hpp"

#include <json.hpp>

namespace gcav {

struct EpochRecord {
  int epoch = 0;
  double mean_reward = 0.0;
  long collisions = 0;
  long lane_changes = 0;
  long ramp_exits = 0;
  double mean_av_speed = 0.0;
};

struct RunResult {
  std::string config_fingerprint;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> records;
  double wall_seconds = 0.0;
  std::string checkpoint_path;
  bool diverged = false;

  // mean epoch reward over the last quarter of training
  double final_quarter_mean() const {
    if (records.empty()) return 0.0;
    const std::size_t quarter = std::max<std::size_t>(1, records.size() / 4);
    double acc = 0.0;
    for (std::size_t i = records.size() - quarter; i < records.size(); ++i)
      acc += records[i].mean_reward;
    return acc / static_cast<double>(quarter);
  }
};

struct EpisodeResult {
  double reward = 0.0;
  long collisions = 0;
  long lane_changes = 0;
  long ramp_exits = 0;
  long av_exits_total = 0;
  double mean_av_speed = 0.0;
};

// One episode against any env exposing reset/step/decisions_per_episode.
template <typename Env>
EpisodeResult run_episode(Env& env, Agent& agent, ActMode mode, Rng& rng) {
  EpisodeResult out;
  GraphObservation obs = env.reset(rng);
  const int decisions = env.decisions_per_episode();
  double speed_acc = 0.0;
  for (int d = 0; d < decisions; ++d) {
    const auto actions = agent.act(obs, mode);
    auto step = env.step(actions, rng);
    out.reward += step.reward;
    out.collisions += step.events.collisions;
    out.lane_changes += step.events.lane_changes_by_avs;
    for (const auto& e : step.events.exits) {
      if (e.point == ExitPoint::kRamp1 || e.point == ExitPoint::kRamp2) ++out.ramp_exits;
      if (kind_is_av(e.kind)) ++out.av_exits_total;
    }
    speed_acc += env.mean_av_speed();
    if (mode == ActMode::kTrain) {
      Transition t;
      t.obs = std::move(obs);
      t.actions = actions;
      t.reward = step.reward;
      t.next_obs = step.obs;
      t.done = step.done;
      t.mask = t.obs.index;
      agent.observe(t);
    }
    obs = std::move(step.obs);
  }
  if (mode == ActMode::kTrain) agent.end_episode();
  out.mean_av_speed = speed_acc / std::max(decisions, 1);
  return out;
}

namespace detail {

inline std::string fmt10(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline std::string scenario_name(Scenario s) {
  return s == Scenario::kHighwayRamping ? "highway_ramping" : "figure_eight";
}

}  // namespace detail

inline std::filesystem::path run_directory(const ExperimentConfig& cfg, EncoderKind encoder,
                                           std::uint64_t seed) {
  return std::filesystem::path(cfg.run.out_dir) / detail::scenario_name(cfg.scenario.scenario) /
         to_string(cfg.algo.algorithm) / encoder_id(encoder) / ("seed" + std::to_string(seed));
}

inline void write_metrics_csv(const std::filesystem::path& path, const ExperimentConfig& cfg,
                              EncoderKind encoder, const RunResult& result) {
  std::ofstream out(path, std::ios::binary);
  out << "epoch,seed,scenario,algorithm,encoder,mean_reward,collisions,lane_changes,exits,mean_speed\n";
  for (const auto& r : result.records) {
    out << r.epoch << ',' << result.seed << ',' << detail::scenario_name(cfg.scenario.scenario)
        << ',' << to_string(cfg.algo.algorithm) << ',' << encoder_id(encoder) << ','
        << detail::fmt10(r.mean_reward) << ',' << r.collisions << ',' << r.lane_changes << ','
        << r.ramp_exits << ',' << detail::fmt10(r.mean_av_speed) << '\n';
  }
}

// Trains one seed of one arm; returns the per-epoch record stream and
// writes metrics.csv, resolved-config, and checkpoints into the run dir.
inline RunResult train_one(const ExperimentConfig& cfg, EncoderKind encoder, std::uint64_t seed,
                           bool write_files = true) {
  const auto t0 = std::chrono::steady_clock::now();
  RunResult result;
  result.config_fingerprint = config_fingerprint(cfg);
  result.seed = seed;

  const ScenarioConfig scen = cfg.scenario_resolved();
  AlgoConfig algo = cfg.algo_resolved();
  TrafficEnv env(scen, cfg.reward);
  auto agent = make_agent(algo, encoder, env.feature_dim(), cfg.encoder_widths(), seed);
  Rng sim_rng = named_stream(seed, "sim");

  std::filesystem::path dir;
  std::ofstream trace;
  if (write_files) {
    dir = run_directory(cfg, encoder, seed);
    std::filesystem::create_directories(dir);
    std::ofstream rc(dir / "resolved-config.cfg", std::ios::binary);
    rc << serialize_config(cfg);
    if (cfg.run.trace) {
      trace.open(dir / "trace.jsonl", std::ios::binary);
      env.set_trace(&trace);
    }
  }

  auto save = [&](const std::string& name) {
    if (!write_files) return std::string();
    Checkpoint ck;
    ck.algorithm_id = agent->algorithm_id();
    ck.encoder_id = agent->encoder_name();
    ck.params = agent->parameters();
    const auto path = (dir / name).string();
    save_checkpoint(path, ck);
    return path;
  };

  try {
    for (int epoch = 0; epoch < cfg.run.epochs; ++epoch) {
      EpochRecord rec;
      rec.epoch = epoch;
      double reward_acc = 0.0, speed_acc = 0.0;
      for (int ep = 0; ep < cfg.run.episodes_per_epoch; ++ep) {
        const EpisodeResult er = run_episode(env, *agent, ActMode::kTrain, sim_rng);
        reward_acc += er.reward;
        speed_acc += er.mean_av_speed;
        rec.collisions += er.collisions;
        rec.lane_changes += er.lane_changes;
        rec.ramp_exits += er.ramp_exits;
      }
      rec.mean_reward = reward_acc / cfg.run.episodes_per_epoch;
      rec.mean_av_speed = speed_acc / cfg.run.episodes_per_epoch;
      if (!std::isfinite(rec.mean_reward)) throw DivergenceError("non-finite epoch reward");
      result.records.push_back(rec);
      if (cfg.run.checkpoint_every > 0 && (epoch + 1) % cfg.run.checkpoint_every == 0)
        save("checkpoint-epoch" + std::to_string(epoch) + ".bin");
    }
  } catch (const DivergenceError&) {
    result.diverged = true;
  }

  result.checkpoint_path = save("checkpoint.bin");
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (write_files) write_metrics_csv(run_directory(cfg, encoder, seed) / "metrics.csv", cfg, encoder, result);
  return result;
}

// All seeds of one arm, plus the cross-seed curve file (epoch, mean, std).
inline std::vector<RunResult> train(const ExperimentConfig& cfg, EncoderKind encoder,
                                    bool write_files = true) {
  std::vector<RunResult> runs;
  for (const std::uint64_t seed : cfg.run.seeds) runs.push_back(train_one(cfg, encoder, seed, write_files));
  if (write_files && !runs.empty() && !runs.front().records.empty()) {
    const auto dir = std::filesystem::path(cfg.run.out_dir) /
                     detail::scenario_name(cfg.scenario.scenario) / to_string(cfg.algo.algorithm) /
                     encoder_id(encoder);
    std::filesystem::create_directories(dir);
    std::ofstream curve(dir / "curve.csv", std::ios::binary);
    curve << "epoch,mean,std\n";
    const std::size_t epochs = runs.front().records.size();
    for (std::size_t e = 0; e < epochs; ++e) {
      double mean = 0.0;
      int n = 0;
      for (const auto& r : runs)
        if (e < r.records.size()) {
          mean += r.records[e].mean_reward;
          ++n;
        }
      if (n == 0) break;
      mean /= n;
      double var = 0.0;
      for (const auto& r : runs)
        if (e < r.records.size()) var += (r.records[e].mean_reward - mean) * (r.records[e].mean_reward - mean);
      var = n > 0 ? var / n : 0.0;
      curve << e << ',' << detail::fmt10(mean) << ',' << detail::fmt10(std::sqrt(var)) << '\n';
    }
  }
  return runs;
}

inline std::vector<RunResult> train(const ExperimentConfig& cfg, bool write_files = true) {
  return train(cfg, cfg.encoder_kind, write_files);
}

struct ComparisonReport {
  std::string scenario;
  std::string algorithm;
  struct SeedRow {
    std::uint64_t seed = 0;
    double grl = 0.0;  // graph-encoder arm, final-quarter mean
    double drl = 0.0;  // flat-encoder arm
    bool grl_diverged = false;
    bool drl_diverged = false;
  };
  std::vector<SeedRow> per_seed;
  double mean_grl = 0.0;
  double mean_drl = 0.0;
  double optimization_rate_pct = 0.0;

  void recompute_means() {
    mean_grl = 0.0;
    mean_drl = 0.0;
    for (const auto& row : per_seed) {
      mean_grl += row.grl;
      mean_drl += row.drl;
    }
    if (!per_seed.empty()) {
      mean_grl /= static_cast<double>(per_seed.size());
      mean_drl /= static_cast<double>(per_seed.size());
    }
    optimization_rate_pct = mean_drl != 0.0 ? (mean_grl - mean_drl) / mean_drl * 100.0 : 0.0;
  }
};

// Trains the graph arm and the flat arm with identical seeds and
// hyperparameters and reports final-quarter means plus the optimization rate.
inline ComparisonReport ablate(const ExperimentConfig& cfg, EncoderKind grl_arm = EncoderKind::kGcn,
                               EncoderKind drl_arm = EncoderKind::kFlat, bool write_files = true) {
  ComparisonReport report;
  report.scenario = detail::scenario_name(cfg.scenario.scenario);
  report.algorithm = to_string(cfg.algo.algorithm);
  for (const std::uint64_t seed : cfg.run.seeds) {
    ComparisonReport::SeedRow row;
    row.seed = seed;
    const RunResult g = train_one(cfg, grl_arm, seed, write_files);
    const RunResult d = train_one(cfg, drl_arm, seed, write_files);
    row.grl = g.final_quarter_mean();
    row.drl = d.final_quarter_mean();
    row.grl_diverged = g.diverged;
    row.drl_diverged = d.diverged;
    report.per_seed.push_back(row);
  }
  report.recompute_means();
  return report;
}

inline nlohmann::json comparison_to_json(const ComparisonReport& r) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["scenario"] = r.scenario;
  j["algorithm"] = r.algorithm;
  j["mean_reward_drl"] = r.mean_drl;
  j["mean_reward_grl"] = r.mean_grl;
  j["optimization_rate_pct"] = r.optimization_rate_pct;
  j["per_seed"] = nlohmann::json::array();
  for (const auto& row : r.per_seed) {
    j["per_seed"].push_back({{"seed", row.seed},
                             {"grl", row.grl},
                             {"drl", row.drl},
                             {"grl_diverged", row.grl_diverged},
                             {"drl_diverged", row.drl_diverged}});
  }
  return j;
}

inline std::string comparison_table(const std::vector<ComparisonReport>& reports) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-16s %-12s %14s %14s %10s\n", "scenario", "algorithm",
                "drl_reward", "grl_reward", "rate_%");
  out += line;
  out += std::string(70, '-') + "\n";
  for (const auto& r : reports) {
    std::snprintf(line, sizeof(line), "%-16s %-12s %14.2f %14.2f %9.2f%%\n", r.scenario.c_str(),
                  r.algorithm.c_str(), r.mean_drl, r.mean_grl, r.optimization_rate_pct);
    out += line;
  }
  return out;
}

struct EvalSummary {
  int episodes = 0;
  bool no_data = true;
  double mean_reward = 0.0;
  double std_reward = 0.0;
  double collisions_per_episode = 0.0;
  double ramp_exit_success_rate = 0.0;
  double mean_av_speed = 0.0;
};

// Greedy/mean-action rollouts from a checkpoint. The checkpoint's
// algorithm and encoder ids must match the config.
inline EvalSummary evaluate(const std::string& checkpoint_path, const ExperimentConfig& cfg,
                            int episodes) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  if (ck.algorithm_id != to_string(cfg.algo.algorithm))
    throw ConfigError("checkpoint algorithm '" + ck.algorithm_id + "' does not match config '" +
                      to_string(cfg.algo.algorithm) + "'");
  if (ck.encoder_id != encoder_id(cfg.encoder_kind))
    throw ConfigError("checkpoint encoder '" + ck.encoder_id + "' does not match config '" +
                      encoder_id(cfg.encoder_kind) + "'");
  EvalSummary summary;
  summary.episodes = episodes;
  if (episodes <= 0) return summary;  // explicit no-data marker stays set

  const ScenarioConfig scen = cfg.scenario_resolved();
  TrafficEnv env(scen, cfg.reward);
  auto agent = make_agent(cfg.algo_resolved(), cfg.encoder_kind, env.feature_dim(),
                          cfg.encoder_widths(), cfg.run.seeds.front());
  agent->load_parameters(ck.params);
  Rng rng = named_stream(cfg.run.seeds.front(), "eval");

  std::vector<double> rewards;
  long collisions = 0, ramp_exits = 0, av_exits = 0;
  double speed_acc = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    const EpisodeResult er = run_episode(env, *agent, ActMode::kEval, rng);
    rewards.push_back(er.reward);
    collisions += er.collisions;
    ramp_exits += er.ramp_exits;
    av_exits += er.av_exits_total;
    speed_acc += er.mean_av_speed;
  }
  summary.no_data = false;
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= episodes;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  summary.mean_reward = mean;
  summary.std_reward = std::sqrt(var / episodes);
  summary.collisions_per_episode = static_cast<double>(collisions) / episodes;
  summary.ramp_exit_success_rate =
      av_exits > 0 ? static_cast<double>(ramp_exits) / static_cast<double>(av_exits) : 0.0;
  summary.mean_av_speed = speed_acc / episodes;
  return summary;
}

}  // namespace gcav
