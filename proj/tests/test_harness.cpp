#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "gcav/harness.hpp"
#include "tabular_mdp.hpp"

using namespace gcav;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig smoke_config(const std::string& extra = "") {
  return parse_config_text(
      "run.epochs = 2\n"
      "run.episodes_per_epoch = 2\n"
      "run.horizon_steps = 20\n"
      "run.seeds = 0\n"
      "algorithm.batch_size = 8\n"
      "algorithm.warmup = 8\n"
      "encoder.hidden_width = 8\n" +
      extra);
}

// Minimal env with reward 1 per decision, for harness plumbing tests.
struct StubEnv {
  int decisions = 10;
  GraphObservation reset(Rng&) { return gcav::test::mdp_obs(0); }
  EnvStep step(const std::vector<double>&, Rng&) {
    EnvStep out;
    out.obs = gcav::test::mdp_obs(0);
    out.reward = 1.0;
    out.done = ++steps >= decisions;
    return out;
  }
  int decisions_per_episode() const { return decisions; }
  double mean_av_speed() const { return 0.0; }
  int steps = 0;
};

}  // namespace

TEST(RunEpisode, StubRewardSumsToHorizon) {
  StubEnv env;
  AlgoConfig cfg = gcav::test::tabular_pg_config(AlgorithmId::kReinforce);
  PolicyGradientAgent agent(cfg, EncoderKind::kFlat, 3, {8}, 1);
  Rng rng(1);
  const auto r = run_episode(env, agent, ActMode::kEval, rng);
  EXPECT_DOUBLE_EQ(r.reward, 10.0);
}

TEST(RunEpisode, ZeroWeightRewardGivesZero) {
  ExperimentConfig cfg = smoke_config("reward.w1 = 0\nreward.w2 = 0\nreward.w3 = 0\nreward.w4 = 0\n");
  TrafficEnv env(cfg.scenario_resolved(), cfg.reward);
  auto agent = make_agent(cfg.algo_resolved(), EncoderKind::kGcn, env.feature_dim(),
                          cfg.encoder_widths(), 0);
  Rng rng(3);
  const auto r = run_episode(env, *agent, ActMode::kEval, rng);
  EXPECT_DOUBLE_EQ(r.reward, 0.0);
}

TEST(RunEpisode, EvalIsDeterministicForFixedSeed) {
  ExperimentConfig cfg = smoke_config();
  TrafficEnv env(cfg.scenario_resolved(), cfg.reward);
  auto agent = make_agent(cfg.algo_resolved(), EncoderKind::kGcn, env.feature_dim(),
                          cfg.encoder_widths(), 0);
  Rng rng_a(5);
  const auto a = run_episode(env, *agent, ActMode::kEval, rng_a);
  Rng rng_b(5);
  const auto b = run_episode(env, *agent, ActMode::kEval, rng_b);
  EXPECT_EQ(a.reward, b.reward);
  EXPECT_EQ(a.collisions, b.collisions);
  EXPECT_EQ(a.lane_changes, b.lane_changes);
}

TEST(Train, ZeroEpochsWritesInitialCheckpointOnly) {
  ExperimentConfig cfg = smoke_config("run.epochs = 0\n");
  cfg.run.out_dir = (fs::temp_directory_path() / "gcav_test_epochs0").string();
  fs::remove_all(cfg.run.out_dir);
  const auto runs = train(cfg);
  ASSERT_EQ(runs.size(), 1u);
  EXPECT_TRUE(runs[0].records.empty());
  EXPECT_TRUE(fs::exists(runs[0].checkpoint_path));
  const Checkpoint ck = load_checkpoint(runs[0].checkpoint_path);
  EXPECT_EQ(ck.algorithm_id, "dqn");
  EXPECT_EQ(ck.encoder_id, "gcn");
  fs::remove_all(cfg.run.out_dir);
}

TEST(Train, ThreeSeedsGiveThreeIndependentResults) {
  ExperimentConfig cfg = smoke_config("run.seeds = 0,1,2\n");
  cfg.run.out_dir = (fs::temp_directory_path() / "gcav_test_seeds").string();
  fs::remove_all(cfg.run.out_dir);
  const auto runs = train(cfg);
  ASSERT_EQ(runs.size(), 3u);
  for (const auto& r : runs) {
    EXPECT_EQ(r.records.size(), 2u);
    for (const auto& rec : r.records) EXPECT_TRUE(std::isfinite(rec.mean_reward));
  }
  // distinct streams: the trajectories should not coincide
  EXPECT_FALSE(runs[0].records[0].mean_reward == runs[1].records[0].mean_reward &&
               runs[1].records[0].mean_reward == runs[2].records[0].mean_reward);
  fs::remove_all(cfg.run.out_dir);
}

TEST(Train, MetricsCsvIsByteIdenticalAcrossInvocations) {
  ExperimentConfig cfg = smoke_config();
  cfg.run.out_dir = (fs::temp_directory_path() / "gcav_test_det_a").string();
  fs::remove_all(cfg.run.out_dir);
  train(cfg);
  const std::string a = slurp(run_directory(cfg, cfg.encoder_kind, 0) / "metrics.csv");
  fs::remove_all(cfg.run.out_dir);

  cfg.run.out_dir = (fs::temp_directory_path() / "gcav_test_det_b").string();
  fs::remove_all(cfg.run.out_dir);
  train(cfg);
  const std::string b = slurp(run_directory(cfg, cfg.encoder_kind, 0) / "metrics.csv");
  fs::remove_all(cfg.run.out_dir);

  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a, b);
}

TEST(Train, SeedPermutationPermutesResults) {
  ExperimentConfig cfg = smoke_config("run.seeds = 3,4\n");
  const auto fwd = train(cfg, cfg.encoder_kind, false);
  ExperimentConfig rev_cfg = smoke_config("run.seeds = 4,3\n");
  const auto rev = train(rev_cfg, rev_cfg.encoder_kind, false);
  ASSERT_EQ(fwd.size(), 2u);
  ASSERT_EQ(rev.size(), 2u);
  EXPECT_EQ(fwd[0].records[0].mean_reward, rev[1].records[0].mean_reward);
  EXPECT_EQ(fwd[1].records[0].mean_reward, rev[0].records[0].mean_reward);
}

TEST(Ablate, SelfComparisonIsExactlyZero) {
  ExperimentConfig cfg = smoke_config();
  const auto report = ablate(cfg, EncoderKind::kGcn, EncoderKind::kGcn, false);
  ASSERT_EQ(report.per_seed.size(), 1u);
  EXPECT_EQ(report.per_seed[0].grl, report.per_seed[0].drl);
  EXPECT_EQ(report.optimization_rate_pct, 0.0);
}

TEST(Ablate, ReportNumbersAreRecomputable) {
  ExperimentConfig cfg = smoke_config("run.seeds = 0,1\n");
  auto report = ablate(cfg, EncoderKind::kGcn, EncoderKind::kFlat, false);
  double g = 0.0, d = 0.0;
  for (const auto& row : report.per_seed) {
    g += row.grl;
    d += row.drl;
  }
  g /= report.per_seed.size();
  d /= report.per_seed.size();
  EXPECT_NEAR(report.mean_grl, g, 1e-9);
  EXPECT_NEAR(report.mean_drl, d, 1e-9);
  EXPECT_NEAR(report.optimization_rate_pct, (g - d) / d * 100.0, 1e-9);
  const auto j = comparison_to_json(report);
  EXPECT_EQ(j["scenario"], "highway_ramping");
  EXPECT_EQ(j["per_seed"].size(), 2u);
}

TEST(Evaluate, ZeroEpisodesIsExplicitNoData) {
  ExperimentConfig cfg = smoke_config();
  cfg.run.out_dir = (fs::temp_directory_path() / "gcav_test_eval0").string();
  fs::remove_all(cfg.run.out_dir);
  const auto runs = train(cfg);
  const auto summary = evaluate(runs[0].checkpoint_path, cfg, 0);
  EXPECT_TRUE(summary.no_data);
  EXPECT_EQ(summary.episodes, 0);
  fs::remove_all(cfg.run.out_dir);
}

TEST(Evaluate, RepeatedEvaluationIsIdentical) {
  ExperimentConfig cfg = smoke_config();
  cfg.run.out_dir = (fs::temp_directory_path() / "gcav_test_eval_det").string();
  fs::remove_all(cfg.run.out_dir);
  const auto runs = train(cfg);
  const auto a = evaluate(runs[0].checkpoint_path, cfg, 3);
  const auto b = evaluate(runs[0].checkpoint_path, cfg, 3);
  EXPECT_EQ(a.mean_reward, b.mean_reward);
  EXPECT_EQ(a.std_reward, b.std_reward);
  EXPECT_EQ(a.collisions_per_episode, b.collisions_per_episode);
  fs::remove_all(cfg.run.out_dir);
}

TEST(Evaluate, MismatchedIdsAreRefused) {
  ExperimentConfig cfg = smoke_config();
  cfg.run.out_dir = (fs::temp_directory_path() / "gcav_test_eval_mismatch").string();
  fs::remove_all(cfg.run.out_dir);
  const auto runs = train(cfg);
  ExperimentConfig other = cfg;
  other.algo.algorithm = AlgorithmId::kDoubleDqn;
  EXPECT_THROW(evaluate(runs[0].checkpoint_path, other, 1), ConfigError);
  ExperimentConfig flat = cfg;
  flat.encoder_kind = EncoderKind::kFlat;
  EXPECT_THROW(evaluate(runs[0].checkpoint_path, flat, 1), ConfigError);
  fs::remove_all(cfg.run.out_dir);
}

TEST(Checkpoint, RoundTripPreservesParameters) {
  ExperimentConfig cfg = smoke_config();
  auto agent = make_agent(cfg.algo_resolved(), EncoderKind::kGcn, 8, cfg.encoder_widths(), 5);
  Checkpoint ck;
  ck.algorithm_id = agent->algorithm_id();
  ck.encoder_id = agent->encoder_name();
  ck.params = agent->parameters();
  const auto path = (fs::temp_directory_path() / "gcav_ck_roundtrip.bin").string();
  save_checkpoint(path, ck);
  const Checkpoint loaded = load_checkpoint(path);
  EXPECT_EQ(loaded.algorithm_id, ck.algorithm_id);
  EXPECT_EQ(loaded.encoder_id, ck.encoder_id);
  ASSERT_EQ(loaded.params.size(), ck.params.size());
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    EXPECT_EQ(loaded.params[i].name, ck.params[i].name);
    EXPECT_EQ(loaded.params[i].value.shape(), ck.params[i].value.shape());
    EXPECT_EQ(loaded.params[i].value.data(), ck.params[i].value.data());
  }
  fs::remove(path);
}

TEST(Checkpoint, EncoderParameterNamesFollowTheLayout) {
  ExperimentConfig cfg = smoke_config();
  auto agent = make_agent(cfg.algo_resolved(), EncoderKind::kGcn, 8, cfg.encoder_widths(), 5);
  const auto params = agent->parameters();
  bool found = false;
  for (const auto& p : params)
    if (p.name == "encoder.layer0.weight") found = true;
  EXPECT_TRUE(found);
}
