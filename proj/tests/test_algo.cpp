#include <gtest/gtest.h>

#include <cmath>

#include "gcav/agents.hpp"
#include "test_util.hpp"

using namespace gcav;

namespace {

// Single-slot observation carrying a one-hot state; lets the agents run on
// tiny scripted MDPs through their regular graph interface.
GraphObservation one_hot_obs(int state, int num_states, int vehicle_id = 7) {
  GraphObservation obs;
  obs.m = 0;
  obs.n = 1;
  obs.feature_dim = num_states;
  obs.index = {1};
  obs.slot_to_vehicle = {vehicle_id};
  obs.node_features.assign(num_states, 0.0);
  obs.node_features[state] = 1.0;
  obs.adjacency = {1.0};
  return obs;
}

Transition make_transition(int state, int next_state, int num_states, double action, double reward,
                           bool done) {
  Transition t;
  t.obs = one_hot_obs(state, num_states);
  t.next_obs = one_hot_obs(next_state, num_states);
  t.actions = {action};
  t.reward = reward;
  t.done = done;
  t.mask = t.obs.index;
  return t;
}

}  // namespace

TEST(Act, GreedyArgmax) {
  PolicyOutput p;
  p.kind = PolicyKind::kActionValues;
  p.slots = 1;
  p.action_count = 3;
  p.values = {0.1, 0.9, 0.3};
  Rng rng(1);
  const auto a = act(p, ActMode::kTrain, {.epsilon = 0.0}, {}, rng);
  EXPECT_EQ(a[0], 1.0);
}

TEST(Act, FullEpsilonIsUniform) {
  PolicyOutput p;
  p.kind = PolicyKind::kActionValues;
  p.slots = 1;
  p.action_count = 3;
  p.values = {5.0, 1.0, 1.0};
  Rng rng(42);
  std::vector<long> counts(3, 0);
  const long draws = 10000;
  for (long i = 0; i < draws; ++i) {
    const auto a = act(p, ActMode::kTrain, {.epsilon = 1.0}, {}, rng);
    counts[static_cast<int>(a[0])]++;
  }
  const double expect = draws / 3.0;
  const double sigma = std::sqrt(draws * (1.0 / 3.0) * (2.0 / 3.0));
  for (long c : counts) EXPECT_LT(std::abs(c - expect), 3.0 * sigma);
}

TEST(Act, DeterministicClampsAtBound) {
  PolicyOutput p;
  p.kind = PolicyKind::kDeterministic;
  p.slots = 1;
  p.values = {2.9};
  // noise draw is irrelevant once the clamp at a_max = 3 engages
  Rng rng(7);
  bool hit = false;
  for (int i = 0; i < 50; ++i) {
    const auto a = act(p, ActMode::kTrain, {.noise_sigma = 0.5}, {.lo = -3.0, .hi = 3.0}, rng);
    EXPECT_LE(a[0], 3.0);
    EXPECT_GE(a[0], -3.0);
    if (a[0] == 3.0) hit = true;
  }
  EXPECT_TRUE(hit);
}

TEST(Act, NanPolicyIsDivergence) {
  PolicyOutput p;
  p.kind = PolicyKind::kActionValues;
  p.slots = 1;
  p.action_count = 2;
  p.values = {0.0, std::nan("")};
  Rng rng(1);
  EXPECT_THROW(act(p, ActMode::kEval, {}, {}, rng), DivergenceError);
}

TEST(DqnTargets, DoneCutsBootstrap) {
  Transition t = make_transition(0, 1, 3, 0.0, 2.5, true);
  const Tensor q_next = Tensor::from({9.0, 8.0}, {1, 2});
  const auto y = dqn_slot_targets(t, q_next, nullptr, 0.99);
  ASSERT_EQ(y.size(), 1u);
  EXPECT_DOUBLE_EQ(y[0], 2.5);
}

TEST(DqnTargets, ZeroGammaIsReward) {
  Transition t = make_transition(0, 1, 3, 0.0, 1.25, false);
  const Tensor q_next = Tensor::from({9.0, 8.0}, {1, 2});
  const auto y = dqn_slot_targets(t, q_next, nullptr, 0.0);
  EXPECT_DOUBLE_EQ(y[0], 1.25);
}

TEST(DqnTargets, BootstrapsMaxTargetValue) {
  Transition t = make_transition(0, 1, 3, 0.0, 1.0, false);
  const Tensor q_next = Tensor::from({3.0, 7.0}, {1, 2});
  const auto y = dqn_slot_targets(t, q_next, nullptr, 0.5);
  EXPECT_DOUBLE_EQ(y[0], 1.0 + 0.5 * 7.0);
}

TEST(DoubleDqnTargets, IdenticalNetsCoincideWithDqn) {
  Transition t = make_transition(0, 1, 3, 0.0, 1.0, false);
  const Tensor q = Tensor::from({3.0, 7.0}, {1, 2});
  const auto plain = dqn_slot_targets(t, q, nullptr, 0.9);
  const auto doubled = dqn_slot_targets(t, q, &q, 0.9);
  EXPECT_DOUBLE_EQ(plain[0], doubled[0]);
}

TEST(DoubleDqnTargets, UsesTargetValueAtOnlineArgmax) {
  Transition t = make_transition(0, 1, 3, 0.0, 0.0, false);
  const Tensor q_target = Tensor::from({3.0, 7.0}, {1, 2});
  const Tensor q_online = Tensor::from({10.0, 1.0}, {1, 2});  // online argmax = action 0
  const auto y = dqn_slot_targets(t, q_target, &q_online, 1.0);
  EXPECT_DOUBLE_EQ(y[0], 3.0);
}

TEST(DuelingCombine, EqualAdvantagesGiveValue) {
  const Tensor v = Tensor::from({2.0}, {1});
  const Tensor adv = Tensor::from({5.0, 5.0, 5.0}, {1, 3});
  const Tensor q = dueling_combine(v, adv);
  for (double x : q.data()) EXPECT_DOUBLE_EQ(x, 2.0);
}

TEST(DuelingCombine, MeanSubtractionArithmetic) {
  const Tensor v = Tensor::from({0.0}, {1});
  const Tensor adv = Tensor::from({1.0, 2.0, 3.0}, {1, 3});
  const Tensor q = dueling_combine(v, adv);
  EXPECT_DOUBLE_EQ(q.at(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(q.at(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(q.at(0, 2), 1.0);
}

TEST(DuelingCombine, ShiftInvariant) {
  const Tensor v = Tensor::from({1.5}, {1});
  const Tensor adv = Tensor::from({1.0, -2.0, 0.5}, {1, 3});
  const Tensor q1 = dueling_combine(v, adv);
  const Tensor q2 = dueling_combine(v, add_scalar(adv, 42.0));
  for (std::size_t i = 0; i < q1.size(); ++i) EXPECT_NEAR(q1.data()[i], q2.data()[i], 1e-12);
}

TEST(PerSampling, EqualPrioritiesAreUniform) {
  const std::size_t n = 16;
  PrioritizedReplay per(n, 0.6);
  for (std::size_t i = 0; i < n; ++i) per.push(make_transition(0, 1, 3, 0.0, 0.0, false));
  Rng rng(99);
  std::vector<long> counts(n, 0);
  const long draws_total = 50000;
  for (long d = 0; d < draws_total / 16; ++d) {
    const auto b = per.sample(16, 0.4, rng);
    for (std::size_t i : b.indices) counts[i]++;
    for (double w : b.weights) EXPECT_DOUBLE_EQ(w, 1.0);
  }
  // chi-square against uniform; p > 0.01 for df=15 means stat < 30.578
  const double expect = static_cast<double>(draws_total) / n;
  double stat = 0.0;
  for (long c : counts) stat += (c - expect) * (c - expect) / expect;
  EXPECT_LT(stat, 30.578);
}

TEST(PerSampling, AlphaZeroIgnoresPriorities) {
  const std::size_t n = 8;
  PrioritizedReplay per(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) per.push(make_transition(0, 1, 3, 0.0, 0.0, false));
  std::vector<std::size_t> idx{0};
  per.update_priorities(idx, {1000.0});
  const auto& tree = per.tree();
  for (std::size_t i = 0; i < n; ++i) EXPECT_DOUBLE_EQ(tree.get(i), 1.0);
}

TEST(PerSampling, ExtremePriorityDominates) {
  const std::size_t n = 16;
  PrioritizedReplay per(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) per.push(make_transition(0, 1, 3, 0.0, 0.0, false));
  std::vector<std::size_t> all(n);
  std::vector<double> prio(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  prio[3] = 1000.0;
  per.update_priorities(all, prio);
  const double mass = 1000.0 / (1000.0 + 15.0);
  Rng rng(5);
  long hits = 0;
  const long draws = 50000;
  for (long d = 0; d < draws / 8; ++d) {
    const auto b = per.sample(8, 0.4, rng);
    for (std::size_t i : b.indices) hits += i == 3 ? 1 : 0;
  }
  EXPECT_NEAR(static_cast<double>(hits) / draws, mass, 0.02 * mass + 0.01);
}

TEST(SumTree, MassLookup) {
  SumTree tree(4);
  tree.set(0, 1.0);
  tree.set(1, 2.0);
  tree.set(2, 3.0);
  tree.set(3, 4.0);
  EXPECT_DOUBLE_EQ(tree.total(), 10.0);
  EXPECT_EQ(tree.sample(0.5), 0u);
  EXPECT_EQ(tree.sample(1.5), 1u);
  EXPECT_EQ(tree.sample(9.99), 3u);
}

TEST(Returns, GeometricSums) {
  EXPECT_EQ(returns_to_go({1.0, 1.0, 1.0}, 0.0), (std::vector<double>{1.0, 1.0, 1.0}));
  const auto g = returns_to_go({1.0, 1.0, 1.0}, 0.5);
  EXPECT_DOUBLE_EQ(g[0], 1.75);
  EXPECT_DOUBLE_EQ(g[1], 1.5);
  EXPECT_DOUBLE_EQ(g[2], 1.0);
}

TEST(Gae, LambdaOneIsDiscountedMonteCarlo) {
  const std::vector<double> rewards{1.0, 2.0, 3.0};
  const std::vector<double> values{0.3, -0.2, 0.7};
  const double gamma = 0.9;
  const auto adv = gae_advantages(rewards, values, 0.0, gamma, 1.0);
  const auto g = returns_to_go(rewards, gamma);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(adv[i], g[i] - values[i], 1e-12);
}

TEST(Gae, ManualThreeStepUnroll) {
  const std::vector<double> rewards{1.0, 0.5, -0.25};
  const std::vector<double> values{0.1, 0.2, 0.3};
  const double gamma = 0.9, lambda = 0.8, bootstrap = 0.4;
  const auto adv = gae_advantages(rewards, values, bootstrap, gamma, lambda);
  const double d2 = -0.25 + gamma * bootstrap - 0.3;
  const double d1 = 0.5 + gamma * 0.3 - 0.2;
  const double d0 = 1.0 + gamma * 0.2 - 0.1;
  EXPECT_NEAR(adv[2], d2, 1e-12);
  EXPECT_NEAR(adv[1], d1 + gamma * lambda * d2, 1e-12);
  EXPECT_NEAR(adv[0], d0 + gamma * lambda * (d1 + gamma * lambda * d2), 1e-12);
}

TEST(ReinforceNormalization, CenteredReturnsGiveZeroGradient) {
  AlgoConfig cfg;
  cfg.algorithm = AlgorithmId::kReinforce;
  cfg.action_count = 2;
  cfg.gamma = 0.5;
  cfg.normalize_returns = true;
  PolicyGradientAgent agent(cfg, EncoderKind::kFlat, 3, {8, 8}, 11);
  // rewards chosen so every return-to-go equals 2; normalization zeroes them
  ParamList params = agent.parameters();
  std::vector<std::vector<double>> snapshot;
  for (const auto& p : params) snapshot.push_back(p.value.data());
  const double rewards[4] = {1.0, 1.0, 1.0, 2.0};
  for (int t = 0; t < 4; ++t)
    agent.observe(make_transition(t % 3, (t + 1) % 3, 3, 0.0, rewards[t], t == 3));
  params = agent.parameters();
  for (std::size_t i = 0; i < params.size(); ++i)
    for (std::size_t k = 0; k < params[i].value.size(); ++k)
      EXPECT_EQ(params[i].value.data()[k], snapshot[i][k]) << params[i].name;
}

TEST(ActorCritic, CriticSquaredError) {
  // critic loss on (V=1, G=3) -> 4
  const Tensor v = Tensor::from({1.0}, {1});
  const Tensor loss = square(add_scalar(v, -3.0));
  EXPECT_DOUBLE_EQ(loss.value(), 4.0);
}

TEST(Td3, StepNotDivisibleByDelayLeavesActorUnchanged) {
  AlgoConfig cfg;
  cfg.algorithm = AlgorithmId::kTd3;
  cfg.continuous = true;
  cfg.batch_size = 4;
  cfg.warmup = 4;
  cfg.update_every = 1;
  cfg.td3_delay = 1000000;  // actor effectively frozen
  DeterministicAgent agent(cfg, EncoderKind::kFlat, 3, {8, 8}, 21);
  std::vector<std::vector<double>> snapshot;
  for (const auto& p : agent.actor_params()) snapshot.push_back(p.value.data());
  Rng rng(3);
  for (int t = 0; t < 12; ++t) {
    Transition tr = make_transition(t % 3, (t + 1) % 3, 3, rng.uniform(-3.0, 3.0),
                                    rng.uniform(-1.0, 1.0), false);
    agent.observe(tr);
  }
  EXPECT_GT(agent.updates(), 0);
  const auto& params = agent.actor_params();
  for (std::size_t i = 0; i < params.size(); ++i)
    for (std::size_t k = 0; k < params[i].value.size(); ++k)
      EXPECT_EQ(params[i].value.data()[k], snapshot[i][k]);
}

TEST(Td3, TwinCoincidenceMatchesDdpgTarget) {
  AlgoConfig ddpg_cfg;
  ddpg_cfg.algorithm = AlgorithmId::kDdpg;
  ddpg_cfg.continuous = true;
  AlgoConfig td3_cfg = ddpg_cfg;
  td3_cfg.algorithm = AlgorithmId::kTd3;
  td3_cfg.td3_target_noise = 0.0;  // no smoothing: twin-min of equal critics = DDPG
  const std::uint64_t seed = 5;
  DeterministicAgent ddpg(ddpg_cfg, EncoderKind::kFlat, 3, {6, 6}, seed);
  DeterministicAgent td3(td3_cfg, EncoderKind::kFlat, 3, {6, 6}, seed);
  // same init stream: actor and critic1 coincide; copy critic1 into critic2
  ParamList td3_params = td3.parameters();
  ParamList c1, c2;
  for (auto& p : td3_params) {
    if (p.name.rfind("critic1", 0) == 0) c1.push_back(p);
    if (p.name.rfind("critic2", 0) == 0) c2.push_back(p);
    if (p.name.rfind("target.critic1", 0) == 0) c1.push_back(p);
    if (p.name.rfind("target.critic2", 0) == 0) c2.push_back(p);
  }
  ASSERT_EQ(c1.size(), c2.size());
  for (std::size_t i = 0; i < c1.size(); ++i) c2[i].value.data() = c1[i].value.data();

  Transition t = make_transition(0, 1, 3, 0.5, 1.0, false);
  const auto y_ddpg = ddpg.slot_targets(t);
  const auto y_td3 = td3.slot_targets(t);
  ASSERT_EQ(y_ddpg.size(), y_td3.size());
  for (std::size_t i = 0; i < y_ddpg.size(); ++i) EXPECT_NEAR(y_ddpg[i], y_td3[i], 1e-12);
}

TEST(Td3, NoiseClipBoundsPerturbation) {
  const double c = 0.5;
  const double noise = 10.0;
  EXPECT_DOUBLE_EQ(std::clamp(noise, -c, c), 0.5);
}

TEST(SoftUpdates, TauOneCopiesAndTauZeroFreezes) {
  AlgoConfig cfg;
  cfg.algorithm = AlgorithmId::kDdpg;
  cfg.continuous = true;
  DeterministicAgent agent(cfg, EncoderKind::kFlat, 3, {6, 6}, 9);
  // drift the online actor away from the targets
  ParamList actor = agent.parameters();
  for (auto& p : actor)
    if (p.name.rfind("actor", 0) == 0)
      for (auto& x : p.value.data()) x += 1.0;

  auto diff_norm = [&] {
    double acc = 0.0;
    ParamList all = agent.parameters();
    for (auto& p : all) {
      if (p.name.rfind("actor", 0) != 0) continue;
      for (auto& q : all) {
        if (q.name != "target." + p.name) continue;
        for (std::size_t i = 0; i < p.value.size(); ++i)
          acc += std::abs(p.value.data()[i] - q.value.data()[i]);
      }
    }
    return acc;
  };
  const double d0 = diff_norm();
  EXPECT_GT(d0, 0.0);
  agent.force_soft_update(0.0);  // frozen
  EXPECT_DOUBLE_EQ(diff_norm(), d0);
  agent.force_soft_update(1.0);  // hard copy
  EXPECT_NEAR(diff_norm(), 0.0, 1e-15);
}

TEST(Masking, DeadSlotPerturbationsLeaveLossBitwiseIdentical) {
  AlgoConfig cfg;
  cfg.algorithm = AlgorithmId::kDqn;
  cfg.action_count = 3;
  ValueAgent agent(cfg, EncoderKind::kGcn, 4, {8, 8}, 17);
  Rng rng(23);
  GraphObservation obs = test::random_observation(rng, 3, 3, 4);
  GraphObservation next = test::random_observation(rng, 3, 3, 4);
  Transition t;
  t.obs = obs;
  t.next_obs = next;
  t.actions.assign(6, 1.0);
  t.reward = 0.5;
  t.done = false;
  t.mask = obs.index;
  if (t.acting_slots().empty()) GTEST_SKIP() << "no acting AV slot in this draw";

  const Tensor base = agent.loss_on_batch({&t}, {1.0});
  Transition poked = t;
  bool any_dead = false;
  for (int s = 0; s < poked.obs.slots(); ++s) {
    if (poked.obs.occupied(s)) continue;
    any_dead = true;
    for (int f = 0; f < poked.obs.feature_dim; ++f)
      poked.obs.node_features[s * poked.obs.feature_dim + f] = 123.456;
    poked.actions[s] = 2.0;  // dead-slot action must also be ignored
  }
  if (!any_dead) GTEST_SKIP() << "all slots occupied in this draw";
  const Tensor poked_loss = agent.loss_on_batch({&poked}, {1.0});
  EXPECT_EQ(base.value(), poked_loss.value());
}
