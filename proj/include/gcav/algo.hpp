#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "gcav/common.hpp"
#include "gcav/replay.hpp"
#include "gcav/tensor.hpp"

namespace gcav {

enum class AlgorithmId {
  kDqn,
  kDoubleDqn,
  kDuelingDqn,
  kDqnPer,
  kReinforce,
  kAc,
  kA2c,
  kPpo,
  kDdpg,
  kTd3,
};

inline const std::vector<std::pair<AlgorithmId, const char*>>& algorithm_table() {
  static const std::vector<std::pair<AlgorithmId, const char*>> table = {
      {AlgorithmId::kDqn, "dqn"},           {AlgorithmId::kDoubleDqn, "double_dqn"},
      {AlgorithmId::kDuelingDqn, "dueling_dqn"}, {AlgorithmId::kDqnPer, "dqn_per"},
      {AlgorithmId::kReinforce, "reinforce"},    {AlgorithmId::kAc, "ac"},
      {AlgorithmId::kA2c, "a2c"},                {AlgorithmId::kPpo, "ppo"},
      {AlgorithmId::kDdpg, "ddpg"},              {AlgorithmId::kTd3, "td3"},
  };
  return table;
}

inline std::string to_string(AlgorithmId id) {
  for (const auto& [a, name] : algorithm_table())
    if (a == id) return name;
  return "?";
}

inline std::optional<AlgorithmId> algorithm_from_string(const std::string& s) {
  for (const auto& [a, name] : algorithm_table())
    if (s == name) return a;
  return std::nullopt;
}

inline bool algorithm_is_value_based(AlgorithmId id) {
  return id == AlgorithmId::kDqn || id == AlgorithmId::kDoubleDqn ||
         id == AlgorithmId::kDuelingDqn || id == AlgorithmId::kDqnPer;
}

// Value-based methods emit discrete lane commands only; DDPG/TD3 emit
// accelerations only; the remaining policy-gradient methods handle both.
inline bool algorithm_requires_continuous(AlgorithmId id) {
  return id == AlgorithmId::kDdpg || id == AlgorithmId::kTd3;
}
inline bool algorithm_supports_continuous(AlgorithmId id) {
  return !algorithm_is_value_based(id);
}

struct AlgoConfig {
  AlgorithmId algorithm = AlgorithmId::kDqn;
  double gamma = 0.99;
  double lr = 1e-3;
  int batch_size = 64;
  int replay_capacity = 20000;
  int warmup = 500;      // transitions stored before learning starts
  int update_every = 2;  // decisions between gradient updates (off-policy)
  int target_update_period = 200;
  double tau = 0.005;
  double eps_start = 1.0;
  double eps_end = 0.05;
  double eps_fraction = 0.3;  // share of training over which epsilon decays
  double per_alpha = 0.6;
  double per_beta = 0.4;
  double ppo_clip = 0.2;
  int ppo_epochs = 4;
  double gae_lambda = 0.95;
  int a2c_nsteps = 8;
  double entropy_coef = 0.01;
  double action_noise = 0.3;  // exploration noise (m/s^2) for DDPG/TD3
  int td3_delay = 2;
  double td3_target_noise = 0.2;
  double td3_noise_clip = 0.5;
  double grad_clip_norm = 10.0;
  bool normalize_returns = true;  // REINFORCE per-episode return normalization

  int action_count = 3;      // discrete branch
  bool continuous = false;   // action-space kind
  double a_min = -3.0;
  double a_max = 3.0;
  long total_decisions_hint = 10000;  // scales the epsilon schedule

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("algorithm.gamma: must be in (0, 1]");
    if (lr <= 0.0) throw ConfigError("algorithm.lr: must be positive");
    if (batch_size <= 0) throw ConfigError("algorithm.batch_size: must be positive");
    if (replay_capacity <= 0) throw ConfigError("algorithm.replay_capacity: must be positive");
    if (update_every <= 0) throw ConfigError("algorithm.update_every: must be positive");
    if (ppo_epochs <= 0) throw ConfigError("algorithm.ppo_epochs: must be positive");
    if (a2c_nsteps <= 0) throw ConfigError("algorithm.a2c_nsteps: must be positive");
    if (td3_delay <= 0) throw ConfigError("algorithm.td3_delay: must be positive");
    if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0))
      throw ConfigError("algorithm.gae_lambda: must be in [0, 1]");
    if (algorithm_requires_continuous(algorithm) && !continuous)
      throw ConfigError("algorithm: " + to_string(algorithm) + " needs a continuous action space");
    if (continuous && !algorithm_supports_continuous(algorithm))
      throw ConfigError("algorithm: " + to_string(algorithm) + " only supports discrete actions");
  }

  double epsilon_at(long decision) const {
    const double span = eps_fraction * static_cast<double>(total_decisions_hint);
    if (span <= 0.0) return eps_end;
    const double f = std::min(1.0, static_cast<double>(decision) / span);
    return eps_start + (eps_end - eps_start) * f;
  }
};

// Q = V + A - mean_a(A), per slot.
inline Tensor dueling_combine(const Tensor& value, const Tensor& advantage) {
  if (value.rank() != 1 || advantage.rank() != 2 || value.shape()[0] != advantage.rows())
    throw ShapeError("dueling_combine: shapes " + shape_str(value.shape()) + " and " +
                     shape_str(advantage.shape()));
  return add_col(sub_col(advantage, mean_cols(advantage)), value);
}

// G_t = sum_{k>=t} gamma^{k-t} r_k.
inline std::vector<double> returns_to_go(const std::vector<double>& rewards, double gamma) {
  std::vector<double> g(rewards.size(), 0.0);
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    g[i] = acc;
  }
  return g;
}

// Zero-mean, unit-variance in place; a near-constant vector is centered only.
inline void normalize_inplace(std::vector<double>& v) {
  if (v.empty()) return;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  const double sd = std::sqrt(var);
  for (double& x : v) x = sd > 1e-8 ? (x - mean) / sd : x - mean;
}

// GAE(lambda): A_t = delta_t + gamma*lambda*A_{t+1},
// delta_t = r_t + gamma*V_{t+1} - V_t, bootstrapping V_T = bootstrap.
inline std::vector<double> gae_advantages(const std::vector<double>& rewards,
                                          const std::vector<double>& values, double bootstrap,
                                          double gamma, double lambda) {
  require(rewards.size() == values.size(), "gae: rewards/values size mismatch");
  std::vector<double> adv(rewards.size(), 0.0);
  double next_adv = 0.0;
  double next_value = bootstrap;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    const double delta = rewards[i] + gamma * next_value - values[i];
    next_adv = delta + gamma * lambda * next_adv;
    adv[i] = next_adv;
    next_value = values[i];
  }
  return adv;
}

// Per-acting-slot TD targets for one transition:
//   y = r                                          on done
//   y = r + gamma * max_a Q_target(s', a)          (DQN)
//   y = r + gamma * Q_target(s', argmax_a Q_online(s', a))  (double DQN)
// A slot whose vehicle is gone in s' bootstraps to zero.
inline std::vector<double> dqn_slot_targets(const Transition& t, const Tensor& q_next_target,
                                            const Tensor* q_next_online, double gamma) {
  const auto slots = t.acting_slots();
  std::vector<double> y(slots.size(), t.reward);
  if (t.done || gamma == 0.0) return y;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const int s = slots[k];
    const bool same_vehicle = t.next_obs.occupied(s) &&
                              t.next_obs.slot_to_vehicle[s] == t.obs.slot_to_vehicle[s];
    if (!same_vehicle) continue;  // exited: terminal for this agent
    const std::size_t cols = q_next_target.cols();
    std::size_t best = 0;
    if (q_next_online) {
      for (std::size_t c = 1; c < cols; ++c)
        if (q_next_online->at(s, c) > q_next_online->at(s, best)) best = c;
    } else {
      for (std::size_t c = 1; c < cols; ++c)
        if (q_next_target.at(s, c) > q_next_target.at(s, best)) best = c;
    }
    y[k] += gamma * q_next_target.at(s, best);
  }
  return y;
}

}  // namespace gcav
