#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gcav/algo.hpp"
#include "gcav/encoder.hpp"
#include "gcav/optim.hpp"
#include "gcav/policy.hpp"
#include "gcav/replay.hpp"

namespace gcav {

struct Dense {
  Tensor w, b;

  static Dense create(std::size_t in, std::size_t out, Rng& rng) {
    Dense d;
    d.w = Tensor::glorot(in, out, rng);
    d.b = Tensor::zeros({out});
    d.b.set_requires_grad(true);
    return d;
  }

  Tensor forward(const Tensor& x) const { return add_rowvec(matmul(x, w), b); }

  Dense frozen() const { return Dense{w.detach(), b.detach()}; }

  void collect(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".weight", w});
    out.push_back({prefix + ".bias", b});
  }
};

inline Encoder frozen_copy(const Encoder& e) {
  Encoder c = e;
  for (auto& layer : c.mutable_layers()) {
    layer.weight = layer.weight.detach();
    layer.bias = layer.bias.detach();
  }
  return c;
}

inline void hard_update(ParamList& target, const ParamList& online) {
  require(target.size() == online.size(), "hard_update: parameter lists differ");
  for (std::size_t i = 0; i < target.size(); ++i)
    target[i].value.data() = online[i].value.data();
}

inline void soft_update(ParamList& target, const ParamList& online, double tau) {
  require(target.size() == online.size(), "soft_update: parameter lists differ");
  for (std::size_t i = 0; i < target.size(); ++i) {
    auto& t = target[i].value.data();
    const auto& o = online[i].value.data();
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = tau * o[k] + (1.0 - tau) * t[k];
  }
}

// log N(a; mean, exp(log_std)) per element.
inline Tensor gaussian_log_prob(const Tensor& mean, const Tensor& log_std, const Tensor& actions) {
  const Tensor z = mul_scalar_tensor(sub(actions, mean), vexp(neg(log_std)));
  return add_scalar(add_scalar_tensor(mul_scalar(square(z), -0.5), neg(log_std)),
                    -0.5 * std::log(2.0 * 3.14159265358979323846));
}

// Policy head over slot embeddings: Q/logit rows, a tanh-squashed mean for
// continuous actions, plus a state-independent log-std for stochastic ones.
struct ActorNet {
  Encoder encoder;
  Dense head;
  Tensor log_std;  // continuous stochastic policies only
  bool continuous = false;
  double a_max = 3.0;

  static ActorNet create(EncoderKind kind, int feature_dim, const std::vector<int>& widths,
                         int action_count, bool continuous, double a_max, Rng& rng) {
    ActorNet a;
    a.encoder = Encoder::create(kind, feature_dim, widths, rng);
    a.head = Dense::create(a.encoder.out_dim(), continuous ? 1 : action_count, rng);
    a.continuous = continuous;
    a.a_max = a_max;
    a.log_std = Tensor::scalar(std::log(0.5 * a_max));
    a.log_std.set_requires_grad(true);
    return a;
  }

  // [S x A] action logits (discrete).
  Tensor logits(const GraphObservation& obs) const { return head.forward(encoder.forward(obs)); }

  // [S] squashed mean action (continuous).
  Tensor mean_action(const GraphObservation& obs) const {
    const std::size_t s = static_cast<std::size_t>(obs.slots());
    return mul_scalar(vtanh(reshape(head.forward(encoder.forward(obs)), {s})), a_max);
  }

  ActorNet frozen() const {
    ActorNet a;
    a.encoder = frozen_copy(encoder);
    a.head = head.frozen();
    a.log_std = log_std.detach();
    a.continuous = continuous;
    a.a_max = a_max;
    return a;
  }

  void collect(const std::string& prefix, ParamList& out, bool with_log_std) {
    encoder.collect_params(prefix + ".encoder", out);
    head.collect(prefix + ".head", out);
    if (with_log_std) out.push_back({prefix + ".log_std", log_std});
  }
};

// Centralized state value: pooled slot embedding -> small MLP -> scalar.
struct ValueNet {
  Encoder encoder;
  Dense hidden;
  Dense out;

  static ValueNet create(EncoderKind kind, int feature_dim, const std::vector<int>& widths,
                         Rng& rng) {
    ValueNet v;
    v.encoder = Encoder::create(kind, feature_dim, widths, rng);
    v.hidden = Dense::create(v.encoder.out_dim(), 32, rng);
    v.out = Dense::create(32, 1, rng);
    return v;
  }

  // [1] state value.
  Tensor value(const GraphObservation& obs) const {
    const Tensor pooled = pool_global(encoder.forward(obs), obs.occupied_slots());
    return reshape(out.forward(relu(hidden.forward(pooled))), {1});
  }

  void collect(const std::string& prefix, ParamList& out_params) {
    encoder.collect_params(prefix + ".encoder", out_params);
    hidden.collect(prefix + ".hidden", out_params);
    out.collect(prefix + ".out", out_params);
  }
};

// Per-slot action-value critic for deterministic policies: Q(z_i, a_i)
// with shared parameters across slots.
struct ActionCriticNet {
  Encoder encoder;
  Dense hidden;
  Dense out;

  static ActionCriticNet create(EncoderKind kind, int feature_dim, const std::vector<int>& widths,
                                Rng& rng) {
    ActionCriticNet c;
    c.encoder = Encoder::create(kind, feature_dim, widths, rng);
    c.hidden = Dense::create(c.encoder.out_dim() + 1, 32, rng);
    c.out = Dense::create(32, 1, rng);
    return c;
  }

  // [S] per-slot Q values for the given per-slot actions.
  Tensor q_values(const GraphObservation& obs, const Tensor& actions_col) const {
    const Tensor z = encoder.forward(obs);
    const Tensor x = concat_cols(z, actions_col);
    return reshape(out.forward(relu(hidden.forward(x))), {static_cast<std::size_t>(obs.slots())});
  }

  ActionCriticNet frozen() const {
    ActionCriticNet c;
    c.encoder = frozen_copy(encoder);
    c.hidden = hidden.frozen();
    c.out = out.frozen();
    return c;
  }

  void collect(const std::string& prefix, ParamList& out_params) {
    encoder.collect_params(prefix + ".encoder", out_params);
    hidden.collect(prefix + ".hidden", out_params);
    out.collect(prefix + ".out", out_params);
  }
};

// Driving-policy learner over graph observations. One instance per run,
// single-threaded; all randomness comes from named streams of the root seed.
class Agent {
 public:
  Agent(AlgoConfig cfg, EncoderKind kind, std::uint64_t root_seed)
      : cfg_(std::move(cfg)),
        kind_(kind),
        init_rng_(named_stream(root_seed, "init")),
        explore_rng_(named_stream(root_seed, "exploration")),
        replay_rng_(named_stream(root_seed, "replay")) {
    cfg_.validate();
  }
  virtual ~Agent() = default;

  const AlgoConfig& config() const { return cfg_; }
  std::string algorithm_id() const { return to_string(cfg_.algorithm); }
  std::string encoder_name() const { return encoder_id(kind_); }
  long updates() const { return updates_; }
  long decisions() const { return decisions_; }

  virtual PolicyOutput policy(const GraphObservation& obs) = 0;

  std::vector<double> act(const GraphObservation& obs, ActMode mode) {
    const PolicyOutput p = policy(obs);
    ExplorationParams ex;
    ex.epsilon = cfg_.epsilon_at(decisions_);
    ex.noise_sigma = cfg_.action_noise;
    if (mode == ActMode::kTrain) ++decisions_;
    return gcav::act(p, mode, ex, ActionBounds{cfg_.a_min, cfg_.a_max}, explore_rng_);
  }

  // Training-time experience; agents update on their own schedule.
  virtual void observe(const Transition& t) = 0;
  // Flushes episodic algorithms at the horizon.
  virtual void end_episode() {}

  // Named parameters (including target networks), stable order.
  virtual ParamList parameters() = 0;

  void load_parameters(const ParamList& saved) {
    ParamList mine = parameters();
    require(saved.size() == mine.size(), "load_parameters: parameter count mismatch");
    for (auto& p : mine) {
      bool found = false;
      for (const auto& s : saved) {
        if (s.name != p.name) continue;
        require(s.value.shape() == p.value.shape(), "load_parameters: shape mismatch for " + p.name);
        p.value.data() = s.value.data();
        found = true;
        break;
      }
      require(found, "load_parameters: missing parameter " + p.name);
    }
  }

 protected:
  double check_finite(double loss) const {
    if (std::isnan(loss) || std::isinf(loss)) throw DivergenceError("training loss diverged");
    return loss;
  }

  // Constant per-slot action column for critic inputs.
  static Tensor actions_column(const std::vector<double>& actions) {
    return Tensor::from(actions, {actions.size(), 1});
  }

  AlgoConfig cfg_;
  EncoderKind kind_;
  Rng init_rng_, explore_rng_, replay_rng_;
  long decisions_ = 0;
  long updates_ = 0;
};

// ---------------------------------------------------------------------------
// Value-based family: DQN, double DQN, dueling DQN, DQN+PER.
// One shared Q head applied per slot; the team reward trains every slot.
class ValueAgent : public Agent {
 public:
  ValueAgent(const AlgoConfig& cfg, EncoderKind kind, int feature_dim,
             const std::vector<int>& widths, std::uint64_t root_seed)
      : Agent(cfg, kind, root_seed) {
    require(!cfg_.continuous, "value-based agents need a discrete action space");
    dueling_ = cfg_.algorithm == AlgorithmId::kDuelingDqn;
    encoder_ = Encoder::create(kind, feature_dim, widths, init_rng_);
    const int h = encoder_.out_dim();
    if (dueling_) {
      v_head_ = Dense::create(h, 1, init_rng_);
      a_head_ = Dense::create(h, cfg_.action_count, init_rng_);
    } else {
      q_head_ = Dense::create(h, cfg_.action_count, init_rng_);
    }
    rebuild_targets();
    collect_online(online_params_);
    collect_target(target_params_);
    optimizer_.emplace(OptimizerKind::kAdam, cfg_.lr, online_params_);
    if (cfg_.algorithm == AlgorithmId::kDqnPer)
      per_.emplace(cfg_.replay_capacity, cfg_.per_alpha);
    else
      buffer_.emplace(cfg_.replay_capacity);
  }

  Tensor q_matrix(const GraphObservation& obs, bool use_target = false) const {
    const Encoder& enc = use_target ? target_encoder_ : encoder_;
    const Tensor z = enc.forward(obs);
    if (dueling_) {
      const Dense& vh = use_target ? target_v_head_ : v_head_;
      const Dense& ah = use_target ? target_a_head_ : a_head_;
      return dueling_combine(reshape(vh.forward(z), {z.rows()}), ah.forward(z));
    }
    return (use_target ? target_q_head_ : q_head_).forward(z);
  }

  PolicyOutput policy(const GraphObservation& obs) override {
    const Tensor q = q_matrix(obs);
    PolicyOutput p;
    p.kind = PolicyKind::kActionValues;
    p.slots = obs.slots();
    p.action_count = cfg_.action_count;
    p.values = q.data();
    return p;
  }

  void observe(const Transition& t) override {
    if (per_)
      per_->push(t);
    else
      buffer_->push(t);
    ++observed_;
    const std::size_t stored = per_ ? per_->size() : buffer_->size();
    const std::size_t need = std::max<std::size_t>(cfg_.batch_size, cfg_.warmup);
    if (stored >= need && observed_ % cfg_.update_every == 0) update();
  }

  // Squared TD error averaged over acting slots, then over the batch;
  // exposed for the gradient suite and the tabular oracle tests.
  Tensor loss_on_batch(const std::vector<const Transition*>& batch,
                       const std::vector<double>& is_weights,
                       std::vector<double>* sample_tds = nullptr) {
    Tensor total = Tensor::scalar(0.0);
    int contributing = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Transition& t = *batch[i];
      const auto slots = t.acting_slots();
      if (slots.empty()) {
        if (sample_tds) sample_tds->push_back(0.0);
        continue;
      }
      ++contributing;
      const Tensor q_next_t = q_matrix(t.next_obs, true);
      std::optional<Tensor> q_next_o;
      if (cfg_.algorithm == AlgorithmId::kDoubleDqn) q_next_o = q_matrix(t.next_obs, false);
      const auto y = dqn_slot_targets(t, q_next_t, q_next_o ? &*q_next_o : nullptr, cfg_.gamma);

      std::vector<int> act_idx(slots.size());
      for (std::size_t k = 0; k < slots.size(); ++k)
        act_idx[k] = static_cast<int>(t.actions[slots[k]]);
      const Tensor q = q_matrix(t.obs, false);
      const Tensor q_sel = gather_rows(select_rows(q, slots), act_idx);
      const Tensor err = sub(q_sel, Tensor::from(y, {y.size()}));
      if (sample_tds) {
        double acc = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) acc += std::abs(err.data()[k]);
        sample_tds->push_back(acc / static_cast<double>(y.size()));
      }
      total = add(total, mul_scalar(mean(square(err)), is_weights[i]));
    }
    return mul_scalar(total, 1.0 / std::max(contributing, 1));
  }

  void update() {
    std::vector<const Transition*> batch;
    std::vector<std::size_t> indices;
    std::vector<double> weights;
    if (per_) {
      const PerBatch pb = per_->sample(cfg_.batch_size, cfg_.per_beta, replay_rng_);
      indices = pb.indices;
      weights = pb.weights;
      for (std::size_t i : indices) batch.push_back(&per_->get(i));
    } else {
      indices = buffer_->sample_uniform(cfg_.batch_size, replay_rng_);
      weights.assign(indices.size(), 1.0);
      for (std::size_t i : indices) batch.push_back(&buffer_->get(i));
    }
    std::vector<double> tds;
    const Tensor loss = loss_on_batch(batch, weights, &tds);
    if (!loss.requires_grad()) return;  // nothing acted in this batch
    check_finite(loss.value());
    zero_grads(online_params_);
    backward(loss);
    clip_grad_norm(online_params_, cfg_.grad_clip_norm);
    optimizer_->step(online_params_);
    ++updates_;
    if (updates_ % cfg_.target_update_period == 0) hard_update(target_params_, online_params_);
    if (per_) per_->update_priorities(indices, tds);
  }

  ParamList parameters() override {
    ParamList all;
    collect_online(all);
    collect_target(all);
    return all;
  }

  void sync_targets() { hard_update(target_params_, online_params_); }

 private:
  void rebuild_targets() {
    target_encoder_ = frozen_copy(encoder_);
    if (dueling_) {
      target_v_head_ = v_head_.frozen();
      target_a_head_ = a_head_.frozen();
    } else {
      target_q_head_ = q_head_.frozen();
    }
  }

  void collect_online(ParamList& out) {
    encoder_.collect_params("encoder", out);
    if (dueling_) {
      v_head_.collect("value_head", out);
      a_head_.collect("advantage_head", out);
    } else {
      q_head_.collect("q_head", out);
    }
  }

  void collect_target(ParamList& out) {
    target_encoder_.collect_params("target.encoder", out);
    if (dueling_) {
      target_v_head_.collect("target.value_head", out);
      target_a_head_.collect("target.advantage_head", out);
    } else {
      target_q_head_.collect("target.q_head", out);
    }
  }

  bool dueling_ = false;
  Encoder encoder_, target_encoder_;
  Dense q_head_, target_q_head_;
  Dense v_head_, target_v_head_;
  Dense a_head_, target_a_head_;
  ParamList online_params_, target_params_;
  std::optional<Optimizer> optimizer_;
  std::optional<ReplayBuffer> buffer_;
  std::optional<PrioritizedReplay> per_;
  long observed_ = 0;
};

// ---------------------------------------------------------------------------
// Stochastic policy-gradient family: REINFORCE, AC, A2C, PPO.
class PolicyGradientAgent : public Agent {
 public:
  PolicyGradientAgent(const AlgoConfig& cfg, EncoderKind kind, int feature_dim,
                      const std::vector<int>& widths, std::uint64_t root_seed)
      : Agent(cfg, kind, root_seed) {
    actor_ = ActorNet::create(kind, feature_dim, widths, cfg_.action_count, cfg_.continuous,
                              cfg_.a_max, init_rng_);
    if (cfg_.algorithm != AlgorithmId::kReinforce)
      critic_ = ValueNet::create(kind, feature_dim, widths, init_rng_);
    collect(params_);
    optimizer_.emplace(OptimizerKind::kAdam, cfg_.lr, params_);
  }

  PolicyOutput policy(const GraphObservation& obs) override {
    PolicyOutput p;
    p.slots = obs.slots();
    if (cfg_.continuous) {
      p.kind = PolicyKind::kGaussian;
      p.values = actor_.mean_action(obs).data();
      p.stddev = std::exp(actor_.log_std.value());
    } else {
      p.kind = PolicyKind::kCategorical;
      p.action_count = cfg_.action_count;
      p.values = vexp(log_softmax(actor_.logits(obs))).data();
    }
    return p;
  }

  void observe(const Transition& t) override {
    rollout_.push_back(t);
    switch (cfg_.algorithm) {
      case AlgorithmId::kAc:
        update_actor_critic(1);
        break;
      case AlgorithmId::kA2c:
        if (static_cast<int>(rollout_.size()) >= cfg_.a2c_nsteps || t.done)
          update_actor_critic(cfg_.a2c_nsteps);
        break;
      case AlgorithmId::kReinforce:
        if (t.done) update_reinforce();
        break;
      case AlgorithmId::kPpo:
        if (t.done) update_ppo();
        break;
      default:
        throw ContractViolation("policy-gradient agent got a value-based algorithm id");
    }
  }

  void end_episode() override {
    if (rollout_.empty()) return;
    switch (cfg_.algorithm) {
      case AlgorithmId::kAc:
        rollout_.clear();
        break;
      case AlgorithmId::kA2c:
        update_actor_critic(cfg_.a2c_nsteps);
        break;
      case AlgorithmId::kReinforce:
        update_reinforce();
        break;
      case AlgorithmId::kPpo:
        update_ppo();
        break;
      default:
        break;
    }
  }

  ParamList parameters() override {
    ParamList all;
    collect(all);
    return all;
  }

  // log pi(a|s) for the acting slots, as a [k] tensor on the tape.
  Tensor log_probs(const Transition& t) const {
    const auto slots = t.acting_slots();
    if (cfg_.continuous) {
      const Tensor mean = actor_.mean_action(t.obs);
      const std::size_t s = static_cast<std::size_t>(t.obs.slots());
      const Tensor mean_sel = reshape(select_rows(reshape(mean, {s, 1}), slots), {slots.size()});
      std::vector<double> acts(slots.size());
      for (std::size_t k = 0; k < slots.size(); ++k) acts[k] = t.actions[slots[k]];
      return gaussian_log_prob(mean_sel, actor_.log_std, Tensor::from(acts, {acts.size()}));
    }
    const Tensor lsm = log_softmax(actor_.logits(t.obs));
    std::vector<int> act_idx(slots.size());
    for (std::size_t k = 0; k < slots.size(); ++k) act_idx[k] = static_cast<int>(t.actions[slots[k]]);
    return gather_rows(select_rows(lsm, slots), act_idx);
  }

  // Mean policy entropy over acting slots, as a scalar tensor.
  Tensor entropy(const Transition& t) const {
    if (cfg_.continuous)
      return add_scalar(actor_.log_std, 0.5 * std::log(2.0 * 3.14159265358979323846 * std::exp(1.0)));
    const auto slots = t.acting_slots();
    const Tensor lsm = select_rows(log_softmax(actor_.logits(t.obs)), slots);
    return mul_scalar(sum(mul(vexp(lsm), lsm)), -1.0 / static_cast<double>(std::max<std::size_t>(slots.size(), 1)));
  }

  // REINFORCE: loss = -mean_t (G_t / k_t) * sum_slots log pi, with optional
  // per-episode return normalization.
  void update_reinforce() {
    std::vector<double> rewards;
    for (const auto& t : rollout_) rewards.push_back(t.reward);
    std::vector<double> g = returns_to_go(rewards, cfg_.gamma);
    if (cfg_.normalize_returns) normalize_inplace(g);
    Tensor acc = Tensor::scalar(0.0);
    int terms = 0;
    for (std::size_t i = 0; i < rollout_.size(); ++i) {
      const auto slots = rollout_[i].acting_slots();
      if (slots.empty()) continue;
      ++terms;
      acc = add(acc, mul_scalar(sum(log_probs(rollout_[i])), g[i] / static_cast<double>(slots.size())));
    }
    rollout_.clear();
    if (terms == 0) return;
    step_loss(mul_scalar(acc, -1.0 / static_cast<double>(terms)));
  }

  // AC uses the one-step TD target as the actor weight (no baseline);
  // A2C uses n-step returns with the value baseline subtracted.
  void update_actor_critic(int nsteps) {
    (void)nsteps;
    if (rollout_.empty()) return;
    const std::size_t n = rollout_.size();
    const bool a2c = cfg_.algorithm == AlgorithmId::kA2c;
    // bootstrap from the value of the last next-observation
    double bootstrap = 0.0;
    if (!rollout_.back().done) bootstrap = critic_->value(rollout_.back().next_obs).value();
    std::vector<double> targets(n, 0.0);
    if (a2c) {
      double acc = bootstrap;
      for (std::size_t i = n; i-- > 0;) {
        acc = rollout_[i].reward + cfg_.gamma * acc;
        targets[i] = acc;
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const double next_v =
            rollout_[i].done ? 0.0 : critic_->value(rollout_[i].next_obs).value();
        targets[i] = rollout_[i].reward + cfg_.gamma * next_v;
      }
    }
    Tensor actor_acc = Tensor::scalar(0.0);
    Tensor critic_acc = Tensor::scalar(0.0);
    int terms = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor v = critic_->value(rollout_[i].obs);
      const double weight = a2c ? targets[i] - v.value() : targets[i];
      critic_acc = add(critic_acc, square(add_scalar(v, -targets[i])));
      const auto slots = rollout_[i].acting_slots();
      if (!slots.empty()) {
        ++terms;
        actor_acc = add(actor_acc, mul_scalar(sum(log_probs(rollout_[i])),
                                              weight / static_cast<double>(slots.size())));
      }
    }
    rollout_.clear();
    const Tensor actor_loss = mul_scalar(actor_acc, -1.0 / std::max(terms, 1));
    const Tensor critic_loss = mul_scalar(critic_acc, 1.0 / static_cast<double>(n));
    step_loss(add(actor_loss, mul_scalar(reshape(critic_loss, {1}), 0.5)));
  }

  // Clipped-surrogate PPO with GAE(lambda) advantages and several epochs
  // over the episode batch.
  void update_ppo() {
    const std::size_t n = rollout_.size();
    if (n == 0) return;
    std::vector<double> rewards(n), values(n);
    for (std::size_t i = 0; i < n; ++i) {
      rewards[i] = rollout_[i].reward;
      values[i] = critic_->value(rollout_[i].obs).value();
    }
    const double bootstrap =
        rollout_.back().done ? 0.0 : critic_->value(rollout_.back().next_obs).value();
    std::vector<double> adv = gae_advantages(rewards, values, bootstrap, cfg_.gamma, cfg_.gae_lambda);
    std::vector<double> returns(n);
    for (std::size_t i = 0; i < n; ++i) returns[i] = adv[i] + values[i];
    normalize_inplace(adv);

    // freeze old log-probs before the first epoch
    std::vector<std::vector<double>> old_lp(n);
    for (std::size_t i = 0; i < n; ++i) old_lp[i] = log_probs(rollout_[i]).data();

    for (int epoch = 0; epoch < cfg_.ppo_epochs; ++epoch) {
      Tensor loss = Tensor::scalar(0.0);
      int terms = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto slots = rollout_[i].acting_slots();
        const Tensor v = critic_->value(rollout_[i].obs);
        const Tensor value_term = square(add_scalar(v, -returns[i]));
        Tensor term = mul_scalar(reshape(value_term, {1}), 0.5);
        if (!slots.empty()) {
          const Tensor lp = log_probs(rollout_[i]);
          const Tensor ratio = vexp(sub(lp, Tensor::from(old_lp[i], {old_lp[i].size()})));
          const Tensor surr = minimum(mul_scalar(ratio, adv[i]),
                                      mul_scalar(clamp(ratio, 1.0 - cfg_.ppo_clip, 1.0 + cfg_.ppo_clip),
                                                 adv[i]));
          term = add(term, mul_scalar(mean(surr), -1.0));
          term = add(term, mul_scalar(reshape(entropy(rollout_[i]), {1}), -cfg_.entropy_coef));
        }
        loss = add(loss, term);
        ++terms;
      }
      step_loss(mul_scalar(loss, 1.0 / std::max(terms, 1)));
    }
    rollout_.clear();
  }

 private:
  void collect(ParamList& out) {
    actor_.collect("actor", out, cfg_.continuous);
    if (critic_) critic_->collect("critic", out);
  }

  void step_loss(const Tensor& loss) {
    if (!loss.requires_grad()) return;
    check_finite(loss.value());
    zero_grads(params_);
    backward(loss);
    clip_grad_norm(params_, cfg_.grad_clip_norm);
    optimizer_->step(params_);
    ++updates_;
  }

  ActorNet actor_;
  std::optional<ValueNet> critic_;
  ParamList params_;
  std::optional<Optimizer> optimizer_;
  std::vector<Transition> rollout_;
};

// ---------------------------------------------------------------------------
// Deterministic continuous-control family: DDPG and TD3.
class DeterministicAgent : public Agent {
 public:
  DeterministicAgent(const AlgoConfig& cfg, EncoderKind kind, int feature_dim,
                     const std::vector<int>& widths, std::uint64_t root_seed)
      : Agent(cfg, kind, root_seed), buffer_(cfg.replay_capacity) {
    require(cfg_.continuous, "deterministic agents need a continuous action space");
    twin_ = cfg_.algorithm == AlgorithmId::kTd3;
    actor_ = ActorNet::create(kind, feature_dim, widths, 1, true, cfg_.a_max, init_rng_);
    critic1_ = ActionCriticNet::create(kind, feature_dim, widths, init_rng_);
    if (twin_) critic2_ = ActionCriticNet::create(kind, feature_dim, widths, init_rng_);
    target_actor_ = actor_.frozen();
    target_critic1_ = critic1_.frozen();
    if (twin_) target_critic2_ = critic2_->frozen();

    actor_.collect("actor", actor_params_, false);
    critic1_.collect("critic1", critic_params_);
    if (twin_) critic2_->collect("critic2", critic_params_);
    target_actor_.collect("target.actor", target_actor_params_, false);
    target_critic1_.collect("target.critic1", target_critic_params_);
    if (twin_) target_critic2_->collect("target.critic2", target_critic_params_);

    actor_opt_.emplace(OptimizerKind::kAdam, cfg_.lr, actor_params_);
    critic_opt_.emplace(OptimizerKind::kAdam, cfg_.lr, critic_params_);
  }

  PolicyOutput policy(const GraphObservation& obs) override {
    PolicyOutput p;
    p.kind = PolicyKind::kDeterministic;
    p.slots = obs.slots();
    p.values = actor_.mean_action(obs).data();
    return p;
  }

  void observe(const Transition& t) override {
    buffer_.push(t);
    ++observed_;
    const std::size_t need = std::max<std::size_t>(cfg_.batch_size, cfg_.warmup);
    if (buffer_.size() >= need && observed_ % cfg_.update_every == 0) update();
  }

  // y = r + gamma * Q'(s', a~) per acting slot, with a~ = mu'(s') plus
  // clipped smoothing noise (TD3) and the min over twin target critics.
  std::vector<double> slot_targets(const Transition& t) {
    const auto slots = t.acting_slots();
    std::vector<double> y(slots.size(), t.reward);
    const Tensor next_a_raw = target_actor_.mean_action(t.next_obs);
    std::vector<double> next_a = next_a_raw.data();
    if (twin_) {
      for (double& a : next_a) {
        const double noise = std::clamp(cfg_.td3_target_noise * replay_rng_.normal(),
                                        -cfg_.td3_noise_clip, cfg_.td3_noise_clip);
        a = std::clamp(a + noise, cfg_.a_min, cfg_.a_max);
      }
    }
    if (t.done || cfg_.gamma == 0.0) return y;
    const Tensor a_col = actions_column(next_a);
    const Tensor q1 = target_critic1_.q_values(t.next_obs, a_col);
    std::optional<Tensor> q2;
    if (twin_) q2 = target_critic2_->q_values(t.next_obs, a_col);
    for (std::size_t k = 0; k < slots.size(); ++k) {
      const int s = slots[k];
      const bool same_vehicle =
          t.next_obs.occupied(s) && t.next_obs.slot_to_vehicle[s] == t.obs.slot_to_vehicle[s];
      if (!same_vehicle) continue;
      double q = q1.data()[s];
      if (q2) q = std::min(q, q2->data()[s]);
      y[k] += cfg_.gamma * q;
    }
    return y;
  }

  // Twin (or single) critic regression; exposed for the gradient suite.
  Tensor critic_loss_on_batch(const std::vector<const Transition*>& batch) {
    Tensor total = Tensor::scalar(0.0);
    int contributing = 0;
    for (const Transition* tp : batch) {
      const Transition& t = *tp;
      const auto slots = t.acting_slots();
      if (slots.empty()) continue;
      ++contributing;
      const auto y = slot_targets(t);
      const Tensor y_t = Tensor::from(y, {y.size()});
      const Tensor a_col = actions_column(t.actions);
      Tensor sample = mean(square(sub(slot_q(critic1_, t.obs, a_col, slots), y_t)));
      if (twin_)
        sample = add(sample, mean(square(sub(slot_q(*critic2_, t.obs, a_col, slots), y_t))));
      total = add(total, sample);
    }
    return mul_scalar(total, 1.0 / std::max(contributing, 1));
  }

  // Actor objective: -mean Q1(s, mu(s)) over acting slots.
  Tensor actor_loss_on_batch(const std::vector<const Transition*>& batch) {
    Tensor total = Tensor::scalar(0.0);
    int contributing = 0;
    for (const Transition* tp : batch) {
      const Transition& t = *tp;
      const auto slots = t.acting_slots();
      if (slots.empty()) continue;
      ++contributing;
      const Tensor a = actor_.mean_action(t.obs);
      const Tensor a_col = reshape(a, {a.size(), 1});
      total = add(total, mean(slot_q(critic1_, t.obs, a_col, slots)));
    }
    return mul_scalar(total, -1.0 / std::max(contributing, 1));
  }

  void update() {
    const auto indices = buffer_.sample_uniform(cfg_.batch_size, replay_rng_);
    std::vector<const Transition*> batch;
    for (std::size_t i : indices) batch.push_back(&buffer_.get(i));

    const Tensor c_loss = critic_loss_on_batch(batch);
    if (!c_loss.requires_grad()) return;  // nothing acted in this batch
    check_finite(c_loss.value());
    zero_grads(critic_params_);
    backward(c_loss);
    clip_grad_norm(critic_params_, cfg_.grad_clip_norm);
    critic_opt_->step(critic_params_);
    ++updates_;

    // actor (and targets) move every step for DDPG, every d-th for TD3
    if (!twin_ || updates_ % cfg_.td3_delay == 0) {
      const Tensor a_loss = actor_loss_on_batch(batch);
      if (!a_loss.requires_grad()) return;
      check_finite(a_loss.value());
      zero_grads(actor_params_);
      zero_grads(critic_params_);  // actor gradient flows through the critic; discard there
      backward(a_loss);
      clip_grad_norm(actor_params_, cfg_.grad_clip_norm);
      actor_opt_->step(actor_params_);
      soft_update(target_actor_params_, actor_params_, cfg_.tau);
      soft_update(target_critic_params_, critic_params_, cfg_.tau);
    }
  }

  ParamList parameters() override {
    ParamList all;
    actor_.collect("actor", all, false);
    critic1_.collect("critic1", all);
    if (twin_) critic2_->collect("critic2", all);
    target_actor_.collect("target.actor", all, false);
    target_critic1_.collect("target.critic1", all);
    if (twin_) target_critic2_->collect("target.critic2", all);
    return all;
  }

  void force_soft_update(double tau) {
    soft_update(target_actor_params_, actor_params_, tau);
    soft_update(target_critic_params_, critic_params_, tau);
  }

  const ParamList& actor_params() const { return actor_params_; }
  const ParamList& target_actor_params() const { return target_actor_params_; }

 private:
  static Tensor slot_q(const ActionCriticNet& critic, const GraphObservation& obs,
                       const Tensor& a_col, const std::vector<int>& slots) {
    const Tensor q = critic.q_values(obs, a_col);  // [S]
    return reshape(select_rows(reshape(q, {q.size(), 1}), slots), {slots.size()});
  }

  bool twin_ = false;
  ActorNet actor_, target_actor_;
  ActionCriticNet critic1_, target_critic1_;
  std::optional<ActionCriticNet> critic2_, target_critic2_;
  ParamList actor_params_, critic_params_;
  ParamList target_actor_params_, target_critic_params_;
  std::optional<Optimizer> actor_opt_, critic_opt_;
  ReplayBuffer buffer_;
  long observed_ = 0;
};

inline std::unique_ptr<Agent> make_agent(const AlgoConfig& cfg, EncoderKind kind, int feature_dim,
                                         const std::vector<int>& widths, std::uint64_t root_seed) {
  if (algorithm_is_value_based(cfg.algorithm))
    return std::make_unique<ValueAgent>(cfg, kind, feature_dim, widths, root_seed);
  if (algorithm_requires_continuous(cfg.algorithm))
    return std::make_unique<DeterministicAgent>(cfg, kind, feature_dim, widths, root_seed);
  return std::make_unique<PolicyGradientAgent>(cfg, kind, feature_dim, widths, root_seed);
}

}  // namespace gcav
