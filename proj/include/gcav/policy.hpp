#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gcav/common.hpp"

namespace gcav {

// Training produced a NaN policy or loss; the run is aborted and marked
// diverged rather than crashed.
class DivergenceError : public ContractViolation {
 public:
  explicit DivergenceError(const std::string& msg) : ContractViolation(msg) {}
};

enum class PolicyKind {
  kActionValues,   // per-slot Q row
  kCategorical,    // per-slot action probabilities
  kGaussian,       // per-slot mean + shared stddev
  kDeterministic,  // per-slot action value
};

struct PolicyOutput {
  PolicyKind kind = PolicyKind::kActionValues;
  int slots = 0;
  int action_count = 1;
  // kActionValues/kCategorical: slots x action_count, row-major.
  // kGaussian/kDeterministic: one entry per slot.
  std::vector<double> values;
  double stddev = 0.0;

  double at(int slot, int action) const { return values[slot * action_count + action]; }
};

enum class ActMode { kTrain, kEval };

struct ActionBounds {
  double lo = -3.0;
  double hi = 3.0;
};

struct ExplorationParams {
  double epsilon = 0.0;      // epsilon-greedy for value policies
  double noise_sigma = 0.0;  // additive noise for deterministic policies
};

namespace detail {

inline int argmax_row(const std::vector<double>& v, int row, int cols) {
  int best = 0;
  for (int c = 1; c < cols; ++c)
    if (v[row * cols + c] > v[row * cols + best]) best = c;
  return best;
}

}  // namespace detail

// Turns a driving policy into per-slot actions. Value policies act
// epsilon-greedily in training; stochastic policies sample; deterministic
// policies add exploration noise. Continuous outputs are always clamped.
// Draw counts per slot are fixed, so dead-slot contents never shift the
// stream for occupied slots.
inline std::vector<double> act(const PolicyOutput& policy, ActMode mode,
                               const ExplorationParams& explore, const ActionBounds& bounds,
                               Rng& rng) {
  for (double v : policy.values)
    if (std::isnan(v)) throw DivergenceError("act: NaN in policy output");
  std::vector<double> actions(policy.slots, 0.0);
  for (int s = 0; s < policy.slots; ++s) {
    switch (policy.kind) {
      case PolicyKind::kActionValues: {
        const double draw = rng.uniform();
        const std::uint64_t alt = rng.uniform_int(policy.action_count);
        if (mode == ActMode::kTrain && draw < explore.epsilon)
          actions[s] = static_cast<double>(alt);
        else
          actions[s] = detail::argmax_row(policy.values, s, policy.action_count);
        break;
      }
      case PolicyKind::kCategorical: {
        const double u = rng.uniform();
        if (mode == ActMode::kEval) {
          actions[s] = detail::argmax_row(policy.values, s, policy.action_count);
        } else {
          double acc = 0.0;
          int chosen = policy.action_count - 1;
          for (int c = 0; c < policy.action_count; ++c) {
            acc += policy.at(s, c);
            if (u < acc) {
              chosen = c;
              break;
            }
          }
          actions[s] = chosen;
        }
        break;
      }
      case PolicyKind::kGaussian: {
        const double noise = rng.normal();
        double a = policy.values[s];
        if (mode == ActMode::kTrain) a += policy.stddev * noise;
        actions[s] = std::clamp(a, bounds.lo, bounds.hi);
        break;
      }
      case PolicyKind::kDeterministic: {
        const double noise = rng.normal();
        double a = policy.values[s];
        if (mode == ActMode::kTrain) a += explore.noise_sigma * noise;
        actions[s] = std::clamp(a, bounds.lo, bounds.hi);
        break;
      }
    }
  }
  return actions;
}

}  // namespace gcav
