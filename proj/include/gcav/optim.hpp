#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gcav/tensor.hpp"

namespace gcav {

struct NamedParam {
  std::string name;
  Tensor value;
};

using ParamList = std::vector<NamedParam>;

inline void zero_grads(ParamList& params) {
  for (auto& p : params) p.value.zero_grad();
}

// Scales all gradients so the global L2 norm does not exceed max_norm.
// Returns the pre-clip norm.
inline double clip_grad_norm(ParamList& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params) {
    if (!p.value.has_grad()) continue;
    for (double g : p.value.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& p : params) {
      if (!p.value.has_grad()) continue;
      for (double& g : p.value.grad()) g *= scale;
    }
  }
  return norm;
}

enum class OptimizerKind { kSgd, kAdam };

// SGD / Adam over a fixed parameter list. Moment buffers are allocated
// at construction, shape-aligned with their parameters.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, const ParamList& params, double beta1 = 0.9,
            double beta2 = 0.999, double epsilon = 1e-8)
      : kind_(kind), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
    require(lr_ > 0.0, "optimizer: learning rate must be positive");
    if (kind_ == OptimizerKind::kAdam) {
      m_.reserve(params.size());
      v_.reserve(params.size());
      for (const auto& p : params) {
        m_.emplace_back(p.value.size(), 0.0);
        v_.emplace_back(p.value.size(), 0.0);
      }
    }
  }

  long step_count() const { return step_count_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) {
    require(lr > 0.0, "optimizer: learning rate must be positive");
    lr_ = lr;
  }

  // One update over all parameters; every parameter must carry a gradient.
  void step(ParamList& params) {
    if (kind_ == OptimizerKind::kAdam)
      require(params.size() == m_.size(), "optimizer: parameter list changed size");
    ++step_count_;
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = params[k];
      if (!p.value.has_grad())
        throw ContractViolation("optimizer: missing gradient for parameter '" + p.name + "'");
      auto& data = p.value.data();
      const auto& grad = p.value.grad();
      if (kind_ == OptimizerKind::kSgd) {
        for (std::size_t i = 0; i < data.size(); ++i) data[i] -= lr_ * grad[i];
      } else {
        auto& m = m_[k];
        auto& v = v_[k];
        require(m.size() == data.size(), "optimizer: moment buffer misaligned for '" + p.name + "'");
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
        for (std::size_t i = 0; i < data.size(); ++i) {
          m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
          v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
          const double mhat = m[i] / bc1;
          const double vhat = v[i] / bc2;
          data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
      }
    }
  }

 private:
  OptimizerKind kind_;
  double lr_;
  double beta1_, beta2_, eps_;
  long step_count_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace gcav
