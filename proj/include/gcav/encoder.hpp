#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "gcav/graph.hpp"
#include "gcav/optim.hpp"
#include "gcav/tensor.hpp"

namespace gcav {

enum class EncoderKind { kGcn, kFlat };

inline std::string encoder_id(EncoderKind k) { return k == EncoderKind::kGcn ? "gcn" : "flat"; }

// One graph-convolution layer. The offset is fixed at zero; only the
// weight matrix is trainable.
struct GcnLayer {
  Tensor weight;  // F_in x F_out
  Tensor bias;    // F_out, identically zero
  bool relu_activation = true;

  static GcnLayer create(std::size_t f_in, std::size_t f_out, bool act, Rng& rng) {
    GcnLayer l;
    l.weight = Tensor::glorot(f_in, f_out, rng);
    l.bias = Tensor::zeros({f_out});
    l.relu_activation = act;
    return l;
  }
};

inline Tensor features_tensor(const GraphObservation& obs) {
  return Tensor::from(obs.node_features,
                      {static_cast<std::size_t>(obs.slots()), static_cast<std::size_t>(obs.feature_dim)});
}

// D^(-1/2) A D^(-1/2) with D_ii = sum_j A_ij; zero-degree (dead) slots get
// zero rows so they stay silent through every layer.
inline Tensor normalized_adjacency(const GraphObservation& obs) {
  const int s = obs.slots();
  for (int i = 0; i < s; ++i)
    for (int j = i + 1; j < s; ++j)
      if (obs.adjacency[i * s + j] != obs.adjacency[j * s + i])
        throw ContractViolation("gcn_forward: adjacency is not symmetric");
  std::vector<double> dinv(s, 0.0);
  for (int i = 0; i < s; ++i) {
    double deg = 0.0;
    for (int j = 0; j < s; ++j) deg += obs.adjacency[i * s + j];
    dinv[i] = deg > 0.0 ? 1.0 / std::sqrt(deg) : 0.0;
  }
  std::vector<double> norm(static_cast<std::size_t>(s) * s, 0.0);
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j)
      norm[i * s + j] = dinv[i] * obs.adjacency[i * s + j] * dinv[j];
  return Tensor::from(std::move(norm), {static_cast<std::size_t>(s), static_cast<std::size_t>(s)});
}

// Z = sigma(D^(-1/2) A D^(-1/2) Z_prev W + b) per layer.
inline Tensor gcn_forward(const GraphObservation& obs, const std::vector<GcnLayer>& layers) {
  const Tensor a_hat = normalized_adjacency(obs);
  Tensor z = features_tensor(obs);
  for (const auto& layer : layers) {
    z = add_rowvec(matmul(matmul(a_hat, z), layer.weight), layer.bias);
    if (layer.relu_activation) z = relu(z);
  }
  return z;
}

// Per-slot MLP on the node features; adjacency is ignored entirely.
inline Tensor flat_forward(const GraphObservation& obs, const std::vector<GcnLayer>& layers) {
  Tensor z = features_tensor(obs);
  for (const auto& layer : layers) {
    z = add_rowvec(matmul(z, layer.weight), layer.bias);
    if (layer.relu_activation) z = relu(z);
  }
  return z;
}

// Mean embedding over occupied slots as a [1 x F] row; zero when none.
inline Tensor pool_global(const Tensor& z, const std::vector<int>& occupied) {
  if (occupied.empty()) return Tensor::zeros({1, z.cols()});
  return reshape(mean_rows(select_rows(z, occupied)), {1, z.cols()});
}

// Slot-embedding encoder: a GCN stack, or the parameter-count-matched
// per-slot MLP used as the ablation baseline.
class Encoder {
 public:
  static Encoder create(EncoderKind kind, int feature_dim, const std::vector<int>& widths,
                        Rng& rng) {
    require(!widths.empty(), "encoder: at least one layer required");
    Encoder e;
    e.kind_ = kind;
    int in = feature_dim;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      const bool act = k + 1 < widths.size();  // no activation feeding the heads
      e.layers_.push_back(GcnLayer::create(in, widths[k], act, rng));
      in = widths[k];
    }
    return e;
  }

  EncoderKind kind() const { return kind_; }
  int out_dim() const { return static_cast<int>(layers_.back().weight.cols()); }
  const std::vector<GcnLayer>& layers() const { return layers_; }
  std::vector<GcnLayer>& mutable_layers() { return layers_; }

  Tensor forward(const GraphObservation& obs) const {
    return kind_ == EncoderKind::kGcn ? gcn_forward(obs, layers_) : flat_forward(obs, layers_);
  }

  void collect_params(const std::string& prefix, ParamList& out) {
    for (std::size_t k = 0; k < layers_.size(); ++k)
      out.push_back({prefix + ".layer" + std::to_string(k) + ".weight", layers_[k].weight});
  }

 private:
  EncoderKind kind_ = EncoderKind::kGcn;
  std::vector<GcnLayer> layers_;
};

}  // namespace gcav
