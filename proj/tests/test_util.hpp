#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "gcav/graph.hpp"
#include "gcav/optim.hpp"
#include "gcav/tensor.hpp"

namespace gcav::test {

// Synthetic observation with random occupancy, features, and a symmetric
// adjacency honoring the unit-diagonal and dead-slot-zero invariants.
inline gcav::GraphObservation random_observation(gcav::Rng& rng, int m, int n, int feature_dim,
                                                 double edge_prob = 0.4) {
  gcav::GraphObservation obs;
  obs.m = m;
  obs.n = n;
  obs.feature_dim = feature_dim;
  const int s = m + n;
  obs.index.assign(s, 0);
  obs.slot_to_vehicle.assign(s, -1);
  int next_vehicle = 100;
  for (int i = 0; i < s; ++i)
    if (rng.uniform() < 0.7) {
      obs.index[i] = 1;
      obs.slot_to_vehicle[i] = next_vehicle++;
    }
  obs.node_features.assign(static_cast<std::size_t>(s) * feature_dim, 0.0);
  for (int i = 0; i < s; ++i) {
    if (!obs.index[i]) continue;
    for (int f = 0; f < feature_dim; ++f)
      obs.node_features[i * feature_dim + f] = rng.uniform(-1.0, 1.0);
  }
  obs.adjacency.assign(static_cast<std::size_t>(s) * s, 0.0);
  for (int i = 0; i < s; ++i) {
    if (!obs.index[i]) continue;
    obs.adjacency[i * s + i] = 1.0;
    for (int j = i + 1; j < s; ++j) {
      if (!obs.index[j]) continue;
      if (rng.uniform() < edge_prob) {
        obs.adjacency[i * s + j] = 1.0;
        obs.adjacency[j * s + i] = 1.0;
      }
    }
  }
  return obs;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Central finite difference of a scalar-valued forward pass with respect
// to one coordinate of a parameter buffer.
inline double numeric_grad(const std::function<double()>& forward, double* coord, double h) {
  const double orig = *coord;
  *coord = orig + h;
  const double fp = forward();
  *coord = orig - h;
  const double fm = forward();
  *coord = orig;
  return (fp - fm) / (2.0 * h);
}

// Compares analytic grads (already populated by backward()) against central
// differences for every coordinate of every parameter. Returns the largest
// relative error; coordinates where both sides are ~0 are skipped.
inline double max_grad_rel_err(ParamList& params, const std::function<double()>& forward,
                               double h = 1e-5) {
  double worst = 0.0;
  for (auto& p : params) {
    const std::vector<double> analytic = p.value.grad();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double fd = numeric_grad(forward, &p.value.data()[i], h);
      if (std::abs(analytic[i]) < 1e-8 && std::abs(fd) < 1e-8) continue;
      worst = std::max(worst, rel_err(analytic[i], fd));
    }
  }
  return worst;
}

}  // namespace gcav::test
