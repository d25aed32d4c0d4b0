#pragma once

#include <cstddef>
#include <vector>

#include "gcav/common.hpp"
#include "gcav/graph.hpp"

namespace gcav {

// One experience tuple over fixed slots. The mask is the index vector at
// action time; per-slot entries are meaningful only where it is 1.
struct Transition {
  GraphObservation obs;
  std::vector<double> actions;  // per slot
  double reward = 0.0;
  GraphObservation next_obs;
  bool done = false;
  std::vector<int> mask;

  // AV slots that actually acted in this transition.
  std::vector<int> acting_slots() const {
    std::vector<int> out;
    for (int s = obs.m; s < obs.slots(); ++s)
      if (mask[s] == 1) out.push_back(s);
    return out;
  }
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    require(capacity > 0, "replay buffer: capacity must be positive");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return storage_.size(); }

  std::size_t push(Transition t) {
    std::size_t at;
    if (storage_.size() < capacity_) {
      at = storage_.size();
      storage_.push_back(std::move(t));
    } else {
      at = head_;
      storage_[head_] = std::move(t);
    }
    head_ = (head_ + 1) % capacity_;
    return at;
  }

  const Transition& get(std::size_t i) const { return storage_.at(i); }

  std::vector<std::size_t> sample_uniform(std::size_t batch, Rng& rng) const {
    require(batch <= size(), "replay buffer: batch larger than stored transitions");
    std::vector<std::size_t> idx(batch);
    for (auto& i : idx) i = rng.uniform_int(size());
    return idx;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> storage_;
};

// Binary sum-tree over leaf masses for O(log n) proportional sampling.
class SumTree {
 public:
  explicit SumTree(std::size_t capacity) : capacity_(capacity), tree_(2 * capacity, 0.0) {}

  void set(std::size_t i, double mass) {
    require(i < capacity_, "sum tree: index out of range");
    require(mass >= 0.0, "sum tree: negative mass");
    std::size_t node = i + capacity_;
    tree_[node] = mass;
    for (node /= 2; node >= 1; node /= 2) tree_[node] = tree_[2 * node] + tree_[2 * node + 1];
  }

  double get(std::size_t i) const { return tree_[i + capacity_]; }
  double total() const { return capacity_ > 0 ? tree_[1] : 0.0; }

  // Finds the leaf whose cumulative interval contains u in [0, total).
  std::size_t sample(double u) const {
    std::size_t node = 1;
    while (node < capacity_) {
      const double left = tree_[2 * node];
      if (u < left) {
        node = 2 * node;
      } else {
        u -= left;
        node = 2 * node + 1;
      }
    }
    return node - capacity_;
  }

 private:
  std::size_t capacity_;
  std::vector<double> tree_;
};

struct PerBatch {
  std::vector<std::size_t> indices;
  std::vector<double> weights;  // importance weights, normalized by the max
};

// Proportional prioritized replay: P(i) ~ priority_i^alpha via a sum tree;
// new transitions enter at the running max priority.
class PrioritizedReplay {
 public:
  PrioritizedReplay(std::size_t capacity, double alpha)
      : buffer_(capacity), tree_(capacity), alpha_(alpha) {}

  std::size_t size() const { return buffer_.size(); }
  const Transition& get(std::size_t i) const { return buffer_.get(i); }
  const SumTree& tree() const { return tree_; }
  double priority(std::size_t i) const { return priorities_.at(i); }

  void push(Transition t) {
    const std::size_t at = buffer_.push(std::move(t));
    if (priorities_.size() < buffer_.size()) priorities_.resize(buffer_.size(), 0.0);
    priorities_[at] = max_priority_;
    tree_.set(at, std::pow(max_priority_, alpha_));
  }

  void update_priorities(const std::vector<std::size_t>& indices,
                         const std::vector<double>& new_priorities) {
    require(indices.size() == new_priorities.size(), "per: index/priority size mismatch");
    for (std::size_t k = 0; k < indices.size(); ++k) {
      const double p = std::max(new_priorities[k], 1e-6);
      priorities_.at(indices[k]) = p;
      tree_.set(indices[k], std::pow(p, alpha_));
      max_priority_ = std::max(max_priority_, p);
    }
  }

  PerBatch sample(std::size_t batch, double beta, Rng& rng) {
    require(batch <= size(), "per_sample: batch larger than stored transitions");
    PerBatch out;
    out.indices.resize(batch);
    out.weights.resize(batch);
    const double total = tree_.total();
    for (std::size_t k = 0; k < batch; ++k) out.indices[k] = tree_.sample(rng.uniform() * total);
    const double n = static_cast<double>(size());
    double wmax = 0.0;
    for (std::size_t k = 0; k < batch; ++k) {
      const double p = tree_.get(out.indices[k]) / total;
      out.weights[k] = std::pow(n * p, -beta);
      wmax = std::max(wmax, out.weights[k]);
    }
    for (auto& w : out.weights) w /= wmax;
    return out;
  }

 private:
  ReplayBuffer buffer_;
  SumTree tree_;
  double alpha_;
  double max_priority_ = 1.0;
  std::vector<double> priorities_;
};

}  // namespace gcav
