#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "gcav/common.hpp"
#include "gcav/sim.hpp"

namespace gcav {

// Communication/sensing edge rules: self-loops, AV<->AV always,
// AV<->HV within sensing range. HVs do not share information directly.
struct SensingModel {
  double sensing_range_m = 30.0;
};

// The (N_t, A_t, I_t) triple over fixed slots: HV slots [0, m),
// AV slots [m, m+n). Unoccupied slots are all-zero rows/columns.
struct GraphObservation {
  int m = 0;
  int n = 0;
  int feature_dim = 0;
  bool open_loop = true;
  std::vector<double> node_features;  // (m+n) x F, row-major
  std::vector<double> adjacency;      // (m+n) x (m+n), row-major
  std::vector<int> index;             // I_t; all-ones in closed-loop scenarios
  std::vector<int> slot_to_vehicle;   // -1 on empty slots

  int slots() const { return m + n; }
  bool occupied(int slot) const { return index[static_cast<std::size_t>(slot)] == 1; }
  double feature(int slot, int f) const { return node_features[slot * feature_dim + f]; }
  double edge(int i, int j) const { return adjacency[i * slots() + j]; }

  std::vector<int> occupied_slots() const {
    std::vector<int> out;
    for (int s = 0; s < slots(); ++s)
      if (occupied(s)) out.push_back(s);
    return out;
  }
  std::vector<int> occupied_av_slots() const {
    std::vector<int> out;
    for (int s = m; s < slots(); ++s)
      if (occupied(s)) out.push_back(s);
    return out;
  }
};

// Stable vehicle -> slot assignment over a vehicle's lifetime: lowest free
// slot within the vehicle's class at spawn, freed on exit.
class SlotTracker {
 public:
  SlotTracker(int m, int n) : m_(m), n_(n), slot_to_vehicle_(m + n, -1) {}

  void sync(const std::vector<VehicleState>& vehicles) {
    // free slots of vanished vehicles
    for (auto& sv : slot_to_vehicle_) {
      if (sv < 0) continue;
      bool found = false;
      for (const auto& v : vehicles)
        if (v.alive && v.id == sv) found = true;
      if (!found) sv = -1;
    }
    // assign new arrivals in id order
    std::vector<const VehicleState*> sorted;
    for (const auto& v : vehicles)
      if (v.alive) sorted.push_back(&v);
    std::sort(sorted.begin(), sorted.end(),
              [](const VehicleState* a, const VehicleState* b) { return a->id < b->id; });
    for (const auto* v : sorted) {
      if (slot_of(v->id) >= 0) continue;
      const bool av = kind_is_av(v->kind);
      const int lo = av ? m_ : 0;
      const int hi = av ? m_ + n_ : m_;
      int slot = -1;
      for (int s = lo; s < hi; ++s)
        if (slot_to_vehicle_[s] < 0) {
          slot = s;
          break;
        }
      if (slot < 0)
        throw ContractViolation("slot tracker: more alive " + std::string(av ? "AVs" : "HVs") +
                                " than slots");
      slot_to_vehicle_[slot] = v->id;
    }
  }

  int slot_of(int vehicle_id) const {
    for (int s = 0; s < static_cast<int>(slot_to_vehicle_.size()); ++s)
      if (slot_to_vehicle_[s] == vehicle_id) return s;
    return -1;
  }

  const std::vector<int>& slot_to_vehicle() const { return slot_to_vehicle_; }

 private:
  int m_, n_;
  std::vector<int> slot_to_vehicle_;
};

namespace detail {

inline const VehicleState* vehicle_by_id(const std::vector<VehicleState>& vehicles, int id) {
  for (const auto& v : vehicles)
    if (v.alive && v.id == id) return &v;
  return nullptr;
}

inline double fig8_conflict_offset(const ScenarioConfig& cfg, double pos) {
  const double loop = cfg.loop_length_m();
  auto signed_wrap = [&](double d) {
    d = std::fmod(d, loop);
    if (d < -0.5 * loop) d += loop;
    if (d >= 0.5 * loop) d -= loop;
    return d;
  };
  const double da = signed_wrap(pos - cfg.conflict_center_a());
  const double db = signed_wrap(pos - cfg.conflict_center_b());
  return std::abs(da) <= std::abs(db) ? da : db;
}

}  // namespace detail

// N_t rows. Highway: [v/v_max, x/L, lane one-hot(3), intention one-hot(3)];
// figure-eight: [v/v_max, signed loop distance to the crossing / loop length].
inline std::vector<double> build_node_features(const std::vector<VehicleState>& vehicles,
                                               const ScenarioConfig& cfg,
                                               const SlotTracker& tracker, int* feature_dim) {
  const bool highway = cfg.scenario == Scenario::kHighwayRamping;
  const int fdim = highway ? 8 : 2;
  if (feature_dim) *feature_dim = fdim;
  const auto& s2v = tracker.slot_to_vehicle();
  std::vector<double> feats(s2v.size() * fdim, 0.0);
  for (std::size_t slot = 0; slot < s2v.size(); ++slot) {
    if (s2v[slot] < 0) continue;
    const VehicleState* v = detail::vehicle_by_id(vehicles, s2v[slot]);
    require(v != nullptr, "build_node_features: slot maps to missing vehicle");
    double* row = feats.data() + slot * fdim;
    const double vn = v->speed_mps / cfg.speed_limit(v->kind);
    if (vn < 0.0 || vn > 1.0)
      throw ContractViolation("build_node_features: normalized speed outside [0, 1]");
    row[0] = vn;
    if (highway) {
      const double xn = v->pos_m / cfg.highway_length_m;
      if (xn < 0.0 || xn > 1.0)
        throw ContractViolation("build_node_features: normalized position outside [0, 1]");
      row[1] = xn;
      const int lane = std::min(std::max(v->lane, 0), 2);  // three-lane feature layout
      row[2 + lane] = 1.0;
      row[5 + static_cast<int>(v->intention)] = 1.0;
    } else {
      row[1] = detail::fig8_conflict_offset(cfg, v->pos_m) / cfg.loop_length_m();
    }
  }
  return feats;
}

// A_t: symmetric 0/1 with unit diagonal on occupied slots.
inline std::vector<double> build_adjacency(const std::vector<VehicleState>& vehicles,
                                           const ScenarioConfig& cfg, const SensingModel& sensing,
                                           const SlotTracker& tracker) {
  const auto& s2v = tracker.slot_to_vehicle();
  const int total = static_cast<int>(s2v.size());
  std::vector<double> adj(static_cast<std::size_t>(total) * total, 0.0);
  const double loop = cfg.scenario == Scenario::kFigureEight ? cfg.loop_length_m() : 0.0;
  auto distance = [&](const VehicleState* a, const VehicleState* b) {
    double d = std::abs(a->pos_m - b->pos_m);
    if (loop > 0.0) d = std::min(d, loop - d);
    return d;
  };
  for (int i = 0; i < total; ++i) {
    if (s2v[i] < 0) continue;
    const VehicleState* vi = detail::vehicle_by_id(vehicles, s2v[i]);
    require(vi != nullptr, "build_adjacency: slot maps to missing vehicle");
    adj[i * total + i] = 1.0;
    for (int j = i + 1; j < total; ++j) {
      if (s2v[j] < 0) continue;
      const VehicleState* vj = detail::vehicle_by_id(vehicles, s2v[j]);
      const bool i_av = kind_is_av(vi->kind);
      const bool j_av = kind_is_av(vj->kind);
      bool link = false;
      if (i_av && j_av) link = true;
      else if (i_av != j_av) link = distance(vi, vj) <= sensing.sensing_range_m;
      if (link) {
        adj[i * total + j] = 1.0;
        adj[j * total + i] = 1.0;
      }
    }
  }
  return adj;
}

// I_t for open-loop scenarios: 1 exactly on occupied slots.
inline std::vector<int> build_index(const ScenarioConfig& cfg, const SlotTracker& tracker) {
  require(cfg.scenario == Scenario::kHighwayRamping, "build_index: open-loop scenario only");
  std::vector<int> idx(tracker.slot_to_vehicle().size(), 0);
  for (std::size_t s = 0; s < idx.size(); ++s)
    if (tracker.slot_to_vehicle()[s] >= 0) idx[s] = 1;
  return idx;
}

inline GraphObservation build_observation(const std::vector<VehicleState>& vehicles,
                                          const ScenarioConfig& cfg, const SensingModel& sensing,
                                          const SlotTracker& tracker) {
  GraphObservation obs;
  obs.m = cfg.max_hvs;
  obs.n = cfg.max_avs;
  obs.open_loop = cfg.scenario == Scenario::kHighwayRamping;
  obs.node_features = build_node_features(vehicles, cfg, tracker, &obs.feature_dim);
  obs.adjacency = build_adjacency(vehicles, cfg, sensing, tracker);
  obs.slot_to_vehicle = tracker.slot_to_vehicle();
  if (obs.open_loop) {
    obs.index = build_index(cfg, tracker);
  } else {
    obs.index.assign(obs.slot_to_vehicle.size(), 0);
    for (std::size_t s = 0; s < obs.index.size(); ++s)
      if (obs.slot_to_vehicle[s] >= 0) obs.index[s] = 1;
  }
  return obs;
}

// Keeps actions of occupied AV slots, keyed by vehicle id; everything
// else is discarded.
inline std::map<int, double> mask_actions(const std::vector<double>& raw_actions,
                                          const GraphObservation& obs) {
  require(static_cast<int>(raw_actions.size()) == obs.slots(),
          "mask_actions: one action per slot required");
  std::map<int, double> out;
  for (int s = obs.m; s < obs.slots(); ++s)
    if (obs.occupied(s)) out[obs.slot_to_vehicle[s]] = raw_actions[s];
  return out;
}

}  // namespace gcav
