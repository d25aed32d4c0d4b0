#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "gcav/graph.hpp"
#include "gcav/reward.hpp"
#include "gcav/sim.hpp"

namespace gcav {

struct EnvStep {
  GraphObservation obs;
  double reward = 0.0;
  bool done = false;
  SimEvents events;
  RewardBreakdown breakdown;  // highway components (zeros in figure-eight)
};

// Binds simulator, graph observation layer, and reward into the decision
// loop: one env step = decision_period_steps physics steps with the reward
// accumulated across them.
class TrafficEnv {
 public:
  TrafficEnv(const ScenarioConfig& cfg, const RewardWeights& weights)
      : cfg_(cfg), weights_(weights), sensing_{cfg.sensing_range_m}, sim_(cfg), tracker_(cfg.max_hvs, cfg.max_avs) {
    weights_.validate();
  }

  const ScenarioConfig& config() const { return cfg_; }
  const Simulator& sim() const { return sim_; }
  int slots() const { return cfg_.total_slots(); }
  int feature_dim() const { return cfg_.scenario == Scenario::kHighwayRamping ? 8 : 2; }
  bool continuous() const { return cfg_.scenario == Scenario::kFigureEight; }
  int action_count() const { return 3; }
  int decisions_per_episode() const { return cfg_.horizon_steps / cfg_.decision_period_steps; }
  const GraphObservation& observation() const { return obs_; }

  void set_trace(std::ostream* trace) { trace_ = trace; }

  GraphObservation reset(Rng& rng) {
    sim_ = Simulator(cfg_);
    sim_.reset(rng);
    tracker_ = SlotTracker(cfg_.max_hvs, cfg_.max_avs);
    tracker_.sync(sim_.vehicles());
    obs_ = build_observation(sim_.vehicles(), cfg_, sensing_, tracker_);
    return obs_;
  }

  EnvStep step(const std::vector<double>& slot_actions, Rng& rng) {
    EnvStep out;
    for (int sub = 0; sub < cfg_.decision_period_steps; ++sub) {
      std::map<int, double> per_vehicle;
      if (sub == 0) {
        per_vehicle = mask_actions(slot_actions, obs_);
      } else {
        // lane commands apply on decision boundaries only
        for (const auto& v : sim_.vehicles())
          if (v.alive && kind_is_av(v.kind)) per_vehicle[v.id] = kCmdStraight;
      }
      const SimEvents ev = sim_.step(per_vehicle, rng);
      double r;
      if (cfg_.scenario == Scenario::kHighwayRamping) {
        const RewardBreakdown b = highway_reward(sim_.vehicles(), ev, weights_, cfg_);
        r = b.total;
        out.breakdown.r_intention += b.r_intention;
        out.breakdown.r_avg_speed += b.r_avg_speed;
        out.breakdown.p_lane_change += b.p_lane_change;
        out.breakdown.p_collision += b.p_collision;
        out.breakdown.total += b.total;
      } else {
        r = figure_eight_reward(sim_.vehicles(), cfg_);
        out.breakdown.total += r;
      }
      out.reward += r;
      out.events.collisions += ev.collisions;
      out.events.lane_changes_by_avs += ev.lane_changes_by_avs;
      for (const auto& e : ev.exits) out.events.exits.push_back(e);
      for (int id : ev.spawns) out.events.spawns.push_back(id);
      for (int id : ev.collision_removals) out.events.collision_removals.push_back(id);
      if (trace_) write_trace(per_vehicle, ev, r);
    }
    tracker_.sync(sim_.vehicles());
    obs_ = build_observation(sim_.vehicles(), cfg_, sensing_, tracker_);
    out.obs = obs_;
    out.done = sim_.step_index() >= cfg_.horizon_steps;
    return out;
  }

  double mean_av_speed() const {
    double acc = 0.0;
    int n = 0;
    for (const auto& v : sim_.vehicles()) {
      if (!v.alive || !kind_is_av(v.kind)) continue;
      acc += v.speed_mps;
      ++n;
    }
    return n == 0 ? 0.0 : acc / n;
  }

 private:
  void write_trace(const std::map<int, double>& actions, const SimEvents& ev, double reward) {
    for (const auto& v : sim_.vehicles()) {
      if (!v.alive) continue;
      *trace_ << "{\"step\":" << sim_.step_index() << ",\"vehicle\":" << v.id << ",\"kind\":\""
              << kind_name(v.kind) << "\",\"lane\":" << v.lane << ",\"pos_m\":" << v.pos_m
              << ",\"speed_mps\":" << v.speed_mps;
      const auto it = actions.find(v.id);
      if (it != actions.end()) *trace_ << ",\"action\":" << it->second;
      *trace_ << ",\"events\":{\"collisions\":" << ev.collisions
              << ",\"lane_changes\":" << ev.lane_changes_by_avs << ",\"exits\":" << ev.exits.size()
              << ",\"spawns\":" << ev.spawns.size() << "},\"reward\":" << reward << "}\n";
    }
  }

  static const char* kind_name(VehicleKind k) {
    switch (k) {
      case VehicleKind::kHV: return "hv";
      case VehicleKind::kAvRamp1: return "av_ramp1";
      case VehicleKind::kAvRamp2: return "av_ramp2";
      case VehicleKind::kAvGeneric: return "av";
    }
    return "?";
  }

  ScenarioConfig cfg_;
  RewardWeights weights_;
  SensingModel sensing_;
  Simulator sim_;
  SlotTracker tracker_;
  GraphObservation obs_;
  std::ostream* trace_ = nullptr;
};

}  // namespace gcav
