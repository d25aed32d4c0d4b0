#pragma once

#include <cmath>
#include <vector>

#include "gcav/common.hpp"
#include "gcav/sim.hpp"

namespace gcav {

// Weights of the four highway reward terms. The penalty counters enter
// through non-positive weights so that lane changes and collisions can
// only reduce the total.
struct RewardWeights {
  double w1 = 1.0;    // intention
  double w2 = 1.0;    // average speed
  double w3 = -0.1;   // lane-change penalty
  double w4 = -10.0;  // collision penalty

  void validate() const {
    if (w1 < 0.0 || w2 < 0.0) throw ConfigError("reward: w1 and w2 must be >= 0");
    if (w3 > 0.0 || w4 > 0.0) throw ConfigError("reward: w3 and w4 must be <= 0");
  }
};

struct RewardBreakdown {
  double r_intention = 0.0;    // R_I
  double r_avg_speed = 0.0;    // R_AS
  double p_lane_change = 0.0;  // P_LC
  double p_collision = 0.0;    // P_C
  double total = 0.0;
};

// Road-section intention reward for one AV. Sections before the vehicle's
// target ramp shape it toward the exit lane; uncovered sections give 0.
inline double intention_reward(const VehicleState& v, const ScenarioConfig& cfg) {
  require(cfg.scenario == Scenario::kHighwayRamping, "intention_reward: highway scenario only");
  require(v.alive, "intention_reward: vehicle is not alive");
  if (v.kind == VehicleKind::kHV) throw ContractViolation("intention_reward: HV input");
  const int leftmost = 0;
  const int rightmost = cfg.lane_count - 1;
  const double l1 = cfg.ramp1_pos_m;
  const double l2 = cfg.ramp2_pos_m;
  if (v.kind == VehicleKind::kAvRamp1) {
    if (v.pos_m > l1) return 0.0;  // ramp missed
    const double dx1 = v.pos_m;
    if (v.lane == leftmost) return -dx1 / l1;        // r1
    if (v.lane == rightmost) return 1.0 - dx1 / l1;  // r2
    return 0.0;
  }
  if (v.kind == VehicleKind::kAvRamp2) {
    if (v.pos_m < l1) {
      const double dx21 = v.pos_m;
      if (v.lane == rightmost) return -dx21 / l1;  // r3
      return 0.0;
    }
    if (v.pos_m > l2) return 0.0;
    const double dx22 = v.pos_m - l1;
    if (v.lane == leftmost) return -dx22 / (l2 - l1);        // r4
    if (v.lane == rightmost) return 1.0 - dx22 / (l2 - l1);  // r5
    return 0.0;
  }
  return 0.0;  // generic AV has no prescribed ramp
}

// R_AS: mean normalized AV speed; 0 when no AV is alive.
inline double average_speed_reward(const std::vector<VehicleState>& vehicles,
                                   const ScenarioConfig& cfg) {
  require(cfg.scenario == Scenario::kHighwayRamping, "average_speed_reward: highway scenario only");
  double acc = 0.0;
  int n = 0;
  for (const auto& v : vehicles) {
    if (!v.alive || !kind_is_av(v.kind)) continue;
    acc += v.speed_mps / cfg.v_max_av_mps;
    ++n;
  }
  return n == 0 ? 0.0 : acc / n;
}

inline RewardBreakdown highway_reward(const std::vector<VehicleState>& vehicles,
                                      const SimEvents& events, const RewardWeights& w,
                                      const ScenarioConfig& cfg) {
  require(cfg.scenario == Scenario::kHighwayRamping, "highway_reward: highway scenario only");
  RewardBreakdown b;
  double acc = 0.0;
  int n = 0;
  for (const auto& v : vehicles) {
    if (!v.alive || !kind_is_av(v.kind)) continue;
    acc += intention_reward(v, cfg);
    ++n;
  }
  b.r_intention = n == 0 ? 0.0 : acc / n;
  b.r_avg_speed = average_speed_reward(vehicles, cfg);
  b.p_lane_change = events.lane_changes_by_avs;
  b.p_collision = events.collisions;
  b.total = w.w1 * b.r_intention + w.w2 * b.r_avg_speed + w.w3 * b.p_lane_change +
            w.w4 * b.p_collision;
  return b;
}

// Figure-eight speed-tracking reward in [0, 1]:
// R = max(||V_d 1|| - ||V_d - V||, 0) / ||V_d 1|| over all m+n vehicles.
inline double figure_eight_reward(const std::vector<VehicleState>& vehicles,
                                  const ScenarioConfig& cfg) {
  require(cfg.scenario == Scenario::kFigureEight, "figure_eight_reward: figure-eight scenario only");
  const int total = cfg.total_slots();
  int alive = 0;
  for (const auto& v : vehicles)
    if (v.alive) ++alive;
  require(alive == total, "figure_eight_reward: all m+n vehicles must be alive");
  const double vd = cfg.v_desired_mps;
  double dev_sq = 0.0;
  for (const auto& v : vehicles) {
    if (!v.alive) continue;
    const double d = vd - v.speed_mps;
    dev_sq += d * d;
  }
  const double target_norm = vd * std::sqrt(static_cast<double>(total));
  return std::max(target_norm - std::sqrt(dev_sq), 0.0) / target_norm;
}

}  // namespace gcav
