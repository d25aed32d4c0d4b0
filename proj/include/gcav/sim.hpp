#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gcav/common.hpp"

namespace gcav {

enum class Scenario { kHighwayRamping, kFigureEight };

enum class VehicleKind { kHV, kAvRamp1, kAvRamp2, kAvGeneric };

inline bool kind_is_av(VehicleKind k) { return k != VehicleKind::kHV; }

enum class Intention { kLeft, kStraight, kRight };

// Discrete lane commands for the highway scenario.
enum LaneCommand { kCmdLeft = 0, kCmdStraight = 1, kCmdRight = 2 };

enum class ExitPoint { kRamp1, kRamp2, kMain };

struct IdmParams {
  double v0 = 16.67;   // desired speed, m/s (overridden with the kind limit in the simulator)
  double T = 1.0;      // desired time headway, s
  double s0 = 2.0;     // jam distance, m
  double a = 1.5;      // max comfortable acceleration, m/s^2
  double b = 1.5;      // comfortable deceleration, m/s^2
  double delta = 4.0;  // velocity exponent
};

struct VehicleState {
  int id = -1;
  VehicleKind kind = VehicleKind::kHV;
  int lane = 0;  // 0 = leftmost; single value (0) in figure-eight
  double pos_m = 0.0;
  double speed_mps = 0.0;
  Intention intention = Intention::kStraight;
  bool alive = true;
};

struct ExitEvent {
  int id = -1;
  ExitPoint point = ExitPoint::kMain;
  VehicleKind kind = VehicleKind::kHV;
};

struct SimEvents {
  int collisions = 0;           // n_col
  int lane_changes_by_avs = 0;  // n_LC
  std::vector<ExitEvent> exits;
  std::vector<int> spawns;
  std::vector<int> collision_removals;  // ids removed after a collision
};

struct ScenarioConfig {
  Scenario scenario = Scenario::kHighwayRamping;
  int max_hvs = 6;  // m
  int max_avs = 6;  // n
  int lane_count = 3;
  double highway_length_m = 200.0;  // L
  double ramp1_pos_m = 80.0;        // L1
  double ramp2_pos_m = 160.0;       // L2
  double ring_radius_m = 30.0;      // r (figure-eight)
  double v_max_hv_mps = 60.0 * kKmhToMs;
  double v_max_av_mps = 75.0 * kKmhToMs;
  double v_desired_mps = 140.0 * kKmhToMs;  // V_d (figure-eight reward)
  double a_min = -3.0;
  double a_max = 3.0;
  double inflow_hv_vps = 0.5;
  double inflow_av_vps = 0.3;
  double dt_s = 0.5;
  int decision_period_steps = 2;
  int horizon_steps = 600;
  double sensing_range_m = 30.0;
  double vehicle_length_m = 5.0;
  double spawn_speed_mps = 10.0;
  double spawn_clear_gap_m = 25.0;
  double lc_hysteresis_m = 5.0;
  double right_of_way_window_m = 50.0;
  double conflict_zone_length_m = 10.0;
  IdmParams idm;

  int total_slots() const { return max_hvs + max_avs; }

  double speed_limit(VehicleKind k) const {
    if (scenario == Scenario::kFigureEight) return v_max_hv_mps;  // one limit for all kinds
    return kind_is_av(k) ? v_max_av_mps : v_max_hv_mps;
  }

  // Figure-eight 1-D loop geometry: two 3/4 rings joined by straight
  // crossing segments through a single conflict point.
  double crossing_segment_m() const { return 2.0 * ring_radius_m * std::sqrt(2.0); }
  double ring_arc_m() const { return 1.5 * 3.14159265358979323846 * ring_radius_m; }
  double loop_length_m() const { return 2.0 * (ring_arc_m() + crossing_segment_m()); }
  // Loop coordinates of the two images of the conflict point.
  double conflict_center_a() const { return 0.5 * crossing_segment_m(); }
  double conflict_center_b() const { return 1.5 * crossing_segment_m() + ring_arc_m(); }

  void validate() const {
    if (scenario == Scenario::kHighwayRamping) {
      if (!(ramp1_pos_m < ramp2_pos_m && ramp2_pos_m < highway_length_m))
        throw ConfigError("scenario: requires ramp1_pos_m < ramp2_pos_m < highway_length_m");
      if (lane_count < 1) throw ConfigError("scenario.lane_count: must be >= 1");
    }
    if (!(a_min < 0.0 && 0.0 < a_max)) throw ConfigError("scenario: requires a_min < 0 < a_max");
    if (!(dt_s > 0.0)) throw ConfigError("scenario.dt_s: must be > 0");
    if (horizon_steps <= 0) throw ConfigError("scenario.horizon_steps: must be > 0");
    if (max_hvs < 0 || max_avs < 0) throw ConfigError("scenario: m and n must be >= 0");
    if (decision_period_steps < 1) throw ConfigError("scenario.decision_period_steps: must be >= 1");
    if (!(sensing_range_m > 0.0)) throw ConfigError("scenario.sensing_range_m: must be > 0");
  }

  static ScenarioConfig highway_defaults() { return ScenarioConfig{}; }

  static ScenarioConfig figure_eight_defaults() {
    ScenarioConfig c;
    c.scenario = Scenario::kFigureEight;
    c.lane_count = 1;
    c.v_max_hv_mps = 100.0 * kKmhToMs;
    c.v_max_av_mps = 100.0 * kKmhToMs;
    c.decision_period_steps = 1;
    c.inflow_hv_vps = 0.0;
    c.inflow_av_vps = 0.0;
    return c;
  }
};

// IDM car-following acceleration, clamped to [a_min, a_max].
// A non-positive gap with a leader is treated as an imminent collision.
inline double idm_acceleration(double v, std::optional<double> v_lead, std::optional<double> gap_m,
                               const IdmParams& p, double a_min, double a_max) {
  require(v >= 0.0, "idm_acceleration: speed must be non-negative");
  double acc;
  if (!v_lead.has_value() || !gap_m.has_value()) {
    acc = p.a * (1.0 - std::pow(v / p.v0, p.delta));
  } else {
    if (*gap_m <= 0.0) return a_min;
    const double dv = v - *v_lead;
    const double s_star = p.s0 + v * p.T + v * dv / (2.0 * std::sqrt(p.a * p.b));
    acc = p.a * (1.0 - std::pow(v / p.v0, p.delta) - (s_star / *gap_m) * (s_star / *gap_m));
  }
  return std::clamp(acc, a_min, a_max);
}

struct CollisionPair {
  int a = -1;
  int b = -1;
};

// Overlapping same-lane pairs (highway) or loop-gap / conflict-zone pairs
// (figure-eight). Each colliding pair appears once.
inline std::vector<CollisionPair> detect_collisions(const std::vector<VehicleState>& vehicles,
                                                    const ScenarioConfig& cfg) {
  std::vector<CollisionPair> out;
  const double len = cfg.vehicle_length_m;
  if (cfg.scenario == Scenario::kHighwayRamping) {
    for (std::size_t i = 0; i < vehicles.size(); ++i) {
      for (std::size_t j = i + 1; j < vehicles.size(); ++j) {
        const auto& a = vehicles[i];
        const auto& b = vehicles[j];
        if (!a.alive || !b.alive || a.lane != b.lane) continue;
        if (std::abs(a.pos_m - b.pos_m) - len <= 0.0) out.push_back({a.id, b.id});
      }
    }
    return out;
  }
  const double loop = cfg.loop_length_m();
  auto wrapped_gap = [&](double behind, double ahead) {
    double d = ahead - behind;
    if (d < 0.0) d += loop;
    return d - len;
  };
  // rear-end: consecutive vehicles along the loop
  std::vector<const VehicleState*> order;
  for (const auto& v : vehicles)
    if (v.alive) order.push_back(&v);
  std::sort(order.begin(), order.end(), [](const VehicleState* a, const VehicleState* b) {
    return a->pos_m == b->pos_m ? a->id < b->id : a->pos_m < b->pos_m;
  });
  for (std::size_t i = 0; i + 1 < order.size(); ++i)
    if (wrapped_gap(order[i]->pos_m, order[i + 1]->pos_m) <= 0.0)
      out.push_back({order[i]->id, order[i + 1]->id});
  if (order.size() >= 2) {
    if (wrapped_gap(order.back()->pos_m, order.front()->pos_m) <= 0.0)
      out.push_back({order.back()->id, order.front()->id});
  }
  // conflict zone: one vehicle at each image of the crossing point
  const double half_zone = 0.5 * cfg.conflict_zone_length_m;
  auto in_zone = [&](double s, double center) {
    double d = std::abs(s - center);
    d = std::min(d, loop - d);
    return d <= half_zone;
  };
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = 0; j < order.size(); ++j) {
      if (i == j) continue;
      if (order[i]->id >= order[j]->id) continue;  // once per pair
      const bool cross = (in_zone(order[i]->pos_m, cfg.conflict_center_a()) &&
                          in_zone(order[j]->pos_m, cfg.conflict_center_b())) ||
                         (in_zone(order[i]->pos_m, cfg.conflict_center_b()) &&
                          in_zone(order[j]->pos_m, cfg.conflict_center_a()));
      if (cross) out.push_back({order[i]->id, order[j]->id});
    }
  }
  return out;
}

struct Neighborhood {
  std::optional<double> leader_gap;      // bumper gap to leader in a lane
  std::optional<double> leader_speed;
  std::optional<double> follower_gap;    // bumper gap back to follower
  std::optional<double> follower_speed;
};

inline Neighborhood lane_neighborhood(const std::vector<VehicleState>& vehicles, double pos, int lane,
                                      int self_id, double vehicle_length) {
  Neighborhood n;
  for (const auto& v : vehicles) {
    if (!v.alive || v.id == self_id || v.lane != lane) continue;
    if (v.pos_m >= pos) {
      const double gap = v.pos_m - pos - vehicle_length;
      if (!n.leader_gap || gap < *n.leader_gap) {
        n.leader_gap = gap;
        n.leader_speed = v.speed_mps;
      }
    } else {
      const double gap = pos - v.pos_m - vehicle_length;
      if (!n.follower_gap || gap < *n.follower_gap) {
        n.follower_gap = gap;
        n.follower_speed = v.speed_mps;
      }
    }
  }
  return n;
}

// Gap-acceptance lane choice for HVs: move toward a lane whose leader gap
// beats the current one by the hysteresis margin, with a safe follower gap.
inline LaneCommand hv_lane_change_decision(const VehicleState& vehicle,
                                           const std::vector<VehicleState>& vehicles,
                                           const ScenarioConfig& cfg) {
  require(vehicle.kind == VehicleKind::kHV, "hv_lane_change_decision: vehicle is not an HV");
  constexpr double kOpenRoad = 1e18;
  const auto cur = lane_neighborhood(vehicles, vehicle.pos_m, vehicle.lane, vehicle.id, cfg.vehicle_length_m);
  const double cur_gap = cur.leader_gap.value_or(kOpenRoad);

  double best_gap = cur_gap + cfg.lc_hysteresis_m;
  LaneCommand best = kCmdStraight;
  for (int dl : {-1, +1}) {
    const int target = vehicle.lane + dl;
    if (target < 0 || target >= cfg.lane_count) continue;
    const auto t = lane_neighborhood(vehicles, vehicle.pos_m, target, vehicle.id, cfg.vehicle_length_m);
    const double lead_gap = t.leader_gap.value_or(kOpenRoad);
    const double follow_gap = t.follower_gap.value_or(kOpenRoad);
    const double safe_gap = cfg.idm.s0 + t.follower_speed.value_or(0.0) * cfg.idm.T;
    if (follow_gap < safe_gap) continue;        // safety veto
    if (lead_gap <= best_gap) continue;         // incentive + hysteresis
    best_gap = lead_gap;
    best = dl < 0 ? kCmdLeft : kCmdRight;
  }
  return best;
}

// Virtual stopped leader at the conflict-zone entry for yielding vehicles.
struct VirtualLeader {
  int vehicle_id = -1;
  double gap_m = 0.0;
};

// Figure-eight right-of-way: among vehicles approaching the crossing from
// the two rings, the earliest arrival has priority; approachers from the
// other ring yield. Vehicles on the same ring are never assigned leaders.
inline std::vector<VirtualLeader> right_of_way_controller(const std::vector<VehicleState>& vehicles,
                                                          const ScenarioConfig& cfg) {
  require(cfg.scenario == Scenario::kFigureEight, "right_of_way_controller: figure-eight only");
  const double loop = cfg.loop_length_m();
  const double half_zone = 0.5 * cfg.conflict_zone_length_m;
  auto forward_dist = [&](double from, double to) {
    double d = to - from;
    if (d < 0.0) d += loop;
    return d;
  };
  struct Candidate {
    int id;
    int zone;         // 0 = image A, 1 = image B
    double dist;      // forward distance to zone entry (0 if inside)
    double time;
    bool is_av;
  };
  std::vector<Candidate> cands;
  const double centers[2] = {cfg.conflict_center_a(), cfg.conflict_center_b()};
  const double entries[2] = {centers[0] - half_zone, centers[1] - half_zone};
  auto circular_off = [&](double s, double center) {
    double off = std::abs(s - center);
    return std::min(off, loop - off);
  };
  for (const auto& v : vehicles) {
    if (!v.alive) continue;
    int zone = -1;
    double dist = 0.0;
    if (circular_off(v.pos_m, centers[0]) <= half_zone) {
      zone = 0;  // inside image A: highest priority
    } else if (circular_off(v.pos_m, centers[1]) <= half_zone) {
      zone = 1;
    } else {
      const double da = forward_dist(v.pos_m, entries[0]);
      const double db = forward_dist(v.pos_m, entries[1]);
      zone = da <= db ? 0 : 1;
      dist = std::min(da, db);
      if (dist > cfg.right_of_way_window_m) continue;
    }
    cands.push_back({v.id, zone, dist, dist / std::max(v.speed_mps, 0.1), kind_is_av(v.kind)});
  }
  if (cands.size() < 2) return {};
  bool both_zones[2] = {false, false};
  for (const auto& c : cands) both_zones[c.zone] = true;
  if (!(both_zones[0] && both_zones[1])) return {};
  const Candidate* first = &cands.front();
  for (const auto& c : cands)
    if (c.time < first->time || (c.time == first->time && c.id < first->id)) first = &c;
  std::vector<VirtualLeader> out;
  for (const auto& c : cands) {
    if (c.zone == first->zone) continue;
    if (c.is_av) continue;  // AV longitudinal control stays with the policy
    out.push_back({c.id, std::max(c.dist, 0.05)});
  }
  return out;
}

// Deterministic microscopic simulator for both scenarios. One instance is
// single-threaded; run-level parallelism uses independent instances.
class Simulator {
 public:
  explicit Simulator(ScenarioConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const ScenarioConfig& config() const { return cfg_; }
  const std::vector<VehicleState>& vehicles() const { return vehicles_; }
  int step_index() const { return step_index_; }

  int alive_count(bool avs) const {
    int c = 0;
    for (const auto& v : vehicles_)
      if (v.alive && kind_is_av(v.kind) == avs) ++c;
    return c;
  }

  // Places a vehicle directly; used for scripted starts and tests.
  void add_vehicle(VehicleState v) {
    require(v.id >= 0, "add_vehicle: id must be non-negative");
    for (const auto& o : vehicles_)
      require(o.id != v.id, "add_vehicle: duplicate id " + std::to_string(v.id));
    next_id_ = std::max(next_id_, v.id + 1);
    vehicles_.push_back(v);
    update_intentions();
  }

  void reset(Rng& rng) {
    vehicles_.clear();
    next_id_ = 0;
    step_index_ = 0;
    next_av_ramp1_ = true;
    overlapping_.clear();
    if (cfg_.scenario == Scenario::kFigureEight) {
      const int total = cfg_.total_slots();
      const double spacing = cfg_.loop_length_m() / std::max(total, 1);
      int hv_left = cfg_.max_hvs, av_left = cfg_.max_avs;
      for (int i = 0; i < total; ++i) {
        VehicleState v;
        v.id = next_id_++;
        // alternate HV/AV around the loop while quotas last
        const bool want_hv = (i % 2 == 0);
        if ((want_hv && hv_left > 0) || av_left == 0) {
          v.kind = VehicleKind::kHV;
          --hv_left;
        } else {
          v.kind = VehicleKind::kAvGeneric;
          --av_left;
        }
        v.lane = 0;
        v.pos_m = wrap_pos(i * spacing + rng.uniform(-2.0, 2.0));
        v.speed_mps = 0.0;
        vehicles_.push_back(v);
      }
    }
    update_intentions();
  }

  // Advances one physics step. av_actions must cover exactly the alive AVs:
  // lane commands (0/1/2) in the highway scenario, accelerations in
  // [a_min, a_max] in the figure-eight scenario.
  SimEvents step(const std::map<int, double>& av_actions, Rng& spawn_rng) {
    check_action_cover(av_actions);
    SimEvents events;
    if (cfg_.scenario == Scenario::kHighwayRamping)
      step_highway(av_actions, spawn_rng, events);
    else
      step_figure_eight(av_actions, events);
    ++step_index_;
    update_intentions();
    return events;
  }

 private:
  void check_action_cover(const std::map<int, double>& av_actions) const {
    std::size_t alive_avs = 0;
    for (const auto& v : vehicles_) {
      if (!v.alive || !kind_is_av(v.kind)) continue;
      ++alive_avs;
      if (!av_actions.count(v.id))
        throw ContractViolation("step: missing action for alive AV id " + std::to_string(v.id));
    }
    if (av_actions.size() != alive_avs) {
      for (const auto& [id, act] : av_actions) {
        (void)act;
        const auto* v = find(id);
        if (!v || !v->alive || !kind_is_av(v->kind))
          throw ContractViolation("step: action for dead or unknown vehicle id " + std::to_string(id));
      }
      throw ContractViolation("step: duplicate or mismatched AV action set");
    }
  }

  const VehicleState* find(int id) const {
    for (const auto& v : vehicles_)
      if (v.id == id) return &v;
    return nullptr;
  }

  double wrap_pos(double s) const {
    const double loop = cfg_.loop_length_m();
    s = std::fmod(s, loop);
    if (s < 0.0) s += loop;
    return s;
  }

  IdmParams idm_for(const VehicleState& v) const {
    IdmParams p = cfg_.idm;
    p.v0 = cfg_.speed_limit(v.kind);
    return p;
  }

  void integrate(VehicleState& v, double acc) {
    v.pos_m += v.speed_mps * cfg_.dt_s;
    v.speed_mps = std::clamp(v.speed_mps + acc * cfg_.dt_s, 0.0, cfg_.speed_limit(v.kind));
  }

  void update_intentions() {
    for (auto& v : vehicles_) {
      if (!v.alive) continue;
      if (cfg_.scenario == Scenario::kFigureEight || v.kind == VehicleKind::kHV ||
          v.kind == VehicleKind::kAvGeneric) {
        v.intention = Intention::kStraight;
        continue;
      }
      const int rightmost = cfg_.lane_count - 1;
      int preferred = rightmost;
      if (v.kind == VehicleKind::kAvRamp2 && v.pos_m < cfg_.ramp1_pos_m)
        preferred = std::max(cfg_.lane_count / 2, 0);  // middle lane until Ramp 1 is passed
      v.intention = v.lane < preferred   ? Intention::kRight
                    : v.lane > preferred ? Intention::kLeft
                                         : Intention::kStraight;
    }
  }

  void step_highway(const std::map<int, double>& av_actions, Rng& spawn_rng, SimEvents& events) {
    // AV lane commands (instantaneous lateral model)
    for (auto& v : vehicles_) {
      if (!v.alive || !kind_is_av(v.kind)) continue;
      const int cmd = static_cast<int>(av_actions.at(v.id));
      int target = v.lane;
      if (cmd == kCmdLeft) target = v.lane - 1;
      if (cmd == kCmdRight) target = v.lane + 1;
      if (target != v.lane && target >= 0 && target < cfg_.lane_count) {
        v.lane = target;
        ++events.lane_changes_by_avs;
      }
    }
    // HV lane changes, sequential in id order
    for (auto& v : vehicles_) {
      if (!v.alive || v.kind != VehicleKind::kHV) continue;
      const LaneCommand cmd = hv_lane_change_decision(v, vehicles_, cfg_);
      if (cmd == kCmdLeft) v.lane -= 1;
      if (cmd == kCmdRight) v.lane += 1;
    }
    // longitudinal IDM for everyone
    std::vector<double> acc(vehicles_.size(), 0.0);
    std::vector<double> prev_pos(vehicles_.size(), 0.0);
    for (std::size_t i = 0; i < vehicles_.size(); ++i) {
      auto& v = vehicles_[i];
      prev_pos[i] = v.pos_m;
      if (!v.alive) continue;
      const auto n = lane_neighborhood(vehicles_, v.pos_m, v.lane, v.id, cfg_.vehicle_length_m);
      acc[i] = idm_acceleration(v.speed_mps, n.leader_speed, n.leader_gap, idm_for(v), cfg_.a_min,
                                cfg_.a_max);
    }
    for (std::size_t i = 0; i < vehicles_.size(); ++i)
      if (vehicles_[i].alive) integrate(vehicles_[i], acc[i]);

    // route exits; a ramp is taken only while crossing it in the exit lane
    for (std::size_t i = 0; i < vehicles_.size(); ++i) {
      auto& v = vehicles_[i];
      if (!v.alive) continue;
      const int rightmost = cfg_.lane_count - 1;
      if (v.kind == VehicleKind::kAvRamp1 && v.lane == rightmost && v.pos_m >= cfg_.ramp1_pos_m &&
          prev_pos[i] < cfg_.ramp1_pos_m) {
        v.alive = false;
        events.exits.push_back({v.id, ExitPoint::kRamp1, v.kind});
      } else if (v.kind == VehicleKind::kAvRamp2 && v.lane == rightmost &&
                 v.pos_m >= cfg_.ramp2_pos_m && prev_pos[i] < cfg_.ramp2_pos_m) {
        v.alive = false;
        events.exits.push_back({v.id, ExitPoint::kRamp2, v.kind});
      } else if (v.pos_m >= cfg_.highway_length_m) {
        v.alive = false;
        events.exits.push_back({v.id, ExitPoint::kMain, v.kind});
      }
    }

    // collisions: remove the pair, count once
    const auto pairs = detect_collisions(alive_view(), cfg_);
    events.collisions += static_cast<int>(pairs.size());
    for (const auto& p : pairs) {
      for (auto& v : vehicles_) {
        if ((v.id == p.a || v.id == p.b) && v.alive) {
          v.alive = false;
          events.collision_removals.push_back(v.id);
        }
      }
    }

    compact();
    spawn_inflow(spawn_rng, events);
  }

  void step_figure_eight(const std::map<int, double>& av_actions, SimEvents& events) {
    const auto virtual_leaders = right_of_way_controller(vehicles_, cfg_);
    const double loop = cfg_.loop_length_m();
    std::vector<double> acc(vehicles_.size(), 0.0);
    for (std::size_t i = 0; i < vehicles_.size(); ++i) {
      auto& v = vehicles_[i];
      if (!v.alive) continue;
      if (kind_is_av(v.kind)) {
        acc[i] = std::clamp(av_actions.at(v.id), cfg_.a_min, cfg_.a_max);
        continue;
      }
      // nearest leader along the loop
      std::optional<double> gap, lead_speed;
      for (const auto& o : vehicles_) {
        if (!o.alive || o.id == v.id) continue;
        double d = o.pos_m - v.pos_m;
        if (d <= 0.0) d += loop;
        const double g = d - cfg_.vehicle_length_m;
        if (!gap || g < *gap) {
          gap = g;
          lead_speed = o.speed_mps;
        }
      }
      double a = idm_acceleration(v.speed_mps, lead_speed, gap, idm_for(v), cfg_.a_min, cfg_.a_max);
      for (const auto& vl : virtual_leaders) {
        if (vl.vehicle_id != v.id) continue;
        const double a_yield =
            idm_acceleration(v.speed_mps, 0.0, vl.gap_m, idm_for(v), cfg_.a_min, cfg_.a_max);
        a = std::min(a, a_yield);
      }
      acc[i] = a;
    }
    for (std::size_t i = 0; i < vehicles_.size(); ++i) {
      auto& v = vehicles_[i];
      if (!v.alive) continue;
      integrate(v, acc[i]);
      v.pos_m = wrap_pos(v.pos_m);
    }
    // count new contacts only; the closed loop keeps its vehicles, and the
    // negative-gap IDM response separates overlapping pairs by itself
    const auto pairs = detect_collisions(vehicles_, cfg_);
    std::vector<std::pair<int, int>> now;
    for (const auto& p : pairs) now.emplace_back(std::min(p.a, p.b), std::max(p.a, p.b));
    std::sort(now.begin(), now.end());
    for (const auto& pr : now)
      if (!std::binary_search(overlapping_.begin(), overlapping_.end(), pr)) ++events.collisions;
    overlapping_ = std::move(now);
  }

  std::vector<VehicleState> alive_view() const {
    std::vector<VehicleState> out;
    for (const auto& v : vehicles_)
      if (v.alive) out.push_back(v);
    return out;
  }

  void compact() {
    vehicles_.erase(std::remove_if(vehicles_.begin(), vehicles_.end(),
                                   [](const VehicleState& v) { return !v.alive; }),
                    vehicles_.end());
  }

  // Bernoulli-per-step arrivals, capacity-bounded, with a clear spawn gap.
  // Draws are always consumed so the stream does not depend on occupancy.
  void spawn_inflow(Rng& rng, SimEvents& events) {
    const bool hv_draw = rng.bernoulli(cfg_.inflow_hv_vps * cfg_.dt_s);
    if (hv_draw && alive_count(false) < cfg_.max_hvs) try_spawn(VehicleKind::kHV, rng, events);
    const bool av_draw = rng.bernoulli(cfg_.inflow_av_vps * cfg_.dt_s);
    if (av_draw && alive_count(true) < cfg_.max_avs) {
      const VehicleKind kind = next_av_ramp1_ ? VehicleKind::kAvRamp1 : VehicleKind::kAvRamp2;
      if (try_spawn(kind, rng, events)) next_av_ramp1_ = !next_av_ramp1_;
    }
  }

  bool try_spawn(VehicleKind kind, Rng& rng, SimEvents& events) {
    std::vector<int> clear;
    for (int lane = 0; lane < cfg_.lane_count; ++lane) {
      bool ok = true;
      for (const auto& v : vehicles_)
        if (v.alive && v.lane == lane && v.pos_m < cfg_.spawn_clear_gap_m) ok = false;
      if (ok) clear.push_back(lane);
    }
    if (clear.empty()) return false;
    VehicleState v;
    v.id = next_id_++;
    v.kind = kind;
    v.lane = clear[rng.uniform_int(clear.size())];
    v.pos_m = 0.0;
    v.speed_mps = std::min(cfg_.spawn_speed_mps, cfg_.speed_limit(kind));
    vehicles_.push_back(v);
    events.spawns.push_back(v.id);
    return true;
  }

  ScenarioConfig cfg_;
  std::vector<VehicleState> vehicles_;
  int next_id_ = 0;
  int step_index_ = 0;
  bool next_av_ramp1_ = true;
  std::vector<std::pair<int, int>> overlapping_;
};

}  // namespace gcav
