#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gcav/algo.hpp"
#include "gcav/encoder.hpp"
#include "gcav/reward.hpp"
#include "gcav/sim.hpp"

namespace gcav {

struct RunConfig {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  int epochs = 150;
  int episodes_per_epoch = 10;
  int horizon_steps = 600;
  std::string out_dir = "out";
  int checkpoint_every = 0;  // epochs; 0 = final checkpoint only
  bool trace = false;
  int eval_episodes = 10;
};

// Full declarative description of one run. File format: one `key = value`
// per line with dotted key paths; '#' starts a comment. Command-line
// overrides apply after file values.
struct ExperimentConfig {
  ScenarioConfig scenario;
  RewardWeights reward;
  EncoderKind encoder_kind = EncoderKind::kGcn;
  int encoder_hidden = 32;
  int encoder_layers = 2;
  AlgoConfig algo;
  RunConfig run;

  std::vector<int> encoder_widths() const {
    return std::vector<int>(static_cast<std::size_t>(encoder_layers), encoder_hidden);
  }

  // Scenario config with run-level fields folded in.
  ScenarioConfig scenario_resolved() const {
    ScenarioConfig s = scenario;
    s.horizon_steps = run.horizon_steps;
    return s;
  }

  // Algorithm config with scenario-derived fields folded in.
  AlgoConfig algo_resolved() const {
    AlgoConfig a = algo;
    a.continuous = scenario.scenario == Scenario::kFigureEight;
    a.action_count = 3;
    a.a_min = scenario.a_min;
    a.a_max = scenario.a_max;
    const long decisions = static_cast<long>(run.epochs) * run.episodes_per_epoch *
                           (run.horizon_steps / scenario.decision_period_steps);
    a.total_decisions_hint = std::max(decisions, 1L);
    return a;
  }

  void validate() const {
    scenario_resolved().validate();
    reward.validate();
    algo_resolved().validate();
    if (encoder_hidden <= 0) throw ConfigError("encoder.hidden_width: must be positive");
    if (encoder_layers <= 0) throw ConfigError("encoder.layers: must be positive");
    if (run.epochs < 0) throw ConfigError("run.epochs: must be >= 0");
    if (run.episodes_per_epoch <= 0) throw ConfigError("run.episodes_per_epoch: must be positive");
    if (run.seeds.empty()) throw ConfigError("run.seeds: at least one seed required");
    if (run.eval_episodes < 0) throw ConfigError("run.eval_episodes: must be >= 0");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::map<std::string, std::string> parse_kv_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    kv[key] = value;
  }
  return kv;
}

// Typed reads that consume keys; leftovers are reported as unknown.
class KeyReader {
 public:
  explicit KeyReader(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string str(const std::string& key, const std::string& fallback) {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    consumed_.insert(key);
    return it->second;
  }

  double num(const std::string& key, double fallback) {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    consumed_.insert(key);
    char* end = nullptr;
    const double v = std::strtod(it->second.c_str(), &end);
    if (end == it->second.c_str() || *end != '\0')
      throw ConfigError(key + ": expected a number, got '" + it->second + "'");
    return v;
  }

  int integer(const std::string& key, int fallback) {
    const double v = num(key, static_cast<double>(fallback));
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v)
      throw ConfigError(key + ": expected an integer");
    return i;
  }

  bool flag(const std::string& key, bool fallback) {
    const auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    consumed_.insert(key);
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError(key + ": expected true/false, got '" + it->second + "'");
  }

  void finish() const {
    for (const auto& [key, value] : kv_) {
      (void)value;
      if (!consumed_.count(key)) throw ConfigError(key + ": unknown configuration key");
    }
  }

 private:
  std::map<std::string, std::string> kv_;
  std::set<std::string> consumed_;
};

}  // namespace detail

inline ExperimentConfig config_from_map(std::map<std::string, std::string> kv) {
  detail::KeyReader r(std::move(kv));
  ExperimentConfig c;

  const std::string scen = r.str("scenario.scenario", "highway_ramping");
  if (scen == "highway_ramping")
    c.scenario = ScenarioConfig::highway_defaults();
  else if (scen == "figure_eight")
    c.scenario = ScenarioConfig::figure_eight_defaults();
  else
    throw ConfigError("scenario.scenario: expected highway_ramping or figure_eight, got '" + scen + "'");

  auto& s = c.scenario;
  s.max_hvs = r.integer("scenario.max_hvs", s.max_hvs);
  s.max_avs = r.integer("scenario.max_avs", s.max_avs);
  s.lane_count = r.integer("scenario.lane_count", s.lane_count);
  s.highway_length_m = r.num("scenario.highway_length_m", s.highway_length_m);
  s.ramp1_pos_m = r.num("scenario.ramp1_pos_m", s.ramp1_pos_m);
  s.ramp2_pos_m = r.num("scenario.ramp2_pos_m", s.ramp2_pos_m);
  s.ring_radius_m = r.num("scenario.ring_radius_m", s.ring_radius_m);
  s.v_max_hv_mps = r.num("scenario.v_max_hv_kmh", s.v_max_hv_mps / kKmhToMs) * kKmhToMs;
  s.v_max_av_mps = r.num("scenario.v_max_av_kmh", s.v_max_av_mps / kKmhToMs) * kKmhToMs;
  s.v_desired_mps = r.num("scenario.v_desired_kmh", s.v_desired_mps / kKmhToMs) * kKmhToMs;
  s.a_min = r.num("scenario.a_min", s.a_min);
  s.a_max = r.num("scenario.a_max", s.a_max);
  s.inflow_hv_vps = r.num("scenario.inflow_hv_vps", s.inflow_hv_vps);
  s.inflow_av_vps = r.num("scenario.inflow_av_vps", s.inflow_av_vps);
  s.dt_s = r.num("scenario.dt_s", s.dt_s);
  s.decision_period_steps = r.integer("scenario.decision_period_steps", s.decision_period_steps);
  s.sensing_range_m = r.num("scenario.sensing_range_m", s.sensing_range_m);
  s.vehicle_length_m = r.num("scenario.vehicle_length_m", s.vehicle_length_m);
  s.spawn_speed_mps = r.num("scenario.spawn_speed_mps", s.spawn_speed_mps);
  s.spawn_clear_gap_m = r.num("scenario.spawn_clear_gap_m", s.spawn_clear_gap_m);
  s.idm.v0 = r.num("scenario.idm_v0_mps", s.idm.v0);
  s.idm.T = r.num("scenario.idm_T_s", s.idm.T);
  s.idm.s0 = r.num("scenario.idm_s0_m", s.idm.s0);
  s.idm.a = r.num("scenario.idm_a", s.idm.a);
  s.idm.b = r.num("scenario.idm_b", s.idm.b);
  s.idm.delta = r.num("scenario.idm_delta", s.idm.delta);

  c.reward.w1 = r.num("reward.w1", c.reward.w1);
  c.reward.w2 = r.num("reward.w2", c.reward.w2);
  c.reward.w3 = r.num("reward.w3", c.reward.w3);
  c.reward.w4 = r.num("reward.w4", c.reward.w4);

  const std::string enc = r.str("encoder.kind", "gcn");
  if (enc == "gcn")
    c.encoder_kind = EncoderKind::kGcn;
  else if (enc == "flat")
    c.encoder_kind = EncoderKind::kFlat;
  else
    throw ConfigError("encoder.kind: expected gcn or flat, got '" + enc + "'");
  c.encoder_hidden = r.integer("encoder.hidden_width", c.encoder_hidden);
  c.encoder_layers = r.integer("encoder.layers", c.encoder_layers);

  const std::string algo = r.str("algorithm.id", "dqn");
  const auto id = algorithm_from_string(algo);
  if (!id) throw ConfigError("algorithm.id: unknown algorithm '" + algo + "'");
  c.algo.algorithm = *id;
  c.algo.gamma = r.num("algorithm.gamma", c.algo.gamma);
  c.algo.lr = r.num("algorithm.lr", c.algo.lr);
  c.algo.batch_size = r.integer("algorithm.batch_size", c.algo.batch_size);
  c.algo.replay_capacity = r.integer("algorithm.replay_capacity", c.algo.replay_capacity);
  c.algo.warmup = r.integer("algorithm.warmup", c.algo.warmup);
  c.algo.update_every = r.integer("algorithm.update_every", c.algo.update_every);
  c.algo.target_update_period = r.integer("algorithm.target_update_period", c.algo.target_update_period);
  c.algo.tau = r.num("algorithm.tau", c.algo.tau);
  c.algo.eps_start = r.num("algorithm.eps_start", c.algo.eps_start);
  c.algo.eps_end = r.num("algorithm.eps_end", c.algo.eps_end);
  c.algo.eps_fraction = r.num("algorithm.eps_fraction", c.algo.eps_fraction);
  c.algo.per_alpha = r.num("algorithm.per_alpha", c.algo.per_alpha);
  c.algo.per_beta = r.num("algorithm.per_beta", c.algo.per_beta);
  c.algo.ppo_clip = r.num("algorithm.ppo_clip", c.algo.ppo_clip);
  c.algo.ppo_epochs = r.integer("algorithm.ppo_epochs", c.algo.ppo_epochs);
  c.algo.gae_lambda = r.num("algorithm.gae_lambda", c.algo.gae_lambda);
  c.algo.a2c_nsteps = r.integer("algorithm.a2c_nsteps", c.algo.a2c_nsteps);
  c.algo.entropy_coef = r.num("algorithm.entropy_coef", c.algo.entropy_coef);
  c.algo.action_noise = r.num("algorithm.action_noise", c.algo.action_noise);
  c.algo.td3_delay = r.integer("algorithm.td3_delay", c.algo.td3_delay);
  c.algo.td3_target_noise = r.num("algorithm.td3_target_noise", c.algo.td3_target_noise);
  c.algo.td3_noise_clip = r.num("algorithm.td3_noise_clip", c.algo.td3_noise_clip);
  c.algo.grad_clip_norm = r.num("algorithm.grad_clip_norm", c.algo.grad_clip_norm);
  c.algo.normalize_returns = r.flag("algorithm.normalize_returns", c.algo.normalize_returns);

  const std::string seeds = r.str("run.seeds", "0,1,2");
  c.run.seeds.clear();
  std::istringstream ss(seeds);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = detail::trim(tok);
    if (tok.empty()) continue;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
    if (end == tok.c_str() || *end != '\0')
      throw ConfigError("run.seeds: expected comma-separated integers, got '" + seeds + "'");
    c.run.seeds.push_back(v);
  }
  c.run.epochs = r.integer("run.epochs", c.run.epochs);
  c.run.episodes_per_epoch = r.integer("run.episodes_per_epoch", c.run.episodes_per_epoch);
  c.run.horizon_steps = r.integer("run.horizon_steps", c.run.horizon_steps);
  c.run.out_dir = r.str("run.out_dir", c.run.out_dir);
  c.run.checkpoint_every = r.integer("run.checkpoint_every", c.run.checkpoint_every);
  c.run.trace = r.flag("run.trace", c.run.trace);
  c.run.eval_episodes = r.integer("run.eval_episodes", c.run.eval_episodes);

  r.finish();
  c.validate();
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text,
                                          const std::vector<std::string>& overrides = {}) {
  auto kv = detail::parse_kv_text(text);
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override '" + ov + "': expected key=value");
    kv[detail::trim(ov.substr(0, eq))] = detail::trim(ov.substr(eq + 1));
  }
  return config_from_map(std::move(kv));
}

inline ExperimentConfig parse_config(const std::string& path,
                                     const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), overrides);
}

namespace detail {

inline std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Canonical sorted `key = value` rendering; parse(serialize(c)) == c.
inline std::string serialize_config(const ExperimentConfig& c) {
  std::map<std::string, std::string> kv;
  const auto& s = c.scenario;
  kv["scenario.scenario"] =
      s.scenario == Scenario::kHighwayRamping ? "highway_ramping" : "figure_eight";
  kv["scenario.max_hvs"] = std::to_string(s.max_hvs);
  kv["scenario.max_avs"] = std::to_string(s.max_avs);
  kv["scenario.lane_count"] = std::to_string(s.lane_count);
  kv["scenario.highway_length_m"] = detail::fmt_num(s.highway_length_m);
  kv["scenario.ramp1_pos_m"] = detail::fmt_num(s.ramp1_pos_m);
  kv["scenario.ramp2_pos_m"] = detail::fmt_num(s.ramp2_pos_m);
  kv["scenario.ring_radius_m"] = detail::fmt_num(s.ring_radius_m);
  kv["scenario.v_max_hv_kmh"] = detail::fmt_num(s.v_max_hv_mps / kKmhToMs);
  kv["scenario.v_max_av_kmh"] = detail::fmt_num(s.v_max_av_mps / kKmhToMs);
  kv["scenario.v_desired_kmh"] = detail::fmt_num(s.v_desired_mps / kKmhToMs);
  kv["scenario.a_min"] = detail::fmt_num(s.a_min);
  kv["scenario.a_max"] = detail::fmt_num(s.a_max);
  kv["scenario.inflow_hv_vps"] = detail::fmt_num(s.inflow_hv_vps);
  kv["scenario.inflow_av_vps"] = detail::fmt_num(s.inflow_av_vps);
  kv["scenario.dt_s"] = detail::fmt_num(s.dt_s);
  kv["scenario.decision_period_steps"] = std::to_string(s.decision_period_steps);
  kv["scenario.sensing_range_m"] = detail::fmt_num(s.sensing_range_m);
  kv["scenario.vehicle_length_m"] = detail::fmt_num(s.vehicle_length_m);
  kv["scenario.spawn_speed_mps"] = detail::fmt_num(s.spawn_speed_mps);
  kv["scenario.spawn_clear_gap_m"] = detail::fmt_num(s.spawn_clear_gap_m);
  kv["scenario.idm_v0_mps"] = detail::fmt_num(s.idm.v0);
  kv["scenario.idm_T_s"] = detail::fmt_num(s.idm.T);
  kv["scenario.idm_s0_m"] = detail::fmt_num(s.idm.s0);
  kv["scenario.idm_a"] = detail::fmt_num(s.idm.a);
  kv["scenario.idm_b"] = detail::fmt_num(s.idm.b);
  kv["scenario.idm_delta"] = detail::fmt_num(s.idm.delta);
  kv["reward.w1"] = detail::fmt_num(c.reward.w1);
  kv["reward.w2"] = detail::fmt_num(c.reward.w2);
  kv["reward.w3"] = detail::fmt_num(c.reward.w3);
  kv["reward.w4"] = detail::fmt_num(c.reward.w4);
  kv["encoder.kind"] = c.encoder_kind == EncoderKind::kGcn ? "gcn" : "flat";
  kv["encoder.hidden_width"] = std::to_string(c.encoder_hidden);
  kv["encoder.layers"] = std::to_string(c.encoder_layers);
  kv["algorithm.id"] = to_string(c.algo.algorithm);
  kv["algorithm.gamma"] = detail::fmt_num(c.algo.gamma);
  kv["algorithm.lr"] = detail::fmt_num(c.algo.lr);
  kv["algorithm.batch_size"] = std::to_string(c.algo.batch_size);
  kv["algorithm.replay_capacity"] = std::to_string(c.algo.replay_capacity);
  kv["algorithm.warmup"] = std::to_string(c.algo.warmup);
  kv["algorithm.update_every"] = std::to_string(c.algo.update_every);
  kv["algorithm.target_update_period"] = std::to_string(c.algo.target_update_period);
  kv["algorithm.tau"] = detail::fmt_num(c.algo.tau);
  kv["algorithm.eps_start"] = detail::fmt_num(c.algo.eps_start);
  kv["algorithm.eps_end"] = detail::fmt_num(c.algo.eps_end);
  kv["algorithm.eps_fraction"] = detail::fmt_num(c.algo.eps_fraction);
  kv["algorithm.per_alpha"] = detail::fmt_num(c.algo.per_alpha);
  kv["algorithm.per_beta"] = detail::fmt_num(c.algo.per_beta);
  kv["algorithm.ppo_clip"] = detail::fmt_num(c.algo.ppo_clip);
  kv["algorithm.ppo_epochs"] = std::to_string(c.algo.ppo_epochs);
  kv["algorithm.gae_lambda"] = detail::fmt_num(c.algo.gae_lambda);
  kv["algorithm.a2c_nsteps"] = std::to_string(c.algo.a2c_nsteps);
  kv["algorithm.entropy_coef"] = detail::fmt_num(c.algo.entropy_coef);
  kv["algorithm.action_noise"] = detail::fmt_num(c.algo.action_noise);
  kv["algorithm.td3_delay"] = std::to_string(c.algo.td3_delay);
  kv["algorithm.td3_target_noise"] = detail::fmt_num(c.algo.td3_target_noise);
  kv["algorithm.td3_noise_clip"] = detail::fmt_num(c.algo.td3_noise_clip);
  kv["algorithm.grad_clip_norm"] = detail::fmt_num(c.algo.grad_clip_norm);
  kv["algorithm.normalize_returns"] = c.algo.normalize_returns ? "true" : "false";
  std::string seeds;
  for (std::size_t i = 0; i < c.run.seeds.size(); ++i)
    seeds += (i ? "," : "") + std::to_string(c.run.seeds[i]);
  kv["run.seeds"] = seeds;
  kv["run.epochs"] = std::to_string(c.run.epochs);
  kv["run.episodes_per_epoch"] = std::to_string(c.run.episodes_per_epoch);
  kv["run.horizon_steps"] = std::to_string(c.run.horizon_steps);
  kv["run.out_dir"] = c.run.out_dir;
  kv["run.checkpoint_every"] = std::to_string(c.run.checkpoint_every);
  kv["run.trace"] = c.run.trace ? "true" : "false";
  kv["run.eval_episodes"] = std::to_string(c.run.eval_episodes);

  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

inline std::string config_fingerprint(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(serialize_config(c))));
  return buf;
}

}  // namespace gcav
