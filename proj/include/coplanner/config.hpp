#pragma once

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "coplanner/denoise.hpp"
#include "coplanner/errors.hpp"
#include "coplanner/planner.hpp"
#include "coplanner/sim.hpp"

namespace coplanner {

// Effective run configuration: built-in defaults overlaid with the config
// file. Every paper-named constant (K, N, t_b, T, H, dropout) is a key here.
struct RunConfig {
  ScheduleParams schedule;          // H = 200, beta in [1e-4, 2e-2]
  double dt = 0.1;
  int horizon_steps = 80;           // T = 8 s at 10 Hz
  int t_b_steps = 40;               // t_b = 4 s
  int history_steps = 21;           // 2 s of history, endpoints inclusive
  int K = 3;
  int N = 3;
  ScoreWeights score;
  double replan_period = 1.0;
  double emergency_decel = -3.5;
  KinematicParams kinematics;
  EncoderConfig encoder;
  int model_width = 256;
  int model_blocks = 3;
  int time_embed_dim = 32;
  TrainConfig train;
  std::string clips_path = "runs/clips.jsonl";
  int episodes_per_family = 20;
  int clip_stride = 10;
  std::string shared_checkpoint = "runs/shared_model.json";
  std::string full_checkpoint = "runs/full_model.json";
  std::vector<std::string> eval_scenarios;
  std::vector<std::string> eval_modes = {"NR", "R"};
  std::vector<std::uint64_t> eval_seeds = {1, 2, 3};
  int workers = 1;
  std::uint64_t seed = 1;
  std::string out_dir = "runs";

  nlohmann::json effective;  // the merged config this run uses
  std::string config_hash;

  BranchSplit split() const { return make_branch_split(t_b_steps, horizon_steps); }

  PlannerConfig planner_config() const {
    PlannerConfig cfg;
    cfg.pcdm.K = K;
    cfg.pcdm.N = N;
    cfg.pcdm.split = split();
    cfg.weights = score;
    cfg.encoder = encoder;
    cfg.replan_period = replan_period;
    cfg.emergency_decel = emergency_decel;
    cfg.kinematics = kinematics;
    return cfg;
  }

  EpisodeConfig episode_config() const {
    EpisodeConfig cfg;
    cfg.steps = 150;
    cfg.history_steps = history_steps;
    cfg.weights = score;
    cfg.kinematics = kinematics;
    return cfg;
  }

  MlpConfig mlp_config(const std::string& role) const {
    MlpConfig cfg;
    cfg.state_dim = tensor_dim(encoder.max_agents, role == "shared" ? t_b_steps : horizon_steps);
    cfg.context_dim = encoder.context_dim();
    cfg.anchor_dim = role == "full" ? tensor_dim(encoder.max_agents, t_b_steps) : 0;
    cfg.width = model_width;
    cfg.blocks = model_blocks;
    cfg.time_embed_dim = time_embed_dim;
    return cfg;
  }
};

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                       const std::string& path) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError(path + ": unknown key '" + it.key() + "'");
    }
  }
}

template <typename T>
void assign(const nlohmann::json& j, const char* key, T& target, const std::string& path) {
  if (!j.contains(key)) return;
  try {
    target = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(path + "." + key + ": wrong type");
  }
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  using detail::assign;
  using detail::check_keys;
  RunConfig c;
  check_keys(j, {"schedule", "horizon", "pcdm", "score", "planner", "model", "train", "data",
                 "models", "eval", "seed", "out"},
             "config");
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    check_keys(s, {"H", "beta_min", "beta_max"}, "config.schedule");
    assign(s, "H", c.schedule.H, "config.schedule");
    assign(s, "beta_min", c.schedule.beta_min, "config.schedule");
    assign(s, "beta_max", c.schedule.beta_max, "config.schedule");
  }
  if (j.contains("horizon")) {
    const auto& s = j.at("horizon");
    check_keys(s, {"dt", "horizon_steps", "t_b_steps", "history_steps"}, "config.horizon");
    assign(s, "dt", c.dt, "config.horizon");
    assign(s, "horizon_steps", c.horizon_steps, "config.horizon");
    assign(s, "t_b_steps", c.t_b_steps, "config.horizon");
    assign(s, "history_steps", c.history_steps, "config.horizon");
  }
  if (j.contains("pcdm")) {
    const auto& s = j.at("pcdm");
    check_keys(s, {"K", "N"}, "config.pcdm");
    assign(s, "K", c.K, "config.pcdm");
    assign(s, "N", c.N, "config.pcdm");
  }
  if (j.contains("score")) {
    const auto& s = j.at("score");
    check_keys(s,
               {"w_ttc", "w_comfort", "w_progress", "drivable_margin", "ttc_horizon",
                "ttc_threshold", "max_lon_accel", "max_lat_accel", "max_jerk", "max_yaw_rate"},
               "config.score");
    assign(s, "w_ttc", c.score.w_ttc, "config.score");
    assign(s, "w_comfort", c.score.w_comfort, "config.score");
    assign(s, "w_progress", c.score.w_progress, "config.score");
    assign(s, "drivable_margin", c.score.drivable_margin, "config.score");
    assign(s, "ttc_horizon", c.score.ttc_horizon, "config.score");
    assign(s, "ttc_threshold", c.score.ttc_threshold, "config.score");
    assign(s, "max_lon_accel", c.score.max_lon_accel, "config.score");
    assign(s, "max_lat_accel", c.score.max_lat_accel, "config.score");
    assign(s, "max_jerk", c.score.max_jerk, "config.score");
    assign(s, "max_yaw_rate", c.score.max_yaw_rate, "config.score");
  }
  if (j.contains("planner")) {
    const auto& s = j.at("planner");
    check_keys(s,
               {"replan_period", "emergency_decel", "wheelbase", "steer_max", "accel_min",
                "accel_max"},
               "config.planner");
    assign(s, "replan_period", c.replan_period, "config.planner");
    assign(s, "emergency_decel", c.emergency_decel, "config.planner");
    assign(s, "wheelbase", c.kinematics.wheelbase, "config.planner");
    assign(s, "steer_max", c.kinematics.steer_max, "config.planner");
    assign(s, "accel_min", c.kinematics.accel_min, "config.planner");
    assign(s, "accel_max", c.kinematics.accel_max, "config.planner");
  }
  if (j.contains("model")) {
    const auto& s = j.at("model");
    check_keys(s,
               {"width", "blocks", "time_embed_dim", "max_agents", "pos_scale", "speed_scale",
                "route_samples", "route_spacing", "max_corridors", "corridor_samples",
                "corridor_spacing"},
               "config.model");
    assign(s, "width", c.model_width, "config.model");
    assign(s, "blocks", c.model_blocks, "config.model");
    assign(s, "time_embed_dim", c.time_embed_dim, "config.model");
    assign(s, "max_agents", c.encoder.max_agents, "config.model");
    assign(s, "pos_scale", c.encoder.pos_scale, "config.model");
    assign(s, "speed_scale", c.encoder.speed_scale, "config.model");
    assign(s, "route_samples", c.encoder.route_samples, "config.model");
    assign(s, "route_spacing", c.encoder.route_spacing, "config.model");
    assign(s, "max_corridors", c.encoder.max_corridors, "config.model");
    assign(s, "corridor_samples", c.encoder.corridor_samples, "config.model");
    assign(s, "corridor_spacing", c.encoder.corridor_spacing, "config.model");
  }
  if (j.contains("train")) {
    const auto& s = j.at("train");
    check_keys(s,
               {"steps", "batch", "lr", "momentum", "warmup_frac", "grad_clip", "dropout_rate",
                "prefix_loss_weight"},
               "config.train");
    assign(s, "steps", c.train.steps, "config.train");
    assign(s, "batch", c.train.batch, "config.train");
    assign(s, "lr", c.train.lr, "config.train");
    assign(s, "momentum", c.train.momentum, "config.train");
    assign(s, "warmup_frac", c.train.warmup_frac, "config.train");
    assign(s, "grad_clip", c.train.grad_clip, "config.train");
    assign(s, "dropout_rate", c.train.dropout_rate, "config.train");
    assign(s, "prefix_loss_weight", c.train.prefix_loss_weight, "config.train");
  }
  if (j.contains("data")) {
    const auto& s = j.at("data");
    check_keys(s, {"clips", "episodes_per_family", "clip_stride"}, "config.data");
    assign(s, "clips", c.clips_path, "config.data");
    assign(s, "episodes_per_family", c.episodes_per_family, "config.data");
    assign(s, "clip_stride", c.clip_stride, "config.data");
  }
  if (j.contains("models")) {
    const auto& s = j.at("models");
    check_keys(s, {"shared", "full"}, "config.models");
    assign(s, "shared", c.shared_checkpoint, "config.models");
    assign(s, "full", c.full_checkpoint, "config.models");
  }
  if (j.contains("eval")) {
    const auto& s = j.at("eval");
    check_keys(s, {"scenarios", "modes", "seeds", "workers"}, "config.eval");
    assign(s, "scenarios", c.eval_scenarios, "config.eval");
    assign(s, "modes", c.eval_modes, "config.eval");
    assign(s, "seeds", c.eval_seeds, "config.eval");
    assign(s, "workers", c.workers, "config.eval");
  }
  assign(j, "seed", c.seed, "config");
  assign(j, "out", c.out_dir, "config");

  // range checks with pointed messages
  if (c.K < 1) throw ConfigError("config.pcdm.K: must be >= 1");
  if (c.N < 1) throw ConfigError("config.pcdm.N: must be >= 1");
  if (c.schedule.H < 1) throw ConfigError("config.schedule.H: must be >= 1");
  if (!(c.schedule.beta_min > 0.0 && c.schedule.beta_min <= c.schedule.beta_max &&
        c.schedule.beta_max < 1.0)) {
    throw ConfigError("config.schedule: needs 0 < beta_min <= beta_max < 1");
  }
  if (c.dt <= 0.0) throw ConfigError("config.horizon.dt: must be positive");
  if (c.t_b_steps < 0 || c.t_b_steps > c.horizon_steps) {
    throw ConfigError("config.horizon.t_b_steps: must lie in [0, horizon_steps]");
  }
  if (c.emergency_decel >= 0.0) throw ConfigError("config.planner.emergency_decel: must be < 0");
  const double replan_ratio = c.replan_period / c.dt;
  if (c.replan_period <= 0.0 || std::abs(replan_ratio - std::lround(replan_ratio)) > 1e-6) {
    throw ConfigError("config.planner.replan_period: must be a positive multiple of dt");
  }
  if (c.train.dropout_rate < 0.0 || c.train.dropout_rate > 1.0) {
    throw ConfigError("config.train.dropout_rate: must lie in [0, 1]");
  }
  for (const auto& m : c.eval_modes) {
    if (m != "NR" && m != "R") throw ConfigError("config.eval.modes: entries must be NR or R");
  }
  if (c.workers < 1) throw ConfigError("config.eval.workers: must be >= 1");

  // self-describing effective config: every resolved value, not just the
  // overrides, so output files trace to the exact run
  nlohmann::json eff;
  eff["schedule"] = {{"H", c.schedule.H},
                     {"beta_min", c.schedule.beta_min},
                     {"beta_max", c.schedule.beta_max}};
  eff["horizon"] = {{"dt", c.dt},
                    {"horizon_steps", c.horizon_steps},
                    {"t_b_steps", c.t_b_steps},
                    {"history_steps", c.history_steps}};
  eff["pcdm"] = {{"K", c.K}, {"N", c.N}};
  eff["score"] = {{"w_ttc", c.score.w_ttc},
                  {"w_comfort", c.score.w_comfort},
                  {"w_progress", c.score.w_progress},
                  {"drivable_margin", c.score.drivable_margin},
                  {"ttc_horizon", c.score.ttc_horizon},
                  {"ttc_threshold", c.score.ttc_threshold},
                  {"max_lon_accel", c.score.max_lon_accel},
                  {"max_lat_accel", c.score.max_lat_accel},
                  {"max_jerk", c.score.max_jerk},
                  {"max_yaw_rate", c.score.max_yaw_rate}};
  eff["planner"] = {{"replan_period", c.replan_period},
                    {"emergency_decel", c.emergency_decel},
                    {"wheelbase", c.kinematics.wheelbase},
                    {"steer_max", c.kinematics.steer_max},
                    {"accel_min", c.kinematics.accel_min},
                    {"accel_max", c.kinematics.accel_max}};
  eff["model"] = {{"width", c.model_width},
                  {"blocks", c.model_blocks},
                  {"time_embed_dim", c.time_embed_dim},
                  {"max_agents", c.encoder.max_agents},
                  {"pos_scale", c.encoder.pos_scale},
                  {"speed_scale", c.encoder.speed_scale},
                  {"route_samples", c.encoder.route_samples},
                  {"route_spacing", c.encoder.route_spacing},
                  {"max_corridors", c.encoder.max_corridors},
                  {"corridor_samples", c.encoder.corridor_samples},
                  {"corridor_spacing", c.encoder.corridor_spacing}};
  eff["train"] = {{"steps", c.train.steps},
                  {"batch", c.train.batch},
                  {"lr", c.train.lr},
                  {"momentum", c.train.momentum},
                  {"warmup_frac", c.train.warmup_frac},
                  {"grad_clip", c.train.grad_clip},
                  {"dropout_rate", c.train.dropout_rate},
                  {"prefix_loss_weight", c.train.prefix_loss_weight}};
  eff["data"] = {{"clips", c.clips_path},
                 {"episodes_per_family", c.episodes_per_family},
                 {"clip_stride", c.clip_stride}};
  eff["models"] = {{"shared", c.shared_checkpoint}, {"full", c.full_checkpoint}};
  eff["eval"] = {{"scenarios", c.eval_scenarios},
                 {"modes", c.eval_modes},
                 {"seeds", c.eval_seeds},
                 {"workers", c.workers}};
  eff["seed"] = c.seed;
  eff["out"] = c.out_dir;
  c.effective = std::move(eff);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(detail::fnv1a(c.effective.dump())));
  c.config_hash = buf;
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return run_config_from_json(nlohmann::json::object());
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace coplanner
