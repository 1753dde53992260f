#pragma once

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "coplanner/denoise.hpp"
#include "coplanner/features.hpp"
#include "coplanner/scenario_io.hpp"
#include "coplanner/sim.hpp"

namespace coplanner {

// One training clip: conditioning context at the clip start plus the joint
// future over the planning horizon.
struct Clip {
  ScenarioContext context;
  JointTrajectory future;
};

inline nlohmann::json clip_to_json(const Clip& c) {
  nlohmann::json j;
  j["dt"] = c.context.dt;
  j["reference_speed"] = c.context.reference_speed;
  j["agents"] = nlohmann::json::array();
  for (std::size_t a = 0; a < c.context.agent_histories.size(); ++a) {
    nlohmann::json ja;
    ja["dims"] = {{"length", c.context.agent_dims[a].length},
                  {"width", c.context.agent_dims[a].width}};
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& s : c.context.agent_histories[a]) hist.push_back({s.x, s.y, s.heading, s.speed});
    ja["history"] = std::move(hist);
    nlohmann::json fut = nlohmann::json::array();
    for (const auto& s : c.future.agents[a].states) fut.push_back({s.x, s.y, s.heading, s.speed});
    ja["future"] = std::move(fut);
    j["agents"].push_back(std::move(ja));
  }
  j["corridors"] = nlohmann::json::array();
  for (const auto& corr : c.context.lane_corridors) {
    nlohmann::json jc;
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : corr.centerline.points()) pts.push_back({p.x, p.y});
    jc["centerline"] = std::move(pts);
    jc["half_width"] = corr.half_width;
    jc["stop_flag"] = corr.stop_flag;
    j["corridors"].push_back(std::move(jc));
  }
  nlohmann::json route = nlohmann::json::array();
  for (const auto& p : c.context.route.points()) route.push_back({p.x, p.y});
  j["route"] = std::move(route);
  return j;
}

inline Clip clip_from_json(const nlohmann::json& j) {
  Clip c;
  c.context.dt = j.at("dt").get<double>();
  c.context.reference_speed = j.at("reference_speed").get<double>();
  int horizon = -1;
  for (const auto& ja : j.at("agents")) {
    Dims d{ja.at("dims").at("length").get<double>(), ja.at("dims").at("width").get<double>()};
    c.context.agent_dims.push_back(d);
    std::vector<AgentState> hist;
    for (const auto& h : ja.at("history")) {
      hist.push_back(AgentState{h[0].get<double>(), h[1].get<double>(), h[2].get<double>(),
                                h[3].get<double>()});
    }
    c.context.agent_histories.push_back(std::move(hist));
    Trajectory fut;
    fut.dt = c.context.dt;
    for (const auto& f : ja.at("future")) {
      fut.states.push_back(AgentState{f[0].get<double>(), f[1].get<double>(), f[2].get<double>(),
                                      f[3].get<double>()});
    }
    if (horizon < 0) horizon = fut.horizon_steps();
    c.future.agents.push_back(std::move(fut));
  }
  c.future.horizon_steps = horizon;
  std::vector<Corridor> corridors;
  for (const auto& jc : j.at("corridors")) {
    Corridor corr;
    std::vector<Vec2> pts;
    for (const auto& p : jc.at("centerline")) pts.push_back({p[0].get<double>(), p[1].get<double>()});
    corr.centerline = Polyline(std::move(pts));
    corr.half_width = jc.at("half_width").get<double>();
    corr.stop_flag = jc.at("stop_flag").get<bool>();
    corridors.push_back(std::move(corr));
  }
  c.context.lane_corridors = std::move(corridors);
  std::vector<Vec2> route;
  for (const auto& p : j.at("route")) route.push_back({p[0].get<double>(), p[1].get<double>()});
  c.context.route = Polyline(std::move(route));
  validate_context(c.context);
  validate_joint(c.future);
  return c;
}

inline void save_clips(const std::string& path, const std::vector<Clip>& clips) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write clips file: " + path);
  for (const auto& c : clips) out << clip_to_json(c).dump() << "\n";
}

inline std::vector<Clip> load_clips(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open clips file: " + path);
  std::vector<Clip> clips;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    clips.push_back(clip_from_json(nlohmann::json::parse(line)));
  }
  return clips;
}

// Runs the scripted expert (IDM speed + route following for the ego, mode
// behavior for everyone else) and slices the log into clips with full
// history and future coverage. noise_seed != 0 adds slowly-varying control
// noise so the rollouts carry realistic pose imperfection everywhere.
inline std::vector<Clip> harvest_clips(const Scenario& scn, const std::string& mode,
                                       int horizon_steps, int history_steps, int stride,
                                       const EpisodeConfig& cfg, std::uint64_t noise_seed = 0) {
  World world(scn, mode, history_steps);
  const int total = cfg.steps;
  std::vector<std::vector<AgentState>> log(scn.agents.size());
  auto log_states = [&]() {
    for (std::size_t i = 0; i < world.agents().size(); ++i) {
      log[i].push_back(world.agents()[i].state);
    }
  };
  log_states();
  RngStream noise_rng(noise_seed);
  double accel_noise = 0.0, steer_noise = 0.0;
  const double decay = std::exp(-scn.dt / 1.2);  // ~1.2 s correlation time
  const double renew = std::sqrt(1.0 - decay * decay);
  for (int step = 0; step < total; ++step) {
    if (noise_seed != 0) {
      accel_noise = accel_noise * decay + 0.45 * renew * noise_rng.normal();
      steer_noise = steer_noise * decay + 0.035 * renew * noise_rng.normal();
    }
    world.step_expert(cfg.gains, cfg.kinematics, cfg.weights, accel_noise, steer_noise);
    log_states();
  }

  std::vector<Clip> clips;
  const int first_t0 = history_steps - 1;
  for (int t0 = first_t0; t0 + horizon_steps <= total; t0 += stride) {
    Clip c;
    c.context.dt = scn.dt;
    c.context.reference_speed = scn.reference_speed;
    c.context.lane_corridors = scn.corridors;
    c.context.route = Polyline(scn.route);
    c.future.horizon_steps = horizon_steps;
    for (std::size_t a = 0; a < log.size(); ++a) {
      c.context.agent_dims.push_back(scn.agents[a].dims);
      c.context.agent_histories.emplace_back(log[a].begin() + (t0 - first_t0),
                                             log[a].begin() + t0 + 1);
      Trajectory fut;
      fut.dt = scn.dt;
      fut.states.assign(log[a].begin() + t0, log[a].begin() + t0 + horizon_steps + 1);
      c.future.agents.push_back(std::move(fut));
    }
    clips.push_back(std::move(c));
  }
  return clips;
}

// Clip -> model-space training example. The shared role trains on the prefix
// tensor, the full role on the whole-horizon tensor.
inline std::vector<TrainingExample> make_training_examples(const std::vector<Clip>& clips,
                                                           const std::string& role,
                                                           const EncoderConfig& enc,
                                                           int t_b_steps) {
  std::vector<TrainingExample> out;
  out.reserve(clips.size());
  for (const Clip& c : clips) {
    TrainingExample ex;
    ex.context = encode_context(c.context, enc);
    const ModelSpace space = make_model_space(c.context, enc);
    if (role == "shared") {
      JointTrajectory prefix;
      prefix.horizon_steps = t_b_steps;
      for (const auto& traj : c.future.agents) {
        Trajectory p;
        p.dt = traj.dt;
        p.states.assign(traj.states.begin(), traj.states.begin() + t_b_steps + 1);
        prefix.agents.push_back(std::move(p));
      }
      ex.x0 = to_model(prefix, space);
    } else if (role == "full") {
      ex.x0 = to_model(c.future, space);
    } else {
      throw ConfigError("unknown training role: " + role);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace coplanner
