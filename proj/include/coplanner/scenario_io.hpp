#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "coplanner/errors.hpp"
#include "coplanner/scene.hpp"

namespace coplanner {

using nlohmann::json;

// Timed waypoint for scripted (non-reactive) agents: [t, x, y, heading, speed].
struct ScriptPoint {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
};

struct AgentScript {
  int agent_id = 0;
  std::vector<ScriptPoint> waypoints_timed;
};

struct AgentSpec {
  int id = 0;
  std::string role;  // "ego" | "vehicle"
  Dims dims;
  std::vector<AgentState> history;
};

// On-disk scenario: the scene schema plus the closed-loop extension fields.
struct Scenario {
  std::string name;
  double dt = 0.1;
  int horizon_steps = 80;
  int t_b_steps = 40;
  std::vector<AgentSpec> agents;
  std::vector<Corridor> corridors;
  std::vector<Vec2> route;
  std::string mode = "NR";  // "NR" | "R"
  double reference_speed = 10.0;
  std::vector<AgentScript> scripts;
};

namespace detail {

inline const json& require_field(const json& j, const std::string& key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(path + ": missing field '" + key + "'");
  return *it;
}

inline double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ValidationError(path + ": expected a number");
  return j.get<double>();
}

inline std::vector<Vec2> parse_points(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() < 2) throw ValidationError(path + ": expected >= 2 [x,y] points");
  std::vector<Vec2> pts;
  pts.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    const json& p = j[i];
    const std::string ppath = path + "[" + std::to_string(i) + "]";
    if (!p.is_array() || p.size() != 2) throw ValidationError(ppath + ": expected [x,y]");
    pts.push_back({as_number(p[0], ppath), as_number(p[1], ppath)});
  }
  return pts;
}

}  // namespace detail

inline Scenario parse_scenario(const json& j, const std::string& name = "scenario") {
  using detail::as_number;
  using detail::require_field;
  Scenario s;
  s.name = j.contains("name") ? j.at("name").get<std::string>() : name;
  s.dt = as_number(require_field(j, "dt", name), name + ".dt");
  s.horizon_steps = require_field(j, "horizon_steps", name).get<int>();
  s.t_b_steps = require_field(j, "t_b_steps", name).get<int>();
  if (s.dt <= 0.0) throw ValidationError(name + ".dt: must be positive");
  if (s.t_b_steps < 0 || s.t_b_steps > s.horizon_steps) {
    throw ValidationError(name + ".t_b_steps: must lie in [0, horizon_steps]");
  }

  const json& agents = require_field(j, "agents", name);
  if (!agents.is_array() || agents.empty()) {
    throw ValidationError(name + ".agents: expected a non-empty array");
  }
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const std::string apath = name + ".agents[" + std::to_string(i) + "]";
    const json& a = agents[i];
    AgentSpec spec;
    spec.id = require_field(a, "id", apath).get<int>();
    spec.role = require_field(a, "role", apath).get<std::string>();
    const json& dims = require_field(a, "dims", apath);
    spec.dims.length = as_number(require_field(dims, "length", apath + ".dims"), apath + ".dims.length");
    spec.dims.width = as_number(require_field(dims, "width", apath + ".dims"), apath + ".dims.width");
    const json& hist = require_field(a, "history", apath);
    if (!hist.is_array() || hist.empty()) {
      throw ValidationError(apath + ".history: expected a non-empty array");
    }
    for (std::size_t t = 0; t < hist.size(); ++t) {
      const json& h = hist[t];
      const std::string hpath = apath + ".history[" + std::to_string(t) + "]";
      if (!h.is_array() || h.size() != 4) {
        throw ValidationError(hpath + ": expected [x,y,heading,speed]");
      }
      spec.history.push_back(make_agent_state(as_number(h[0], hpath), as_number(h[1], hpath),
                                              as_number(h[2], hpath), as_number(h[3], hpath)));
    }
    s.agents.push_back(std::move(spec));
  }
  if (s.agents.front().role != "ego") {
    throw ValidationError(name + ".agents[0].role: ego must be agent index 0");
  }
  const std::size_t hlen = s.agents.front().history.size();
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    if (s.agents[i].history.size() != hlen) {
      throw ValidationError(name + ".agents[" + std::to_string(i) +
                            "].history: history lengths must be equal across agents");
    }
  }

  const json& corridors = require_field(j, "corridors", name);
  for (std::size_t i = 0; i < corridors.size(); ++i) {
    const std::string cpath = name + ".corridors[" + std::to_string(i) + "]";
    const json& c = corridors[i];
    Corridor corr;
    corr.centerline = Polyline(detail::parse_points(require_field(c, "centerline", cpath), cpath + ".centerline"));
    corr.half_width = as_number(require_field(c, "half_width", cpath), cpath + ".half_width");
    corr.stop_flag = require_field(c, "stop_flag", cpath).get<bool>();
    s.corridors.push_back(std::move(corr));
  }

  s.route = detail::parse_points(require_field(j, "route", name), name + ".route");

  if (j.contains("mode")) {
    s.mode = j.at("mode").get<std::string>();
    if (s.mode != "NR" && s.mode != "R") throw ValidationError(name + ".mode: expected \"NR\" or \"R\"");
  }
  if (j.contains("reference_speed")) {
    s.reference_speed = as_number(j.at("reference_speed"), name + ".reference_speed");
  }
  if (j.contains("scripts")) {
    const json& scripts = j.at("scripts");
    for (std::size_t i = 0; i < scripts.size(); ++i) {
      const std::string spath = name + ".scripts[" + std::to_string(i) + "]";
      AgentScript script;
      script.agent_id = require_field(scripts[i], "agent_id", spath).get<int>();
      const json& wps = require_field(scripts[i], "waypoints_timed", spath);
      for (std::size_t w = 0; w < wps.size(); ++w) {
        const json& p = wps[w];
        const std::string wpath = spath + ".waypoints_timed[" + std::to_string(w) + "]";
        if (!p.is_array() || p.size() != 5) {
          throw ValidationError(wpath + ": expected [t,x,y,heading,speed]");
        }
        script.waypoints_timed.push_back({as_number(p[0], wpath), as_number(p[1], wpath),
                                          as_number(p[2], wpath), as_number(p[3], wpath),
                                          as_number(p[4], wpath)});
      }
      s.scripts.push_back(std::move(script));
    }
  }
  return s;
}

inline json scenario_to_json(const Scenario& s) {
  json j;
  j["name"] = s.name;
  j["dt"] = s.dt;
  j["horizon_steps"] = s.horizon_steps;
  j["t_b_steps"] = s.t_b_steps;
  j["agents"] = json::array();
  for (const auto& a : s.agents) {
    json ja;
    ja["id"] = a.id;
    ja["role"] = a.role;
    ja["dims"] = {{"length", a.dims.length}, {"width", a.dims.width}};
    json hist = json::array();
    for (const auto& h : a.history) hist.push_back({h.x, h.y, h.heading, h.speed});
    ja["history"] = std::move(hist);
    j["agents"].push_back(std::move(ja));
  }
  j["corridors"] = json::array();
  for (const auto& c : s.corridors) {
    json jc;
    json pts = json::array();
    for (const auto& p : c.centerline.points()) pts.push_back({p.x, p.y});
    jc["centerline"] = std::move(pts);
    jc["half_width"] = c.half_width;
    jc["stop_flag"] = c.stop_flag;
    j["corridors"].push_back(std::move(jc));
  }
  json route = json::array();
  for (const auto& p : s.route) route.push_back({p.x, p.y});
  j["route"] = std::move(route);
  j["mode"] = s.mode;
  j["reference_speed"] = s.reference_speed;
  j["scripts"] = json::array();
  for (const auto& sc : s.scripts) {
    json js;
    js["agent_id"] = sc.agent_id;
    json wps = json::array();
    for (const auto& w : sc.waypoints_timed) wps.push_back({w.t, w.x, w.y, w.heading, w.speed});
    js["waypoints_timed"] = std::move(wps);
    j["scripts"].push_back(std::move(js));
  }
  return j;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
  try {
    return parse_scenario(j, path);
  } catch (ValidationError&) {
    throw;
  }
}

inline void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open scenario file for writing: " + path);
  out << scenario_to_json(s).dump(1) << "\n";
}

// Builds the planner/scorer view of a scenario at episode start.
inline ScenarioContext scenario_context(const Scenario& s) {
  ScenarioContext ctx;
  ctx.dt = s.dt;
  ctx.reference_speed = s.reference_speed;
  ctx.lane_corridors = s.corridors;
  ctx.route = Polyline(s.route);
  for (const auto& a : s.agents) {
    ctx.agent_histories.push_back(a.history);
    ctx.agent_dims.push_back(a.dims);
  }
  validate_context(ctx);
  return ctx;
}

}  // namespace coplanner
