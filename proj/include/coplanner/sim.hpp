#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "coplanner/errors.hpp"
#include "coplanner/planner.hpp"
#include "coplanner/scenario_io.hpp"
#include "coplanner/scene.hpp"
#include "coplanner/score.hpp"

namespace coplanner {

// ---------------------------------------------------------------------------
// Intelligent Driver Model.
// ---------------------------------------------------------------------------

struct IdmParams {
  double v0 = 10.0;          // desired speed
  double headway = 1.5;      // s
  double min_gap = 2.0;      // m
  double accel = 1.5;        // m/s^2
  double comf_decel = 2.5;   // m/s^2
  double exponent = 4.0;
  double emergency_decel = 6.0;  // hard floor
};

// IDM acceleration; gap = infinity selects the free-road term, gap <= 0 is
// treated as immediate maximum braking.
inline double idm_accel(double gap, double own_speed, double lead_speed, const IdmParams& p) {
  if (gap <= 0.0) return -p.emergency_decel;
  const double v0 = std::max(p.v0, 0.1);
  const double free_term = 1.0 - std::pow(own_speed / v0, p.exponent);
  double interaction = 0.0;
  if (std::isfinite(gap)) {
    const double dv = own_speed - lead_speed;
    const double s_star = p.min_gap + std::max(0.0, own_speed * p.headway +
                                                        own_speed * dv /
                                                            (2.0 * std::sqrt(p.accel * p.comf_decel)));
    interaction = (s_star / gap) * (s_star / gap);
  }
  return std::max(p.accel * (free_term - interaction), -p.emergency_decel);
}

// ---------------------------------------------------------------------------
// Script playback (non-reactive agents).
// ---------------------------------------------------------------------------

inline AgentState script_state_at_step(const AgentScript& sc, int step) {
  if (sc.waypoints_timed.empty()) throw StructuralError("empty agent script");
  const int i = std::clamp(step, 0, static_cast<int>(sc.waypoints_timed.size()) - 1);
  const ScriptPoint& p = sc.waypoints_timed[static_cast<std::size_t>(i)];
  return AgentState{p.x, p.y, p.heading, p.speed};
}

inline double script_speed_at_time(const AgentScript& sc, double t) {
  if (sc.waypoints_timed.empty()) throw StructuralError("empty agent script");
  const auto& w = sc.waypoints_timed;
  if (t <= w.front().t) return w.front().speed;
  if (t >= w.back().t) return w.back().speed;
  for (std::size_t i = 0; i + 1 < w.size(); ++i) {
    if (t <= w[i + 1].t) {
      const double u = (t - w[i].t) / std::max(1e-9, w[i + 1].t - w[i].t);
      return w[i].speed + u * (w[i + 1].speed - w[i].speed);
    }
  }
  return w.back().speed;
}

// ---------------------------------------------------------------------------
// Plan tracking: Stanley steering plus PI speed control.
// ---------------------------------------------------------------------------

struct TrackingGains {
  double k_stanley = 1.8;
  double v_soft = 1.0;        // softening speed in the Stanley term
  double kp_station = 1.4;    // longitudinal position-error gain; keeps the
                              // loop anchored to the plan, immune to the
                              // noise-inflated speed estimates of sampled plans
  double kp_speed = 0.8;
  double ki_speed = 0.15;
  double integral_max = 1.5;
  double accel_limit = 3.5;   // comfort-scoped command bound
  double accel_slew = 6.0;    // m/s^3; bounds realized jerk below the scorer limit
};

struct TrackingState {
  double speed_integral = 0.0;
  double last_accel = 0.0;
};

struct ControlCommand {
  double accel = 0.0;
  double steer = 0.0;
  bool plan_exhausted = false;
};

inline ControlCommand track_plan(const AgentState& ego, const Trajectory& plan, double t_on_plan,
                                 const TrackingGains& g, const KinematicParams& kin,
                                 TrackingState& st) {
  ControlCommand cmd;
  const double dt = plan.dt;
  const int last = plan.horizon_steps();
  int ref = static_cast<int>(std::lround(t_on_plan / dt)) + 1;
  if (ref > last) {
    ref = last;
    cmd.plan_exhausted = true;
  }
  ref = std::max(ref, 0);
  const AgentState& target = plan.states[static_cast<std::size_t>(ref)];
  const AgentState& prev = plan.states[static_cast<std::size_t>(std::max(ref - 1, 0))];

  // lateral/heading error against the local plan segment
  const Vec2 seg = target.position() - prev.position();
  const double seg_len = seg.norm();
  const double path_heading = seg_len > 1e-6 ? std::atan2(seg.y, seg.x) : target.heading;
  double e_lat;
  if (seg_len > 1e-6) {
    const Vec2 tangent{seg.x / seg_len, seg.y / seg_len};
    e_lat = tangent.cross(ego.position() - prev.position());
  } else {
    e_lat = 0.0;
  }
  const double e_head = wrap_angle(path_heading - ego.heading);
  cmd.steer = std::clamp(
      e_head - std::atan2(g.k_stanley * e_lat, std::max(ego.speed, 0.0) + g.v_soft),
      -kin.steer_max, kin.steer_max);

  // longitudinal: station error along the path plus damped speed error
  const Vec2 dir = seg_len > 1e-6 ? Vec2{seg.x / seg_len, seg.y / seg_len}
                                  : Vec2{std::cos(target.heading), std::sin(target.heading)};
  const double e_station = (target.position() - ego.position()).dot(dir) - ego.speed * dt;
  const double v_err = target.speed - ego.speed;
  st.speed_integral = std::clamp(st.speed_integral + v_err * dt, -g.integral_max, g.integral_max);
  double accel = std::clamp(
      g.kp_station * e_station + g.kp_speed * v_err + g.ki_speed * st.speed_integral,
      std::max(kin.accel_min, -g.accel_limit), std::min(kin.accel_max, g.accel_limit));
  const double max_delta = g.accel_slew * dt;
  accel = std::clamp(accel, st.last_accel - max_delta, st.last_accel + max_delta);
  st.last_accel = accel;
  cmd.accel = accel;
  return cmd;
}

// ---------------------------------------------------------------------------
// Closed-loop world.
// ---------------------------------------------------------------------------

struct SimAgent {
  AgentSpec spec;
  AgentState state;
  std::deque<AgentState> history;
  const AgentScript* script = nullptr;  // owned by the scenario
  int corridor = -1;                    // R-mode binding
  double s_along = 0.0;
  IdmParams idm;
};

class World {
 public:
  World(const Scenario& scn, std::string mode, int history_steps = 21)
      : scn_(scn), mode_(std::move(mode)), history_steps_(history_steps) {
    if (mode_ != "NR" && mode_ != "R") throw ConfigError("world mode must be NR or R");
    if (scn_.corridors.empty()) throw ValidationError("scenario needs at least one corridor");
    route_ = Polyline(scn_.route);
    for (const auto& spec : scn_.agents) {
      SimAgent a;
      a.spec = spec;
      a.state = spec.history.back();
      for (const auto& h : spec.history) a.history.push_back(h);
      trim_history(a);
      for (const auto& sc : scn_.scripts) {
        if (sc.agent_id == spec.id) a.script = &sc;
      }
      a.corridor = bind_corridor(a);
      a.s_along = scn_.corridors[static_cast<std::size_t>(a.corridor)]
                      .centerline.project(a.state.position())
                      .s;
      a.idm.v0 = std::max(0.5, a.state.speed);
      agents_.push_back(std::move(a));
    }
    if (agents_.empty() || agents_.front().spec.role != "ego") {
      throw StructuralError("world needs the ego as agent 0");
    }
  }

  double time() const { return step_count_ * scn_.dt; }
  int step_count() const { return step_count_; }
  double dt() const { return scn_.dt; }
  const std::vector<SimAgent>& agents() const { return agents_; }
  const Scenario& scenario() const { return scn_; }

  ScenarioContext context() const {
    ScenarioContext ctx;
    ctx.dt = scn_.dt;
    ctx.reference_speed = scn_.reference_speed;
    ctx.lane_corridors = scn_.corridors;
    ctx.route = route_;
    for (const auto& a : agents_) {
      ctx.agent_histories.emplace_back(a.history.begin(), a.history.end());
      ctx.agent_dims.push_back(a.spec.dims);
    }
    validate_context(ctx);
    return ctx;
  }

  struct StepFlags {
    bool collision = false;
    bool offroad = false;
    bool plan_exhausted = false;
  };

  // Advance one tick with the ego tracking the given plan.
  StepFlags step_tracking(const Trajectory& plan, double plan_t0, TrackingState& tracking,
                          const TrackingGains& gains, const KinematicParams& kin,
                          const ScoreWeights& weights) {
    const ControlCommand cmd = track_plan(agents_.front().state, plan, time() - plan_t0, gains,
                                          kin, tracking);
    StepFlags flags = advance(cmd.accel, cmd.steer, kin, weights);
    flags.plan_exhausted = cmd.plan_exhausted;
    return flags;
  }

  // Advance one tick with the ego driven by the scripted expert: IDM speed
  // control and Stanley steering along the route, slowed ahead of curvature.
  // The optional control noise keeps expert rollouts realistically imperfect
  // so harvested clips include recovery behavior at every phase.
  StepFlags step_expert(const TrackingGains& gains, const KinematicParams& kin,
                        const ScoreWeights& weights, double accel_noise = 0.0,
                        double steer_noise = 0.0) {
    SimAgent& ego = agents_.front();
    const auto [gap, lead_speed] = lead_on_path(route_, ego, -1);
    IdmParams p = ego.idm;
    p.v0 = std::min(scn_.reference_speed, curvature_speed_limit(kin));
    const double accel = std::clamp(idm_accel(gap, ego.state.speed, lead_speed, p) + accel_noise,
                                    kin.accel_min, kin.accel_max);
    const PolylineProjection proj = route_.project(ego.state.position());
    const double look = std::min(proj.s + std::max(2.0, ego.state.speed * 0.4), route_.length());
    const Vec2 tangent = route_.tangent_at(look);
    const double e_head = wrap_angle(std::atan2(tangent.y, tangent.x) - ego.state.heading);
    const double steer = std::clamp(
        e_head - std::atan2(gains.k_stanley * proj.lateral, ego.state.speed + gains.v_soft) +
            steer_noise,
        -kin.steer_max, kin.steer_max);
    return advance(accel, steer, kin, weights);
  }

 private:
  void trim_history(SimAgent& a) const {
    while (static_cast<int>(a.history.size()) > history_steps_) a.history.pop_front();
  }

  // Comfortable speed for the route curvature just ahead of the ego.
  double curvature_speed_limit(const KinematicParams&) const {
    const double s0 = route_.project(agents_.front().state.position()).s;
    double max_kappa = 0.0;
    const double ds = 4.0;
    for (int i = 0; i + 1 <= 5; ++i) {
      const double sa = std::min(s0 + i * ds, route_.length());
      const double sb = std::min(sa + ds, route_.length());
      if (sb - sa < 1e-6) break;
      const Vec2 ta = route_.tangent_at(sa);
      const Vec2 tb = route_.tangent_at(sb);
      const double dth = std::abs(wrap_angle(std::atan2(tb.y, tb.x) - std::atan2(ta.y, ta.x)));
      max_kappa = std::max(max_kappa, dth / (sb - sa));
    }
    if (max_kappa < 1e-6) return 1e9;
    return std::sqrt(3.5 / max_kappa);
  }

  int bind_corridor(const SimAgent& a) const {
    int best = 0;
    double best_score = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < scn_.corridors.size(); ++c) {
      const Polyline& line = scn_.corridors[c].centerline;
      double score = line.project(a.state.position()).distance;
      if (a.script && !a.script->waypoints_timed.empty()) {
        const ScriptPoint& end = a.script->waypoints_timed.back();
        score += line.project(Vec2{end.x, end.y}).distance;
      }
      if (score < best_score) {
        best_score = score;
        best = static_cast<int>(c);
      }
    }
    return best;
  }

  // Nearest agent ahead of `self` along a path; returns {gap, lead speed}.
  std::pair<double, double> lead_on_path(const Polyline& path, const SimAgent& self,
                                         int skip_index) const {
    const double s_self = path.project(self.state.position()).s;
    double best_gap = std::numeric_limits<double>::infinity();
    double lead_speed = 0.0;
    for (std::size_t j = 0; j < agents_.size(); ++j) {
      if (static_cast<int>(j) == skip_index || &agents_[j] == &self) continue;
      const SimAgent& other = agents_[j];
      const PolylineProjection proj = path.project(other.state.position());
      if (proj.distance > 2.0) continue;  // not in this lane
      if (proj.s <= s_self) continue;
      const double gap = proj.s - s_self -
                         0.5 * (self.spec.dims.length + other.spec.dims.length);
      if (gap < best_gap) {
        best_gap = gap;
        const Vec2 tangent = path.tangent_at(proj.s);
        lead_speed = other.state.speed *
                     std::cos(other.state.heading - std::atan2(tangent.y, tangent.x));
      }
    }
    return {best_gap, lead_speed};
  }

  StepFlags advance(double ego_accel, double ego_steer, const KinematicParams& kin,
                    const ScoreWeights& weights) {
    SimAgent& ego = agents_.front();
    const AgentState new_ego = bicycle_step(ego.state, ego_accel, ego_steer, scn_.dt, kin);

    std::vector<AgentState> new_states(agents_.size());
    new_states[0] = new_ego;
    const int next_step = step_count_ + 1;
    for (std::size_t i = 1; i < agents_.size(); ++i) {
      SimAgent& a = agents_[i];
      if (mode_ == "NR") {
        if (!a.script) throw ConfigError("NR mode requires a script for every non-ego agent");
        new_states[i] = script_state_at_step(*a.script, next_step);
      } else {
        const Corridor& corr = scn_.corridors[static_cast<std::size_t>(a.corridor)];
        const auto [gap, lead_speed] = lead_on_path(corr.centerline, a, 0x7fffffff);
        double stop_gap = std::numeric_limits<double>::infinity();
        if (corr.stop_flag) {
          stop_gap = corr.centerline.length() - a.s_along - 0.5 * a.spec.dims.length;
        }
        IdmParams p = a.idm;
        if (a.script) p.v0 = std::max(0.0, script_speed_at_time(*a.script, time()));
        double accel;
        if (stop_gap < gap) {
          accel = idm_accel(stop_gap, a.state.speed, 0.0, p);
        } else {
          accel = idm_accel(gap, a.state.speed, lead_speed, p);
        }
        if (p.v0 < 0.05) accel = std::min(accel, -p.comf_decel);  // scripted hard stop
        const double v1 = std::max(0.0, a.state.speed + accel * scn_.dt);
        a.s_along = std::min(a.s_along + v1 * scn_.dt, corr.centerline.length());
        const Vec2 pos = corr.centerline.point_at(a.s_along);
        const Vec2 tangent = corr.centerline.tangent_at(a.s_along);
        new_states[i] = AgentState{pos.x, pos.y, std::atan2(tangent.y, tangent.x), v1};
      }
    }

    for (std::size_t i = 0; i < agents_.size(); ++i) {
      agents_[i].state = new_states[i];
      agents_[i].history.push_back(new_states[i]);
      trim_history(agents_[i]);
    }
    ++step_count_;

    StepFlags flags;
    for (std::size_t i = 1; i < agents_.size(); ++i) {
      if (states_collide(agents_.front().state, agents_.front().spec.dims, agents_[i].state,
                         agents_[i].spec.dims)) {
        flags.collision = true;
      }
    }
    flags.offroad = !state_drivable(agents_.front().state, agents_.front().spec.dims,
                                    scn_.corridors, weights.drivable_margin);
    return flags;
  }

  Scenario scn_;
  std::string mode_;
  int history_steps_;
  Polyline route_;
  std::vector<SimAgent> agents_;
  int step_count_ = 0;
};

// ---------------------------------------------------------------------------
// Episode runner.
// ---------------------------------------------------------------------------

struct EpisodeConfig {
  int steps = 150;  // 15 s at 10 Hz
  int history_steps = 21;
  ScoreWeights weights;
  KinematicParams kinematics;
  TrackingGains gains;
};

struct EpisodeResult {
  ScoreBreakdown realized;
  int fallback_count = 0;
  bool any_collision = false;
  bool any_offroad = false;
  bool plan_exhausted = false;
  Trajectory realized_ego;
  JointTrajectory realized_joint;
  std::vector<nlohmann::json> cycle_reports;
  std::vector<nlohmann::json> step_log;
  std::vector<std::uint8_t> collision_steps;  // incremental per-step flags
  std::vector<std::uint8_t> offroad_steps;
};

inline nlohmann::json episode_report_json(const EpisodeResult& r, const std::string& scenario_name,
                                          const std::string& mode, std::uint64_t seed) {
  nlohmann::json j;
  j["scenario"] = scenario_name;
  j["mode"] = mode;
  j["seed"] = seed;
  j["steps"] = r.realized_ego.horizon_steps();
  j["metrics"] = {{"composite", r.realized.composite},
                  {"collisions", r.realized.collision_free ? 1.0 : 0.0},
                  {"ttc", r.realized.ttc_score},
                  {"drivable", r.realized.drivable_compliant ? 1.0 : 0.0},
                  {"comfort", r.realized.comfort_score},
                  {"progress", r.realized.progress_score}};
  j["fallbacks"] = r.fallback_count;
  j["incremental"] = {{"collision_free", !r.any_collision}, {"drivable_compliant", !r.any_offroad}};
  j["cycles"] = r.cycle_reports;
  return j;
}

inline EpisodeResult run_episode(const Scenario& scn, const std::string& mode,
                                 const PlannerBase& planner, const EpisodeConfig& cfg,
                                 std::uint64_t seed) {
  World world(scn, mode, cfg.history_steps);
  const int replan_every =
      std::max(1, static_cast<int>(std::lround(planner.replan_period() / scn.dt)));

  EpisodeResult res;
  res.realized_ego.dt = scn.dt;
  res.realized_joint.horizon_steps = cfg.steps;
  res.realized_joint.agents.resize(world.agents().size());
  for (auto& t : res.realized_joint.agents) t.dt = scn.dt;
  auto log_states = [&]() {
    nlohmann::json js;
    js["t"] = world.time();
    js["agents"] = nlohmann::json::array();
    for (std::size_t i = 0; i < world.agents().size(); ++i) {
      const AgentState& s = world.agents()[i].state;
      js["agents"].push_back({s.x, s.y, s.heading, s.speed});
      res.realized_joint.agents[i].states.push_back(s);
    }
    res.step_log.push_back(std::move(js));
    res.realized_ego.states.push_back(world.agents().front().state);
  };
  log_states();

  Trajectory plan;
  double plan_t0 = 0.0;
  TrackingState tracking;
  int cycle = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    if (step % replan_every == 0) {
      const ScenarioContext ctx = world.context();
      PlanResult pr = planner.plan_cycle(ctx, cycle, seed);
      plan = pr.plan;
      plan_t0 = world.time();
      tracking.speed_integral = 0.0;  // keep last_accel: no jerk step at replans
      if (pr.fallback) ++res.fallback_count;
      nlohmann::json jc;
      jc["cycle"] = cycle;
      jc["t"] = world.time();
      jc["k_star"] = pr.k_star;
      jc["n_star"] = pr.n_star;
      jc["fallback"] = pr.fallback;
      jc["stats"] = {{"shared_sampled", pr.stats.shared_sampled},
                     {"groups_retained", pr.stats.groups_retained},
                     {"futures_generated", pr.stats.futures_generated},
                     {"candidates_scored", pr.stats.candidates_scored},
                     {"branch_stage_run", pr.stats.branch_stage_run}};
      jc["score_report"] = pr.score_report;
      res.cycle_reports.push_back(std::move(jc));
      ++cycle;
    }
    const World::StepFlags flags =
        world.step_tracking(plan, plan_t0, tracking, cfg.gains, cfg.kinematics, cfg.weights);
    res.any_collision |= flags.collision;
    res.any_offroad |= flags.offroad;
    res.plan_exhausted |= flags.plan_exhausted;
    res.collision_steps.push_back(flags.collision ? 1 : 0);
    res.offroad_steps.push_back(flags.offroad ? 1 : 0);
    log_states();
  }

  ScenarioContext score_ctx = scenario_context(scn);
  res.realized = pdm_score(res.realized_ego, res.realized_joint, score_ctx, cfg.steps,
                           cfg.weights);
  return res;
}

}  // namespace coplanner
