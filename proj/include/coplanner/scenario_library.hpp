#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "coplanner/geometry.hpp"
#include "coplanner/scenario_io.hpp"

namespace coplanner {

// Scripted scenario builders for the desk-scale benchmark: straight-lane
// following, a lead hard-brake, an adjacent-lane merge, an unprotected left
// across oncoming traffic, and a speed-varying lead. All run at 10 Hz with an
// 8 s horizon and a 4 s branching time.

namespace library {

inline constexpr double kDt = 0.1;
inline constexpr int kHorizonSteps = 80;
inline constexpr int kTbSteps = 40;
inline constexpr int kHistorySteps = 21;
inline constexpr double kScriptDuration = 16.0;

inline std::vector<Vec2> straight_line(double y, double x_from, double x_to, double step = 10.0) {
  std::vector<Vec2> pts;
  const double len = x_to - x_from;
  const int n = std::max(2, static_cast<int>(std::ceil(std::abs(len) / step)) + 1);
  for (int i = 0; i < n; ++i) {
    pts.push_back({x_from + len * i / (n - 1), y});
  }
  return pts;
}

// History of a constant-speed approach along a path, ending at arc s_end.
inline std::vector<AgentState> approach_history(const Polyline& path, double s_end, double speed) {
  std::vector<AgentState> hist(kHistorySteps);
  for (int i = 0; i < kHistorySteps; ++i) {
    const double back = (kHistorySteps - 1 - i) * kDt * speed;
    const double s = std::max(0.0, s_end - back);
    const Vec2 p = path.point_at(s);
    const Vec2 t = path.tangent_at(s);
    hist[static_cast<std::size_t>(i)] = AgentState{p.x, p.y, std::atan2(t.y, t.x), speed};
  }
  return hist;
}

// Script following a path with a time-varying speed profile; displacement
// uses the updated speed, matching the simulator's integration convention.
inline AgentScript script_along(int agent_id, const Polyline& path, double s0,
                                const std::function<double(double)>& speed_at) {
  AgentScript sc;
  sc.agent_id = agent_id;
  const int n = static_cast<int>(std::lround(kScriptDuration / kDt));
  double s = s0;
  double v = std::max(0.0, speed_at(0.0));
  for (int i = 0; i <= n; ++i) {
    const double t = i * kDt;
    if (i > 0) {
      v = std::max(0.0, speed_at(t));
      s = std::min(s + v * kDt, path.length());
    }
    const Vec2 p = path.point_at(s);
    const Vec2 tg = path.tangent_at(s);
    sc.waypoints_timed.push_back({t, p.x, p.y, std::atan2(tg.y, tg.x), v});
  }
  return sc;
}

inline AgentSpec vehicle_spec(int id, const std::string& role, const Polyline& path, double s_end,
                              double speed) {
  AgentSpec spec;
  spec.id = id;
  spec.role = role;
  spec.dims = Dims{4.6, 1.9};
  spec.history = approach_history(path, s_end, speed);
  return spec;
}

inline Scenario straight_base(const std::string& name, double cruise) {
  Scenario s;
  s.name = name;
  s.dt = kDt;
  s.horizon_steps = kHorizonSteps;
  s.t_b_steps = kTbSteps;
  s.reference_speed = cruise;
  s.route = straight_line(0.0, -80.0, 450.0);
  Corridor main;
  main.centerline = Polyline(straight_line(0.0, -80.0, 450.0));
  main.half_width = 1.75;
  s.corridors.push_back(std::move(main));
  const Polyline route(s.route);
  s.agents.push_back(vehicle_spec(0, "ego", route, route.project({0.0, 0.0}).s, cruise));
  return s;
}

}  // namespace library

inline Scenario make_empty_road(double cruise = 10.0) {
  return library::straight_base("empty_road", cruise);
}

inline Scenario make_lead_follow(double cruise = 10.0, double gap = 30.0) {
  Scenario s = library::straight_base("lead_follow", cruise);
  const Polyline lane = s.corridors.front().centerline;
  const double s_lead = lane.project({gap, 0.0}).s;
  s.agents.push_back(library::vehicle_spec(1, "vehicle", lane, s_lead, cruise));
  s.scripts.push_back(library::script_along(1, lane, s_lead, [=](double) { return cruise; }));
  return s;
}

inline Scenario make_lead_hard_brake(double cruise = 10.0, double gap = 35.0,
                                     double t_brake = 3.0, double decel = 5.0) {
  Scenario s = library::straight_base("lead_hard_brake", cruise);
  s.name = "lead_hard_brake";
  const Polyline lane = s.corridors.front().centerline;
  const double s_lead = lane.project({gap, 0.0}).s;
  s.agents.push_back(library::vehicle_spec(1, "vehicle", lane, s_lead, cruise));
  auto speed = [=](double t) { return std::max(0.0, cruise - decel * std::max(0.0, t - t_brake)); };
  s.scripts.push_back(library::script_along(1, lane, s_lead, speed));
  return s;
}

inline Scenario make_occluded_speed(double cruise = 10.0, double gap = 28.0, double amp = 3.0,
                                    double period = 5.0) {
  Scenario s = library::straight_base("occluded_speed", cruise);
  s.name = "occluded_speed";
  const Polyline lane = s.corridors.front().centerline;
  const double s_lead = lane.project({gap, 0.0}).s;
  s.agents.push_back(library::vehicle_spec(1, "vehicle", lane, s_lead, cruise));
  auto speed = [=](double t) {
    return std::max(0.0, cruise - amp * 0.5 * (1.0 - std::cos(2.0 * kPi * t / period)));
  };
  s.scripts.push_back(library::script_along(1, lane, s_lead, speed));
  return s;
}

inline Scenario make_adjacent_merge(double cruise = 10.0, double merger_ahead = 14.0,
                                    double merge_x = 20.0, double merge_len = 30.0) {
  Scenario s = library::straight_base("adjacent_merge", cruise);
  s.name = "adjacent_merge";

  // merge path: left lane until merge_x, smooth blend into the ego lane
  std::vector<Vec2> merge_pts;
  for (double x = -80.0; x <= 445.0; x += 2.5) {
    double y;
    if (x <= merge_x) {
      y = 3.5;
    } else if (x >= merge_x + merge_len) {
      y = 0.0;
    } else {
      const double u = (x - merge_x) / merge_len;
      y = 3.5 * (1.0 - (3.0 * u * u - 2.0 * u * u * u));
    }
    merge_pts.push_back({x, y});
  }
  Corridor merge_corr;
  merge_corr.centerline = Polyline(merge_pts);
  merge_corr.half_width = 1.75;
  s.corridors.push_back(merge_corr);

  const Polyline& merge_path = s.corridors.back().centerline;
  const double s_merger = merge_path.project({merger_ahead, 3.5}).s;
  s.agents.push_back(library::vehicle_spec(1, "vehicle", merge_path, s_merger, cruise));
  s.scripts.push_back(library::script_along(1, merge_path, s_merger, [=](double) { return cruise; }));
  return s;
}

inline Scenario make_unprotected_left(double cruise = 8.0, double oncoming_speed = 10.0,
                                      double oncoming_x = 75.0) {
  Scenario s;
  s.name = "unprotected_left";
  s.dt = library::kDt;
  s.horizon_steps = library::kHorizonSteps;
  s.t_b_steps = library::kTbSteps;
  s.reference_speed = cruise;

  // route: straight approach, quarter-circle left turn of radius 10, north leg
  const double turn_x = 25.0;
  const double radius = 10.0;
  std::vector<Vec2> route;
  for (double x = -80.0; x < turn_x; x += 5.0) route.push_back({x, 0.0});
  for (int i = 0; i <= 18; ++i) {
    const double th = (kPi / 2.0) * i / 18.0;
    route.push_back({turn_x + radius * std::sin(th), radius * (1.0 - std::cos(th))});
  }
  for (double y = radius + 5.0; y <= 100.0; y += 5.0) route.push_back({turn_x + radius, y});
  s.route = route;

  Corridor ego_corr;
  ego_corr.centerline = Polyline(route);
  ego_corr.half_width = 2.2;
  s.corridors.push_back(std::move(ego_corr));

  Corridor oncoming_corr;
  oncoming_corr.centerline = Polyline(library::straight_line(3.5, 140.0, -80.0));
  oncoming_corr.half_width = 1.75;
  s.corridors.push_back(oncoming_corr);

  const Polyline route_line(route);
  s.agents.push_back(library::vehicle_spec(0, "ego", route_line,
                                           route_line.project({0.0, 0.0}).s, cruise));
  const Polyline& opp = s.corridors.back().centerline;
  const double s_opp = opp.project({oncoming_x, 3.5}).s;
  s.agents.push_back(library::vehicle_spec(1, "vehicle", opp, s_opp, oncoming_speed));
  s.scripts.push_back(library::script_along(1, opp, s_opp, [=](double) { return oncoming_speed; }));
  return s;
}

// Displaces the ego's initial pose and rebuilds a straight-line history that
// ends in it. Used by data generation so the training set contains recovery
// behavior (off-center, tilted, or slowed egos steering back to the lane).
inline Scenario perturb_ego(Scenario s, double lateral, double heading, double speed) {
  std::vector<AgentState>& hist = s.agents.front().history;
  const AgentState nominal = hist.back();
  AgentState start;
  start.heading = wrap_angle(nominal.heading + heading);
  const Vec2 offset = Vec2{0.0, lateral}.rotated(nominal.heading);
  start.x = nominal.x + offset.x;
  start.y = nominal.y + offset.y;
  start.speed = std::max(0.0, speed);
  const int n = static_cast<int>(hist.size());
  for (int i = 0; i < n; ++i) {
    const double back = (n - 1 - i) * s.dt * start.speed;
    hist[static_cast<std::size_t>(i)] =
        AgentState{start.x - back * std::cos(start.heading),
                   start.y - back * std::sin(start.heading), start.heading, start.speed};
  }
  return s;
}

// The shipped five-scenario evaluation suite.
inline std::vector<Scenario> scenario_library() {
  return {make_empty_road(), make_lead_follow(), make_lead_hard_brake(), make_adjacent_merge(),
          make_unprotected_left()};
}

}  // namespace coplanner
