#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "coplanner/errors.hpp"
#include "coplanner/geometry.hpp"
#include "coplanner/scene.hpp"

namespace coplanner {

struct ScoreWeights {
  double w_ttc = 5.0;
  double w_comfort = 2.0;
  double w_progress = 5.0;
  double drivable_margin = 0.3;     // m beyond corridor half-width
  double ttc_horizon = 1.0;         // s of constant-velocity projection
  double ttc_threshold = 0.95;      // s; projected collisions below this fail
  double max_lon_accel = 4.0;       // m/s^2
  double max_lat_accel = 4.9;       // m/s^2
  double max_jerk = 8.4;            // m/s^3
  double max_yaw_rate = 0.95;       // rad/s
};

struct ScoreBreakdown {
  bool collision_free = true;
  bool drivable_compliant = true;
  double ttc_score = 1.0;
  double comfort_score = 1.0;
  double progress_score = 1.0;
  double composite = 1.0;
};

// Gates multiply the weighted sub-score average; either gate false forces 0.
inline ScoreBreakdown make_breakdown(bool collision_free, bool drivable, double ttc,
                                     double comfort, double progress, const ScoreWeights& w) {
  ScoreBreakdown b;
  b.collision_free = collision_free;
  b.drivable_compliant = drivable;
  b.ttc_score = std::clamp(ttc, 0.0, 1.0);
  b.comfort_score = std::clamp(comfort, 0.0, 1.0);
  b.progress_score = std::clamp(progress, 0.0, 1.0);
  const double wsum = w.w_ttc + w.w_comfort + w.w_progress;
  b.composite = (collision_free && drivable)
                    ? (w.w_ttc * b.ttc_score + w.w_comfort * b.comfort_score +
                       w.w_progress * b.progress_score) /
                          wsum
                    : 0.0;
  return b;
}

namespace detail {

// Vehicles are covered by three discs along the body axis.
struct Footprint {
  Vec2 centers[3];
  double radius;
};

inline Footprint footprint(const AgentState& s, const Dims& d) {
  Footprint f;
  const Vec2 axis{std::cos(s.heading), std::sin(s.heading)};
  const double off = d.length / 3.0;
  f.centers[0] = Vec2{s.x, s.y} - axis * off;
  f.centers[1] = Vec2{s.x, s.y};
  f.centers[2] = Vec2{s.x, s.y} + axis * off;
  f.radius = std::hypot(d.length / 6.0, d.width / 2.0);
  return f;
}

inline bool footprints_overlap(const Footprint& a, const Footprint& b) {
  const double r = a.radius + b.radius;
  for (const Vec2& ca : a.centers) {
    for (const Vec2& cb : b.centers) {
      if ((ca - cb).squared_norm() < r * r) return true;
    }
  }
  return false;
}

inline AgentState project_cv(const AgentState& s, double dt) {
  AgentState p = s;
  p.x += s.speed * std::cos(s.heading) * dt;
  p.y += s.speed * std::sin(s.heading) * dt;
  return p;
}

}  // namespace detail

// True when the two vehicles' disc footprints overlap.
inline bool states_collide(const AgentState& a, const Dims& da, const AgentState& b,
                           const Dims& db) {
  return detail::footprints_overlap(detail::footprint(a, da), detail::footprint(b, db));
}

// True when every footprint disc center of the state lies within
// half_width + margin of some corridor centerline.
inline bool state_drivable(const AgentState& s, const Dims& d,
                           const std::vector<Corridor>& corridors, double margin) {
  if (corridors.empty()) return true;
  const detail::Footprint f = detail::footprint(s, d);
  for (const Vec2& c : f.centers) {
    bool inside = false;
    for (const Corridor& corr : corridors) {
      if (corr.centerline.project(c).distance <= corr.half_width + margin) {
        inside = true;
        break;
      }
    }
    if (!inside) return false;
  }
  return true;
}

// PDM-style composite score of an ego trajectory against one joint future
// over window steps [0, window_steps]. The future's own ego channel (agent 0)
// is ignored; the candidate is scored against the non-ego agents only.
inline ScoreBreakdown pdm_score(const Trajectory& ego, const JointTrajectory& future,
                                const ScenarioContext& ctx, int window_steps,
                                const ScoreWeights& w) {
  if (window_steps > ego.horizon_steps() || window_steps > future.horizon_steps) {
    throw StructuralError("score window exceeds trajectory length");
  }
  if (future.num_agents() != ctx.num_agents()) {
    throw StructuralError("future must cover every context agent");
  }
  const double dt = ego.dt;
  const Dims ego_dims = ctx.agent_dims.front();

  bool collision_free = true;
  bool drivable = true;
  bool ttc_ok = true;
  const int ttc_substeps = static_cast<int>(std::round(w.ttc_horizon / dt));
  for (int t = 0; t <= window_steps && (collision_free || drivable); ++t) {
    const AgentState& es = ego.states[t];
    for (int a = 1; a < future.num_agents() && collision_free; ++a) {
      if (states_collide(es, ego_dims, future.agents[a].states[t], ctx.agent_dims[a])) {
        collision_free = false;
      }
    }
    if (drivable && !state_drivable(es, ego_dims, ctx.lane_corridors, w.drivable_margin)) {
      drivable = false;
    }
    if (collision_free && ttc_ok) {
      for (int m = 1; m <= ttc_substeps && ttc_ok; ++m) {
        const double tau = m * dt;
        if (tau >= w.ttc_threshold) break;
        const AgentState ep = detail::project_cv(es, tau);
        for (int a = 1; a < future.num_agents(); ++a) {
          const AgentState ap = detail::project_cv(future.agents[a].states[t], tau);
          if (states_collide(ep, ego_dims, ap, ctx.agent_dims[a])) {
            ttc_ok = false;
            break;
          }
        }
      }
    }
  }

  // comfort: central differences over the window
  bool comfort_ok = true;
  for (int t = 1; t < window_steps && comfort_ok; ++t) {
    const Vec2 pm = ego.states[t - 1].position();
    const Vec2 p0 = ego.states[t].position();
    const Vec2 pp = ego.states[t + 1].position();
    const Vec2 acc = (pp - p0 * 2.0 + pm) * (1.0 / (dt * dt));
    const double hd = ego.states[t].heading;
    const Vec2 lon_axis{std::cos(hd), std::sin(hd)};
    if (std::abs(acc.dot(lon_axis)) > w.max_lon_accel) comfort_ok = false;
    if (std::abs(acc.cross(lon_axis)) > w.max_lat_accel) comfort_ok = false;
    const double yaw_rate = wrap_angle(ego.states[t + 1].heading - ego.states[t - 1].heading) /
                            (2.0 * dt);
    if (std::abs(yaw_rate) > w.max_yaw_rate) comfort_ok = false;
    if (t >= 2 && t + 2 <= window_steps) {
      const Vec2 pmm = ego.states[t - 2].position();
      const Vec2 ppp = ego.states[t + 2].position();
      const Vec2 jerk = (ppp - pp * 2.0 + pm * 2.0 - pmm) * (1.0 / (2.0 * dt * dt * dt));
      if (jerk.norm() > w.max_jerk) comfort_ok = false;
    }
  }

  // progress: route arc length gained relative to a constant-reference-speed
  // corridor follower over the same window
  double progress = 0.0;
  const double baseline = ctx.reference_speed * window_steps * dt;
  if (baseline > 1e-9) {
    const double s_start = ctx.route.project(ego.states.front().position()).s;
    const double s_end = ctx.route.project(ego.states[window_steps].position()).s;
    progress = std::clamp((s_end - s_start) / baseline, 0.0, 1.0);
  } else {
    progress = 1.0;
  }

  return make_breakdown(collision_free, drivable, ttc_ok ? 1.0 : 0.0, comfort_ok ? 1.0 : 0.0,
                        progress, w);
}

// ---------------------------------------------------------------------------
// Two-stage contingency-aware scoring.
// ---------------------------------------------------------------------------

struct Stage1Result {
  std::vector<double> pre_scores;          // E^pre_k for every input group
  std::vector<ScoreBreakdown> breakdowns;  // full gate/sub-score detail per group
  std::vector<int> retained;               // indices with E^pre_k > 0
  bool all_zero = false;
};

// Stage 1: score each group's ego prefix against its own shared segment over
// [0, t_b]. Groups with a zero score are dropped; all_zero triggers the
// emergency-braking fallback upstream.
inline Stage1Result stage1_prefilter(const std::vector<SharedSegment>& groups,
                                     const ScenarioContext& ctx, const ScoreWeights& w) {
  if (groups.empty()) throw ContractViolation("stage1_prefilter: no groups");
  Stage1Result r;
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const SharedSegment& g = groups[k];
    const ScoreBreakdown b = pdm_score(g.ego(), g.joint, ctx, g.split.t_b_steps, w);
    r.pre_scores.push_back(b.composite);
    r.breakdowns.push_back(b);
    if (b.composite > 0.0) r.retained.push_back(static_cast<int>(k));
  }
  r.all_zero = r.retained.empty();
  return r;
}

// Mean over branches for each candidate row. Exposed separately so the
// brute-force acceptance oracle can drive it with synthetic matrices.
inline std::vector<double> aggregate_mean(const std::vector<std::vector<double>>& scores) {
  std::vector<double> means;
  means.reserve(scores.size());
  for (const auto& row : scores) {
    if (row.empty()) throw ContractViolation("aggregate_mean: empty branch scores");
    double s = 0.0;
    for (double v : row) s += v;
    means.push_back(s / static_cast<double>(row.size()));
  }
  return means;
}

// Argmax with ties broken toward the lowest index.
inline int pick_best(const std::vector<double>& values) {
  if (values.empty()) throw ContractViolation("pick_best: empty values");
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[static_cast<std::size_t>(i)] > values[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

struct GroupEvaluation {
  int k = 0;
  double pre_score = 0.0;
  std::vector<std::vector<double>> branch_scores;        // [candidate][branch]
  std::vector<std::vector<ScoreBreakdown>> breakdowns;   // aligned with branch_scores
  std::vector<double> candidate_means;                   // E-bar per candidate
  int best_candidate = 0;
  double best_value = 0.0;
};

inline void validate_shared_prefix(const Trajectory& candidate, const Trajectory& anchor_ego,
                                   int t_b_steps, double tol = 1e-9) {
  if (candidate.horizon_steps() < t_b_steps) {
    throw StructuralError("candidate shorter than the shared prefix");
  }
  for (int t = 0; t <= t_b_steps; ++t) {
    const AgentState& a = candidate.states[t];
    const AgentState& b = anchor_ego.states[t];
    if (std::abs(a.x - b.x) > tol || std::abs(a.y - b.y) > tol) {
      throw ContractViolation("candidate does not share the group anchor prefix");
    }
  }
}

// Stage 2: full-horizon PDM score of every candidate against every sampled
// future of the group, aggregated by the equal-weight mean.
inline GroupEvaluation stage2_aggregate(int k, double pre_score, const SharedSegment& anchor,
                                        const std::vector<Trajectory>& candidates,
                                        const std::vector<JointTrajectory>& futures,
                                        const ScenarioContext& ctx, const ScoreWeights& w) {
  if (candidates.empty() || futures.empty()) {
    throw ContractViolation("stage2_aggregate: empty candidates or futures");
  }
  GroupEvaluation ev;
  ev.k = k;
  ev.pre_score = pre_score;
  const int window = anchor.split.horizon_steps;
  for (const auto& f : futures) {
    const auto& ego_of_future = f.agents.front();
    validate_shared_prefix(ego_of_future, anchor.ego(), anchor.split.t_b_steps);
  }
  for (const auto& cand : candidates) {
    validate_shared_prefix(cand, anchor.ego(), anchor.split.t_b_steps);
    std::vector<double> row;
    std::vector<ScoreBreakdown> brow;
    for (const auto& f : futures) {
      const ScoreBreakdown b = pdm_score(cand, f, ctx, window, w);
      row.push_back(b.composite);
      brow.push_back(b);
    }
    ev.branch_scores.push_back(std::move(row));
    ev.breakdowns.push_back(std::move(brow));
  }
  ev.candidate_means = aggregate_mean(ev.branch_scores);
  ev.best_candidate = pick_best(ev.candidate_means);
  ev.best_value = ev.candidate_means[static_cast<std::size_t>(ev.best_candidate)];
  return ev;
}

struct Selection {
  int group = 0;      // position in the evaluated-group list
  int candidate = 0;  // best candidate within that group
  double value = 0.0;
};

// Cross-group selection: within-group argmax already sits in GroupEvaluation;
// across groups the highest best_value wins, ties toward the lowest group.
inline Selection select(const std::vector<GroupEvaluation>& groups) {
  if (groups.empty()) throw ContractViolation("select: no retained groups");
  Selection sel;
  sel.group = 0;
  sel.candidate = groups.front().best_candidate;
  sel.value = groups.front().best_value;
  for (int i = 1; i < static_cast<int>(groups.size()); ++i) {
    const auto& g = groups[static_cast<std::size_t>(i)];
    if (g.best_value > sel.value) {
      sel.group = i;
      sel.candidate = g.best_candidate;
      sel.value = g.best_value;
    }
  }
  return sel;
}

}  // namespace coplanner
