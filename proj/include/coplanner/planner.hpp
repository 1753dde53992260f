#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "coplanner/denoise.hpp"
#include "coplanner/errors.hpp"
#include "coplanner/pcdm.hpp"
#include "coplanner/score.hpp"

namespace coplanner {

struct KinematicParams {
  double wheelbase = 2.8;    // m
  double steer_max = 0.6;    // rad
  double accel_min = -4.5;   // m/s^2
  double accel_max = 3.0;    // m/s^2
};

// Discrete kinematic bicycle update shared by the projection, the emergency
// profile and the simulator: speed responds to the command within the step,
// displacement uses the updated speed along the current heading.
inline AgentState bicycle_step(const AgentState& s, double accel, double steer, double dt,
                               const KinematicParams& kin) {
  AgentState n;
  const double v1 = std::max(0.0, s.speed + accel * dt);
  n.x = s.x + v1 * std::cos(s.heading) * dt;
  n.y = s.y + v1 * std::sin(s.heading) * dt;
  n.heading = wrap_angle(s.heading + (v1 / kin.wheelbase) * std::tan(steer) * dt);
  n.speed = v1;
  return n;
}

// Constant-deceleration stop along the current heading, stationary afterward.
inline Trajectory emergency_brake_profile(const AgentState& current, double decel, double dt,
                                          int horizon_steps, const KinematicParams& kin) {
  if (decel >= 0.0) throw ConfigError("emergency deceleration must be negative");
  Trajectory traj;
  traj.dt = dt;
  traj.states.reserve(static_cast<std::size_t>(horizon_steps) + 1);
  traj.states.push_back(current);
  for (int t = 0; t < horizon_steps; ++t) {
    const AgentState& s = traj.states.back();
    const double a = std::max(decel, -s.speed / dt);  // hit zero exactly, never reverse
    traj.states.push_back(bicycle_step(s, a, 0.0, dt, kin));
  }
  return traj;
}

// Greedy per-step control fitting: at each step pick the (accel, steer) pair
// that reaches the next raw waypoint under the bicycle update, clipped to the
// limits. Deterministic and always feasible; bicycle-feasible input is a
// fixed point.
inline Trajectory project_to_bicycle(const Trajectory& raw, const KinematicParams& kin) {
  if (raw.states.size() < 2) return raw;
  Trajectory out;
  out.dt = raw.dt;
  out.states.reserve(raw.states.size());
  out.states.push_back(raw.states.front());
  const double dt = raw.dt;
  for (std::size_t i = 1; i < raw.states.size(); ++i) {
    const AgentState& cur = out.states.back();
    const Vec2 target = raw.states[i].position();
    const Vec2 delta = target - cur.position();
    const double dist = delta.norm();
    const double v_des = dist / dt;
    const double accel = std::clamp((v_des - cur.speed) / dt, kin.accel_min, kin.accel_max);
    const double v1 = std::max(0.0, cur.speed + accel * dt);
    double steer = 0.0;
    if (v1 > 1e-6) {
      const double heading_des = dist > 1e-9 ? std::atan2(delta.y, delta.x) : cur.heading;
      const double yaw_rate_des = wrap_angle(heading_des - cur.heading) / dt;
      steer = std::clamp(std::atan(kin.wheelbase * yaw_rate_des / v1), -kin.steer_max,
                         kin.steer_max);
    }
    out.states.push_back(bicycle_step(cur, accel, steer, dt, kin));
  }
  return out;
}

struct PlannerConfig {
  PcdmConfig pcdm;
  ScoreWeights weights;
  EncoderConfig encoder;
  double replan_period = 1.0;      // s
  double emergency_decel = -3.5;   // m/s^2
  KinematicParams kinematics;
};

struct CycleStats {
  int shared_sampled = 0;
  int groups_retained = 0;
  int futures_generated = 0;
  int candidates_scored = 0;
  bool branch_stage_run = false;
};

struct LabeledFuture {
  int k = 0;
  int n = 0;
  JointTrajectory joint;
};

struct PlanResult {
  Trajectory plan;          // projected ego plan over [0, T]
  Trajectory raw_plan;      // selected ego branch before projection
  int k_star = -1;
  int n_star = -1;
  bool fallback = false;
  CycleStats stats;
  nlohmann::json score_report;
  std::vector<LabeledFuture> futures;  // all sampled joint futures, (k, n) order
};

// Planner interface the simulator drives; the diffusion planner and the test
// doubles implement it. Must be pure given (context, cycle, seed).
class PlannerBase {
 public:
  virtual ~PlannerBase() = default;
  virtual PlanResult plan_cycle(const ScenarioContext& ctx, int cycle, std::uint64_t seed) const = 0;
  virtual double replan_period() const = 0;
};

namespace detail {

inline nlohmann::json breakdown_to_json(const ScoreBreakdown& b) {
  return {{"collision_free", b.collision_free},
          {"drivable_compliant", b.drivable_compliant},
          {"ttc", b.ttc_score},
          {"comfort", b.comfort_score},
          {"progress", b.progress_score},
          {"composite", b.composite}};
}

}  // namespace detail

class Planner final : public PlannerBase {
 public:
  Planner(std::shared_ptr<const Denoiser> shared_model, std::shared_ptr<const Denoiser> full_model,
          DiffusionSchedule schedule, PlannerConfig config)
      : shared_(std::move(shared_model)),
        full_(std::move(full_model)),
        schedule_(std::move(schedule)),
        cfg_(std::move(config)) {
    if (shared_ && shared_->role() != "shared") throw ConfigError("planner needs a 'shared' model");
    if (full_ && full_->role() != "full") throw ConfigError("planner needs a 'full' model");
  }

  double replan_period() const override { return cfg_.replan_period; }
  const PlannerConfig& config() const { return cfg_; }

  PlanResult plan_cycle(const ScenarioContext& ctx, int cycle, std::uint64_t seed) const override {
    validate_context(ctx);
    const BranchSplit& split = cfg_.pcdm.split;
    PlanResult res;
    res.stats.shared_sampled = cfg_.pcdm.K;

    // Step A: sample K shared segments, pre-filter on [0, t_b].
    const std::uint64_t cycle_seed = derive_seed(seed, {static_cast<std::uint64_t>(cycle)});
    std::vector<SharedSegment> groups = sample_shared(ctx, *shared_, schedule_, cfg_.encoder,
                                                      split, cfg_.pcdm.K, cycle_seed);
    const Stage1Result s1 = stage1_prefilter(groups, ctx, cfg_.weights);

    nlohmann::json report;
    report["cycle"] = cycle;
    report["groups"] = nlohmann::json::array();

    if (s1.all_zero) {
      res.fallback = true;
      res.plan = emergency_brake_profile(ctx.current_state(0), cfg_.emergency_decel, ctx.dt,
                                         split.horizon_steps, cfg_.kinematics);
      res.raw_plan = res.plan;
      for (std::size_t k = 0; k < groups.size(); ++k) {
        report["groups"].push_back({{"k", static_cast<int>(k)},
                                    {"pre_score", s1.pre_scores[k]},
                                    {"pre_breakdown", detail::breakdown_to_json(s1.breakdowns[k])},
                                    {"candidates", nlohmann::json::array()},
                                    {"best_n", -1}});
      }
      report["k_star"] = -1;
      report["fallback"] = true;
      res.score_report = std::move(report);
      return res;
    }

    // Step B + C: complete N branches per retained group; the candidate set
    // is exactly the ego channels of those futures.
    res.stats.branch_stage_run = true;
    std::vector<GroupEvaluation> evals;
    std::vector<std::vector<Trajectory>> candidate_sets;
    for (int k : s1.retained) {
      const std::uint64_t group_seed =
          derive_seed(seed, {static_cast<std::uint64_t>(cycle), static_cast<std::uint64_t>(k)});
      std::vector<JointTrajectory> futures = complete_branches(
          groups[static_cast<std::size_t>(k)], ctx, *full_, schedule_, cfg_.encoder, cfg_.pcdm.N,
          group_seed);
      res.stats.futures_generated += static_cast<int>(futures.size());
      std::vector<Trajectory> candidates;
      candidates.reserve(futures.size());
      for (const auto& f : futures) candidates.push_back(f.agents.front());
      res.stats.candidates_scored += static_cast<int>(candidates.size());
      GroupEvaluation ev = stage2_aggregate(k, s1.pre_scores[static_cast<std::size_t>(k)],
                                            groups[static_cast<std::size_t>(k)], candidates,
                                            futures, ctx, cfg_.weights);
      evals.push_back(std::move(ev));
      candidate_sets.push_back(std::move(candidates));
      for (int n = 0; n < static_cast<int>(futures.size()); ++n) {
        res.futures.push_back({k, n, std::move(futures[static_cast<std::size_t>(n)])});
      }
    }
    res.stats.groups_retained = static_cast<int>(s1.retained.size());

    const Selection sel = select(evals);
    res.k_star = evals[static_cast<std::size_t>(sel.group)].k;
    res.n_star = sel.candidate;
    res.raw_plan = candidate_sets[static_cast<std::size_t>(sel.group)]
                                 [static_cast<std::size_t>(sel.candidate)];
    res.plan = project_to_bicycle(res.raw_plan, cfg_.kinematics);

    // report covers every sampled group, retained or not
    std::size_t evi = 0;
    for (std::size_t k = 0; k < groups.size(); ++k) {
      nlohmann::json jg;
      jg["k"] = static_cast<int>(k);
      jg["pre_score"] = s1.pre_scores[k];
      jg["pre_breakdown"] = detail::breakdown_to_json(s1.breakdowns[k]);
      jg["candidates"] = nlohmann::json::array();
      jg["best_n"] = -1;
      if (evi < evals.size() && evals[evi].k == static_cast<int>(k)) {
        const GroupEvaluation& ev = evals[evi];
        for (std::size_t n = 0; n < ev.candidate_means.size(); ++n) {
          nlohmann::json jc;
          jc["n"] = static_cast<int>(n);
          jc["mean_score"] = ev.candidate_means[n];
          jc["branch_scores"] = ev.branch_scores[n];
          nlohmann::json jb = nlohmann::json::array();
          for (const auto& b : ev.breakdowns[n]) jb.push_back(detail::breakdown_to_json(b));
          jc["breakdown"] = std::move(jb);
          jg["candidates"].push_back(std::move(jc));
        }
        jg["best_n"] = ev.best_candidate;
        ++evi;
      }
      report["groups"].push_back(std::move(jg));
    }
    report["k_star"] = res.k_star;
    report["fallback"] = false;
    res.score_report = std::move(report);
    return res;
  }

 private:
  std::shared_ptr<const Denoiser> shared_;
  std::shared_ptr<const Denoiser> full_;
  DiffusionSchedule schedule_;
  PlannerConfig cfg_;
};

}  // namespace coplanner
