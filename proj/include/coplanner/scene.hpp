#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "coplanner/errors.hpp"
#include "coplanner/geometry.hpp"

namespace coplanner {

struct AgentState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // wrapped to (-pi, pi]
  double speed = 0.0;    // >= 0

  Vec2 position() const { return {x, y}; }
  Vec2 velocity() const { return {speed * std::cos(heading), speed * std::sin(heading)}; }
};

inline AgentState make_agent_state(double x, double y, double heading, double speed) {
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(heading) || !std::isfinite(speed)) {
    throw ValidationError("agent state has non-finite fields");
  }
  if (speed < 0.0) throw ValidationError("agent speed must be non-negative");
  return AgentState{x, y, wrap_angle(heading), speed};
}

// One agent's motion over a fixed horizon; states.size() == horizon_steps + 1.
struct Trajectory {
  std::vector<AgentState> states;
  double dt = 0.1;

  int horizon_steps() const { return static_cast<int>(states.size()) - 1; }
};

// Stacked per-agent trajectories; agent 0 is always the ego vehicle.
struct JointTrajectory {
  std::vector<Trajectory> agents;
  int horizon_steps = 0;

  int num_agents() const { return static_cast<int>(agents.size()); }
  double dt() const { return agents.empty() ? 0.0 : agents.front().dt; }
};

inline void validate_joint(const JointTrajectory& j) {
  if (j.agents.empty()) throw StructuralError("joint trajectory needs at least one agent");
  for (const auto& a : j.agents) {
    if (a.horizon_steps() != j.horizon_steps) {
      throw StructuralError("joint trajectory member length mismatch");
    }
    if (a.dt != j.agents.front().dt) throw StructuralError("joint trajectory dt mismatch");
    if (a.dt <= 0.0) throw ValidationError("trajectory dt must be positive");
  }
}

inline JointTrajectory make_joint(std::vector<Trajectory> agents) {
  JointTrajectory j;
  j.horizon_steps = agents.empty() ? 0 : agents.front().horizon_steps();
  j.agents = std::move(agents);
  validate_joint(j);
  return j;
}

// Branching time: the prefix is the closed interval [0, t_b_steps]; the
// suffix covers (t_b_steps, horizon_steps].
struct BranchSplit {
  int t_b_steps = 0;
  int horizon_steps = 0;

  int prefix_states() const { return t_b_steps + 1; }
  int suffix_states() const { return horizon_steps - t_b_steps; }
  bool mask(int t) const { return t <= t_b_steps; }
};

inline BranchSplit make_branch_split(int t_b_steps, int horizon_steps) {
  if (t_b_steps < 0 || t_b_steps > horizon_steps) {
    throw StructuralError("branch split requires 0 <= t_b_steps <= horizon_steps");
  }
  return BranchSplit{t_b_steps, horizon_steps};
}

// Joint prefix over [0, t_b]; the anchor all branches of a group share.
struct SharedSegment {
  JointTrajectory joint;  // horizon_steps == split.t_b_steps
  BranchSplit split;

  int num_agents() const { return joint.num_agents(); }
  const Trajectory& ego() const { return joint.agents.front(); }
};

// Joint suffix over (t_b, horizon]; agents[a].size() == split.suffix_states().
struct BranchSegment {
  std::vector<std::vector<AgentState>> agents;
  double dt = 0.1;
  BranchSplit split;
};

inline std::pair<SharedSegment, BranchSegment> split(const JointTrajectory& joint,
                                                     const BranchSplit& s) {
  if (s.horizon_steps != joint.horizon_steps) {
    throw StructuralError("split horizon does not match joint trajectory horizon");
  }
  validate_joint(joint);
  SharedSegment shared;
  shared.split = s;
  shared.joint.horizon_steps = s.t_b_steps;
  BranchSegment branch;
  branch.split = s;
  branch.dt = joint.dt();
  for (const auto& traj : joint.agents) {
    Trajectory prefix;
    prefix.dt = traj.dt;
    prefix.states.assign(traj.states.begin(), traj.states.begin() + s.prefix_states());
    shared.joint.agents.push_back(std::move(prefix));
    branch.agents.emplace_back(traj.states.begin() + s.prefix_states(), traj.states.end());
  }
  return {std::move(shared), std::move(branch)};
}

inline JointTrajectory concat(const SharedSegment& prefix, const BranchSegment& suffix) {
  if (prefix.joint.num_agents() != static_cast<int>(suffix.agents.size())) {
    throw StructuralError("concat agent-count mismatch");
  }
  if (std::abs(prefix.joint.dt() - suffix.dt) > 1e-12) {
    throw StructuralError("concat dt mismatch");
  }
  JointTrajectory joint;
  joint.horizon_steps = prefix.split.horizon_steps;
  for (int a = 0; a < prefix.joint.num_agents(); ++a) {
    Trajectory traj;
    traj.dt = suffix.dt;
    traj.states = prefix.joint.agents[a].states;
    traj.states.insert(traj.states.end(), suffix.agents[a].begin(), suffix.agents[a].end());
    if (static_cast<int>(traj.states.size()) != joint.horizon_steps + 1) {
      throw StructuralError("concat produced wrong length");
    }
    joint.agents.push_back(std::move(traj));
  }
  return joint;
}

// ---------------------------------------------------------------------------
// Flat tensor layout: the diffusion state. Per state the encoding is
// (x, y, cos heading, sin heading); index = ((a * (horizon+1)) + t) * 4 + c.
// ---------------------------------------------------------------------------

inline constexpr int kStateChannels = 4;

inline int tensor_dim(int num_agents, int horizon_steps) {
  return num_agents * (horizon_steps + 1) * kStateChannels;
}

inline int tensor_index(int agent, int t, int channel, int horizon_steps) {
  return ((agent * (horizon_steps + 1)) + t) * kStateChannels + channel;
}

// Indices of all prefix entries (t <= t_b) in the full tensor, in the same
// order as the anchor's own tensor layout. Drives mask merges and re-noising.
inline std::vector<int> prefix_indices(int num_agents, int horizon_steps, int t_b_steps) {
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(num_agents) * (t_b_steps + 1) * kStateChannels);
  for (int a = 0; a < num_agents; ++a) {
    for (int t = 0; t <= t_b_steps; ++t) {
      for (int c = 0; c < kStateChannels; ++c) {
        idx.push_back(tensor_index(a, t, c, horizon_steps));
      }
    }
  }
  return idx;
}

inline Eigen::VectorXd to_tensor(const JointTrajectory& joint) {
  validate_joint(joint);
  Eigen::VectorXd v(tensor_dim(joint.num_agents(), joint.horizon_steps));
  for (int a = 0; a < joint.num_agents(); ++a) {
    for (int t = 0; t <= joint.horizon_steps; ++t) {
      const AgentState& s = joint.agents[a].states[t];
      const int base = tensor_index(a, t, 0, joint.horizon_steps);
      v[base + 0] = s.x;
      v[base + 1] = s.y;
      v[base + 2] = std::cos(s.heading);
      v[base + 3] = std::sin(s.heading);
    }
  }
  if (!v.allFinite()) throw ValidationError("to_tensor: non-finite entries");
  return v;
}

// Speeds are recovered from consecutive displacements (the tensor encoding
// carries pose only); the last state inherits the previous speed.
inline JointTrajectory from_tensor(const Eigen::VectorXd& v, int num_agents, int horizon_steps,
                                   double dt) {
  if (v.size() != tensor_dim(num_agents, horizon_steps)) {
    throw StructuralError("from_tensor: array length mismatch");
  }
  if (!v.allFinite()) throw ValidationError("from_tensor: non-finite entries");
  JointTrajectory joint;
  joint.horizon_steps = horizon_steps;
  joint.agents.resize(num_agents);
  for (int a = 0; a < num_agents; ++a) {
    Trajectory& traj = joint.agents[a];
    traj.dt = dt;
    traj.states.resize(horizon_steps + 1);
    for (int t = 0; t <= horizon_steps; ++t) {
      const int base = tensor_index(a, t, 0, horizon_steps);
      AgentState& s = traj.states[t];
      s.x = v[base + 0];
      s.y = v[base + 1];
      s.heading = wrap_angle(std::atan2(v[base + 3], v[base + 2]));
    }
    for (int t = 0; t < horizon_steps; ++t) {
      traj.states[t].speed =
          (traj.states[t + 1].position() - traj.states[t].position()).norm() / dt;
    }
    if (horizon_steps >= 1) {
      traj.states[horizon_steps].speed = traj.states[horizon_steps - 1].speed;
    }
  }
  return joint;
}

// ---------------------------------------------------------------------------
// Scenario context: everything the models and the scorer condition on.
// ---------------------------------------------------------------------------

struct Dims {
  double length = 4.6;
  double width = 1.9;
};

struct Corridor {
  Polyline centerline;
  double half_width = 1.75;
  bool stop_flag = false;
};

struct ScenarioContext {
  std::vector<std::vector<AgentState>> agent_histories;  // [agent][frame], ego first
  std::vector<Corridor> lane_corridors;
  Polyline route;
  std::vector<Dims> agent_dims;  // aligned with agent_histories; [0] is ego
  double reference_speed = 10.0;
  double dt = 0.1;

  int num_agents() const { return static_cast<int>(agent_histories.size()); }
  const AgentState& current_state(int agent) const { return agent_histories[agent].back(); }
};

inline void validate_context(const ScenarioContext& ctx) {
  if (ctx.agent_histories.empty()) throw ValidationError("context needs at least the ego agent");
  if (ctx.route.size() < 2) throw ValidationError("ego route must be non-empty (>= 2 points)");
  for (const auto& c : ctx.lane_corridors) {
    if (c.centerline.size() < 2) throw ValidationError("corridor centerline needs >= 2 points");
  }
  const std::size_t hlen = ctx.agent_histories.front().size();
  if (hlen == 0) throw ValidationError("agent history must be non-empty");
  for (const auto& h : ctx.agent_histories) {
    if (h.size() != hlen) throw ValidationError("agent history lengths differ");
  }
  if (ctx.agent_dims.size() != ctx.agent_histories.size()) {
    throw ValidationError("agent_dims size must match agent count");
  }
  if (ctx.dt <= 0.0) throw ValidationError("context dt must be positive");
}

}  // namespace coplanner
