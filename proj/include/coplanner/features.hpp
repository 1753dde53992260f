#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "coplanner/scene.hpp"

namespace coplanner {

// Ego-centric normalization frame: poses are expressed relative to the ego
// pose at the current time and positions divided by pos_scale so the
// diffusion state is O(1).
struct NormFrame {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double pos_scale = 50.0;
  double speed_scale = 15.0;

  Vec2 to_local(const Vec2& p) const { return (p - Vec2{x, y}).rotated(-heading); }
  Vec2 to_world(const Vec2& p) const { return p.rotated(heading) + Vec2{x, y}; }

  AgentState to_local(const AgentState& s) const {
    const Vec2 p = to_local(Vec2{s.x, s.y});
    return {p.x, p.y, wrap_angle(s.heading - heading), s.speed};
  }
  AgentState to_world(const AgentState& s) const {
    const Vec2 p = to_world(Vec2{s.x, s.y});
    return {p.x, p.y, wrap_angle(s.heading + heading), s.speed};
  }
};

struct EncoderConfig {
  int max_agents = 3;        // model agent slots, ego included
  int history_steps = 21;    // 2 s at 10 Hz, endpoints inclusive
  int route_samples = 16;
  double route_spacing = 5.0;
  int max_corridors = 4;
  int corridor_samples = 6;
  double corridor_spacing = 8.0;
  double pos_scale = 50.0;
  double speed_scale = 15.0;

  int per_agent_dim() const { return 1 + 2 + history_steps * 5; }
  int context_dim() const {
    return max_agents * per_agent_dim() + route_samples * 4 +
           max_corridors * (3 + corridor_samples * 2) + 2;
  }
};

inline NormFrame frame_from_context(const ScenarioContext& ctx, const EncoderConfig& enc) {
  const AgentState& ego = ctx.current_state(0);
  return NormFrame{ego.x, ego.y, ego.heading, enc.pos_scale, enc.speed_scale};
}

// Fixed-size conditioning vector: agent history slots with validity flags,
// route samples ahead of the ego, corridor samples, and global scalars.
inline Eigen::VectorXd encode_context(const ScenarioContext& ctx, const EncoderConfig& enc) {
  validate_context(ctx);
  if (ctx.num_agents() > enc.max_agents) {
    throw StructuralError("scenario agent count exceeds encoder slots");
  }
  const NormFrame frame = frame_from_context(ctx, enc);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(enc.context_dim());
  int off = 0;

  for (int slot = 0; slot < enc.max_agents; ++slot) {
    if (slot < ctx.num_agents()) {
      v[off] = 1.0;
      v[off + 1] = ctx.agent_dims[slot].length / 10.0;
      v[off + 2] = ctx.agent_dims[slot].width / 3.0;
      const auto& hist = ctx.agent_histories[slot];
      const int n = static_cast<int>(hist.size());
      for (int i = 0; i < enc.history_steps; ++i) {
        // oldest first; short histories repeat their first frame
        const int src = std::max(0, n - enc.history_steps + i);
        const AgentState s = frame.to_local(hist[std::min(src, n - 1)]);
        const int base = off + 3 + i * 5;
        v[base + 0] = s.x / enc.pos_scale;
        v[base + 1] = s.y / enc.pos_scale;
        v[base + 2] = std::cos(s.heading);
        v[base + 3] = std::sin(s.heading);
        v[base + 4] = s.speed / enc.speed_scale;
      }
    }
    off += enc.per_agent_dim();
  }

  const Vec2 ego_pos{frame.x, frame.y};
  const double s0 = ctx.route.project(ego_pos).s;
  for (int i = 0; i < enc.route_samples; ++i) {
    const double s = std::min(s0 + i * enc.route_spacing, ctx.route.length());
    const Vec2 p = frame.to_local(ctx.route.point_at(s));
    const Vec2 t = ctx.route.tangent_at(s).rotated(-frame.heading);
    v[off + 0] = p.x / enc.pos_scale;
    v[off + 1] = p.y / enc.pos_scale;
    v[off + 2] = t.x;
    v[off + 3] = t.y;
    off += 4;
  }

  for (int c = 0; c < enc.max_corridors; ++c) {
    if (c < static_cast<int>(ctx.lane_corridors.size())) {
      const Corridor& corr = ctx.lane_corridors[c];
      v[off] = 1.0;
      v[off + 1] = corr.half_width / 5.0;
      v[off + 2] = corr.stop_flag ? 1.0 : 0.0;
      const double cs0 = corr.centerline.project(ego_pos).s;
      for (int i = 0; i < enc.corridor_samples; ++i) {
        const double s = std::min(cs0 + i * enc.corridor_spacing, corr.centerline.length());
        const Vec2 p = frame.to_local(corr.centerline.point_at(s));
        v[off + 3 + i * 2 + 0] = p.x / enc.pos_scale;
        v[off + 3 + i * 2 + 1] = p.y / enc.pos_scale;
      }
    }
    off += 3 + enc.corridor_samples * 2;
  }

  v[off + 0] = ctx.reference_speed / enc.speed_scale;
  v[off + 1] = ctx.current_state(0).speed / enc.speed_scale;
  return v;
}

// Model space: poses are expressed in the ego frame, scaled, and position
// channels are offset by a constant-velocity extrapolation of each agent's
// current state. The denoiser therefore predicts deviations from "everyone
// keeps their current motion", which is zero almost everywhere on nominal
// scenes. Heading channels stay absolute (cos/sin are O(1) already).
struct ModelSpace {
  NormFrame frame;
  EncoderConfig enc;
  std::vector<AgentState> current;  // world-frame current state per agent
  double dt = 0.1;

  // CV baseline tensor for max_agents slots over the given horizon; zero in
  // the cos/sin channels and in invalid slots.
  Eigen::VectorXd baseline(int horizon_steps) const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(tensor_dim(enc.max_agents, horizon_steps));
    for (std::size_t a = 0; a < current.size(); ++a) {
      const AgentState local = frame.to_local(current[a]);
      const double vx = local.speed * std::cos(local.heading);
      const double vy = local.speed * std::sin(local.heading);
      for (int t = 0; t <= horizon_steps; ++t) {
        const int base = tensor_index(static_cast<int>(a), t, 0, horizon_steps);
        v[base + 0] = (local.x + vx * t * dt) / frame.pos_scale;
        v[base + 1] = (local.y + vy * t * dt) / frame.pos_scale;
      }
    }
    return v;
  }
};

inline ModelSpace make_model_space(const ScenarioContext& ctx, const EncoderConfig& enc) {
  ModelSpace space;
  space.frame = frame_from_context(ctx, enc);
  space.enc = enc;
  space.dt = ctx.dt;
  for (int a = 0; a < ctx.num_agents(); ++a) space.current.push_back(ctx.current_state(a));
  return space;
}

// World-frame joint trajectory -> normalized model tensor with max_agents
// slots; absent slots stay zero. Layout matches scene.hpp's tensor layout
// with num_agents == enc.max_agents.
inline Eigen::VectorXd joint_to_model_tensor(const JointTrajectory& joint, const NormFrame& frame,
                                             const EncoderConfig& enc) {
  if (joint.num_agents() > enc.max_agents) {
    throw StructuralError("joint trajectory agent count exceeds model slots");
  }
  Eigen::VectorXd v = Eigen::VectorXd::Zero(tensor_dim(enc.max_agents, joint.horizon_steps));
  for (int a = 0; a < joint.num_agents(); ++a) {
    for (int t = 0; t <= joint.horizon_steps; ++t) {
      const AgentState s = frame.to_local(joint.agents[a].states[t]);
      const int base = tensor_index(a, t, 0, joint.horizon_steps);
      v[base + 0] = s.x / frame.pos_scale;
      v[base + 1] = s.y / frame.pos_scale;
      v[base + 2] = std::cos(s.heading);
      v[base + 3] = std::sin(s.heading);
    }
  }
  return v;
}

inline Eigen::VectorXd to_model(const JointTrajectory& joint, const ModelSpace& space) {
  return joint_to_model_tensor(joint, space.frame, space.enc) - space.baseline(joint.horizon_steps);
}

// Inverse of joint_to_model_tensor for the first num_agents slots.
inline JointTrajectory model_tensor_to_joint(const Eigen::VectorXd& v, int num_agents,
                                             int horizon_steps, double dt, const NormFrame& frame,
                                             const EncoderConfig& enc) {
  if (v.size() != tensor_dim(enc.max_agents, horizon_steps)) {
    throw StructuralError("model tensor has unexpected size");
  }
  JointTrajectory joint;
  joint.horizon_steps = horizon_steps;
  joint.agents.resize(num_agents);
  for (int a = 0; a < num_agents; ++a) {
    Trajectory& traj = joint.agents[a];
    traj.dt = dt;
    traj.states.resize(horizon_steps + 1);
    for (int t = 0; t <= horizon_steps; ++t) {
      const int base = tensor_index(a, t, 0, horizon_steps);
      AgentState local;
      local.x = v[base + 0] * frame.pos_scale;
      local.y = v[base + 1] * frame.pos_scale;
      local.heading = wrap_angle(std::atan2(v[base + 3], v[base + 2]));
      traj.states[t] = frame.to_world(local);
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

inline JointTrajectory from_model(const Eigen::VectorXd& v, int num_agents, int horizon_steps,
                                  const ModelSpace& space) {
  return model_tensor_to_joint(v + space.baseline(horizon_steps), num_agents, horizon_steps,
                               space.dt, space.frame, space.enc);
}

}  // namespace coplanner
