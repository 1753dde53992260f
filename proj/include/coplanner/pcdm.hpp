#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "coplanner/denoise.hpp"
#include "coplanner/errors.hpp"
#include "coplanner/features.hpp"
#include "coplanner/rng.hpp"
#include "coplanner/schedule.hpp"
#include "coplanner/scene.hpp"

namespace coplanner {

struct PcdmConfig {
  int K = 3;  // short-term segment groups
  int N = 3;  // branches per group
  BranchSplit split;
};

// Draw from q_{h|0}(. | anchor) over the anchor entries; h = 0 returns the
// anchor bitwise.
inline Eigen::VectorXd renoise(const Eigen::VectorXd& anchor, int h, const DiffusionSchedule& s,
                               RngStream& rng) {
  if (h == 0) return anchor;
  s.check_step(h);
  const double ab = s.alpha_bar_at(h);
  return std::sqrt(ab) * anchor + std::sqrt(1.0 - ab) * rng.normal_vector(anchor.size());
}

// Masked reverse diffusion over a flat state: anchored entries (anchor_idx[i]
// holds anchor_values[i]) are re-noised from the clean anchor and overwrite
// the state at every step, including initialization; the rest is denoised.
// Columns of the result are N independent branches, one rng stream each.
// The final merge happens at h = 0, so anchored entries are exact.
inline Eigen::MatrixXd masked_reverse_chain(const Eigen::VectorXd& anchor_values,
                                            const std::vector<int>& anchor_idx, int state_dim,
                                            const Denoiser& model, const DiffusionSchedule& sched,
                                            const Eigen::VectorXd* context, int N,
                                            std::vector<RngStream>& rngs) {
  if (static_cast<int>(rngs.size()) != N) throw StructuralError("need one rng stream per branch");
  if (anchor_values.size() != static_cast<Eigen::Index>(anchor_idx.size())) {
    throw StructuralError("anchor values/index size mismatch");
  }
  Eigen::MatrixXd x(state_dim, N);
  for (int n = 0; n < N; ++n) {
    x.col(n) = rngs[static_cast<std::size_t>(n)].normal_vector(state_dim);
    const Eigen::VectorXd noised = renoise(anchor_values, sched.H, sched,
                                           rngs[static_cast<std::size_t>(n)]);
    for (std::size_t i = 0; i < anchor_idx.size(); ++i) {
      x(anchor_idx[i], n) = noised[static_cast<Eigen::Index>(i)];
    }
  }
  for (int h = sched.H; h >= 1; --h) {
    DenoiserInput in{x, static_cast<double>(h) / sched.H, sched.alpha_bar_at(h), context,
                     anchor_idx.empty() ? nullptr : &anchor_values};
    const Eigen::MatrixXd x0_hat = model.predict_x0(in);
    const Eigen::MatrixXd eps_hat = x0_to_eps(x, x0_hat, h, sched);
    x = ancestral_step(x, eps_hat, h, sched, rngs);
    for (int n = 0; n < N; ++n) {
      const Eigen::VectorXd noised = renoise(anchor_values, h - 1, sched,
                                             rngs[static_cast<std::size_t>(n)]);
      for (std::size_t i = 0; i < anchor_idx.size(); ++i) {
        x(anchor_idx[i], n) = noised[static_cast<Eigen::Index>(i)];
      }
    }
  }
  return x;
}

// Unconditional reverse chain (no frozen entries).
inline Eigen::MatrixXd reverse_chain(int state_dim, const Denoiser& model,
                                     const DiffusionSchedule& sched, const Eigen::VectorXd* context,
                                     int N, std::vector<RngStream>& rngs) {
  static const std::vector<int> no_anchor;
  return masked_reverse_chain(Eigen::VectorXd(0), no_anchor, state_dim, model, sched, context, N,
                              rngs);
}

// Step A: sample K joint short-term segments from the shared model. Frame 0
// of every segment is overwritten with the measured current state; diffusion
// output at t = 0 is not trusted.
inline std::vector<SharedSegment> sample_shared(const ScenarioContext& ctx, const Denoiser& model,
                                                const DiffusionSchedule& sched,
                                                const EncoderConfig& enc, const BranchSplit& split,
                                                int K, std::uint64_t seed) {
  if (model.role() != "shared") throw ConfigError("sample_shared requires a 'shared' model");
  validate_context(ctx);
  const ModelSpace space = make_model_space(ctx, enc);
  const Eigen::VectorXd context = encode_context(ctx, enc);
  const int state_dim = tensor_dim(enc.max_agents, split.t_b_steps);
  std::vector<RngStream> rngs;
  rngs.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) rngs.emplace_back(derive_seed(seed, {0x53u, static_cast<std::uint64_t>(k)}));
  const Eigen::MatrixXd samples = reverse_chain(state_dim, model, sched, &context, K, rngs);

  std::vector<SharedSegment> out;
  out.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    SharedSegment seg;
    seg.split = split;
    seg.joint = from_model(samples.col(k), ctx.num_agents(), split.t_b_steps, space);
    for (int a = 0; a < ctx.num_agents(); ++a) {
      seg.joint.agents[a].states.front() = ctx.current_state(a);
    }
    out.push_back(std::move(seg));
  }
  return out;
}

// Step B (Algorithm 1): complete N joint futures that share the anchor
// prefix exactly. The suffix comes from the masked reverse chain; the output
// is the literal concatenation [anchor, branch].
inline std::vector<JointTrajectory> complete_branches(const SharedSegment& anchor,
                                                      const ScenarioContext& ctx,
                                                      const Denoiser& model,
                                                      const DiffusionSchedule& sched,
                                                      const EncoderConfig& enc, int N,
                                                      std::uint64_t seed) {
  if (model.role() != "full") throw ConfigError("complete_branches requires a 'full' model");
  validate_context(ctx);
  if (anchor.joint.num_agents() != ctx.num_agents()) {
    throw StructuralError("anchor agent count does not match context");
  }
  if (anchor.joint.horizon_steps != anchor.split.t_b_steps) {
    throw StructuralError("anchor joint length inconsistent with its split");
  }
  const BranchSplit& split = anchor.split;
  const ModelSpace space = make_model_space(ctx, enc);
  const Eigen::VectorXd context = encode_context(ctx, enc);
  const Eigen::VectorXd anchor_tensor = to_model(anchor.joint, space);
  const std::vector<int> anchor_idx =
      prefix_indices(enc.max_agents, split.horizon_steps, split.t_b_steps);
  const int state_dim = tensor_dim(enc.max_agents, split.horizon_steps);

  std::vector<RngStream> rngs;
  rngs.reserve(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) rngs.emplace_back(derive_seed(seed, {0x42u, static_cast<std::uint64_t>(n)}));
  const Eigen::MatrixXd samples = masked_reverse_chain(anchor_tensor, anchor_idx, state_dim, model,
                                                       sched, &context, N, rngs);

  std::vector<JointTrajectory> out;
  out.reserve(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) {
    const JointTrajectory decoded =
        from_model(samples.col(n), ctx.num_agents(), split.horizon_steps, space);
    BranchSegment branch;
    branch.split = split;
    branch.dt = ctx.dt;
    for (int a = 0; a < ctx.num_agents(); ++a) {
      branch.agents.emplace_back(decoded.agents[a].states.begin() + split.prefix_states(),
                                 decoded.agents[a].states.end());
    }
    out.push_back(concat(anchor, branch));
  }
  return out;
}

}  // namespace coplanner
