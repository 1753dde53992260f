#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "json.hpp"

#include "coplanner/errors.hpp"
#include "coplanner/features.hpp"
#include "coplanner/rng.hpp"
#include "coplanner/schedule.hpp"
#include "coplanner/scene.hpp"

namespace coplanner {

// Inputs to an x0-prediction denoiser evaluation. Columns of x_h form a
// batch at one diffusion time. The anchor (model-space prefix tensor) is
// present exactly when the model completes a full horizon from a pivot.
struct DenoiserInput {
  const Eigen::MatrixXd& x_h;
  double t = 1.0;          // continuous time in (0, 1]
  double alpha_bar = 0.0;  // matching noise level
  const Eigen::VectorXd* context = nullptr;
  const Eigen::VectorXd* anchor = nullptr;
  const std::vector<std::uint8_t>* anchor_mask = nullptr;  // per-frame flags
};

class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual const std::string& role() const = 0;
  virtual Eigen::MatrixXd predict_x0(const DenoiserInput& in) const = 0;
};

// ---------------------------------------------------------------------------
// Analytic oracles used to verify the sampling machinery.
// ---------------------------------------------------------------------------

struct GaussianMixtureTarget {
  Eigen::VectorXd weights;                 // simplex
  std::vector<Eigen::VectorXd> means;      // per component
  std::vector<Eigen::VectorXd> variances;  // per component, diagonal entries
};

inline void validate_target(const GaussianMixtureTarget& t) {
  if (t.weights.size() == 0 || t.means.empty() || t.means.size() != t.variances.size() ||
      static_cast<std::size_t>(t.weights.size()) != t.means.size()) {
    throw StructuralError("gaussian mixture target shape mismatch");
  }
  if (std::abs(t.weights.sum() - 1.0) > 1e-9 || t.weights.minCoeff() < 0.0) {
    throw ValidationError("mixture weights must form a simplex");
  }
  for (const auto& v : t.variances) {
    if (v.size() != t.means.front().size()) {
      throw StructuralError("mixture component dimension mismatch");
    }
    if (v.minCoeff() <= 0.0) throw SingularityError("mixture covariance must be positive");
  }
}

// E[x0 | x_h] in closed form under the VP forward kernel: per component the
// posterior mean is mu + sqrt(ab) S (ab S + (1-ab) I)^{-1} (x - sqrt(ab) mu)
// (diagonal S), combined with the component responsibilities of x_h.
inline Eigen::VectorXd oracle_x0(const Eigen::VectorXd& x_h, double alpha_bar,
                                 const GaussianMixtureTarget& target) {
  validate_target(target);
  const double ab = alpha_bar;
  const double sab = std::sqrt(ab);
  const int n = static_cast<int>(target.means.size());
  Eigen::VectorXd log_r(n);
  std::vector<Eigen::VectorXd> post(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd& mu = target.means[i];
    const Eigen::VectorXd& var = target.variances[i];
    const Eigen::VectorXd marg_var = (ab * var.array() + (1.0 - ab)).matrix();
    const Eigen::VectorXd diff = x_h - sab * mu;
    log_r[i] = std::log(target.weights[i]) -
               0.5 * (marg_var.array().log().sum() +
                      (diff.array().square() / marg_var.array()).sum());
    post[i] = mu + (sab * var.array() * diff.array() / marg_var.array()).matrix();
  }
  const double mx = log_r.maxCoeff();
  Eigen::VectorXd r = (log_r.array() - mx).exp();
  r /= r.sum();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x_h.size());
  for (int i = 0; i < n; ++i) out += r[i] * post[i];
  return out;
}

// Responsibilities of x_h under the noised mixture; exposed for tests.
inline Eigen::VectorXd oracle_responsibilities(const Eigen::VectorXd& x_h, double alpha_bar,
                                               const GaussianMixtureTarget& target) {
  validate_target(target);
  const double ab = alpha_bar;
  const double sab = std::sqrt(ab);
  const int n = static_cast<int>(target.means.size());
  Eigen::VectorXd log_r(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd marg_var = (ab * target.variances[i].array() + (1.0 - ab)).matrix();
    const Eigen::VectorXd diff = x_h - sab * target.means[i];
    log_r[i] = std::log(target.weights[i]) -
               0.5 * (marg_var.array().log().sum() +
                      (diff.array().square() / marg_var.array()).sum());
  }
  const double mx = log_r.maxCoeff();
  Eigen::VectorXd r = (log_r.array() - mx).exp();
  return r / r.sum();
}

class GaussianMixtureOracle final : public Denoiser {
 public:
  GaussianMixtureOracle(GaussianMixtureTarget target, std::string role = "shared")
      : target_(std::move(target)), role_(std::move(role)) {
    validate_target(target_);
  }

  const std::string& role() const override { return role_; }

  Eigen::MatrixXd predict_x0(const DenoiserInput& in) const override {
    Eigen::MatrixXd out(in.x_h.rows(), in.x_h.cols());
    for (Eigen::Index c = 0; c < in.x_h.cols(); ++c) {
      out.col(c) = oracle_x0(in.x_h.col(c), in.alpha_bar, target_);
    }
    return out;
  }

  const GaussianMixtureTarget& target() const { return target_; }

 private:
  GaussianMixtureTarget target_;
  std::string role_;
};

// Single Gaussian with a full covariance; the verification target for
// conditional (pivot-frozen) sampling, where cross-time correlation matters.
struct GaussianTarget {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Closed-form Gaussian conditioning: the distribution of x0 given that the
// entries at idx equal the anchor values. The conditioned entries become
// deterministic (zero rows/columns in the covariance). An oracle built from
// the conditioned target is the ideal anchor-conditioned completion model.
inline GaussianTarget condition_on(const GaussianTarget& t, const std::vector<int>& idx,
                                   const Eigen::VectorXd& values) {
  const Eigen::Index dim = t.mean.size();
  if (static_cast<Eigen::Index>(idx.size()) != values.size()) {
    throw StructuralError("condition_on: index/value size mismatch");
  }
  std::vector<std::uint8_t> pinned(static_cast<std::size_t>(dim), 0);
  for (int i : idx) pinned[static_cast<std::size_t>(i)] = 1;
  std::vector<int> rest;
  for (Eigen::Index i = 0; i < dim; ++i) {
    if (!pinned[static_cast<std::size_t>(i)]) rest.push_back(static_cast<int>(i));
  }
  const Eigen::Index np = static_cast<Eigen::Index>(idx.size());
  const Eigen::Index ns = static_cast<Eigen::Index>(rest.size());
  Eigen::MatrixXd cov_pp(np, np), cov_sp(ns, np), cov_ss(ns, ns);
  Eigen::VectorXd mu_p(np), mu_s(ns);
  for (Eigen::Index a = 0; a < np; ++a) {
    mu_p[a] = t.mean[idx[static_cast<std::size_t>(a)]];
    for (Eigen::Index b = 0; b < np; ++b) {
      cov_pp(a, b) = t.cov(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
    }
  }
  for (Eigen::Index a = 0; a < ns; ++a) {
    mu_s[a] = t.mean[rest[static_cast<std::size_t>(a)]];
    for (Eigen::Index b = 0; b < np; ++b) {
      cov_sp(a, b) = t.cov(rest[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
    }
    for (Eigen::Index b = 0; b < ns; ++b) {
      cov_ss(a, b) = t.cov(rest[static_cast<std::size_t>(a)], rest[static_cast<std::size_t>(b)]);
    }
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(cov_pp);
  if (ldlt.info() != Eigen::Success) throw SingularityError("condition_on: singular prefix block");
  const Eigen::VectorXd cond_mean = mu_s + cov_sp * ldlt.solve(values - mu_p);
  const Eigen::MatrixXd cond_cov = cov_ss - cov_sp * ldlt.solve(cov_sp.transpose());

  GaussianTarget out;
  out.mean = t.mean;
  out.cov = Eigen::MatrixXd::Zero(dim, dim);
  for (Eigen::Index a = 0; a < np; ++a) out.mean[idx[static_cast<std::size_t>(a)]] = values[a];
  for (Eigen::Index a = 0; a < ns; ++a) {
    out.mean[rest[static_cast<std::size_t>(a)]] = cond_mean[a];
    for (Eigen::Index b = 0; b < ns; ++b) {
      out.cov(rest[static_cast<std::size_t>(a)], rest[static_cast<std::size_t>(b)]) =
          cond_cov(a, b);
    }
  }
  return out;
}

class GaussianOracle final : public Denoiser {
 public:
  GaussianOracle(GaussianTarget target, std::string role = "full")
      : target_(std::move(target)), role_(std::move(role)) {
    if (target_.cov.rows() != target_.cov.cols() || target_.cov.rows() != target_.mean.size()) {
      throw StructuralError("gaussian target shape mismatch");
    }
  }

  const std::string& role() const override { return role_; }

  Eigen::MatrixXd predict_x0(const DenoiserInput& in) const override {
    const double ab = in.alpha_bar;
    const double sab = std::sqrt(ab);
    const Eigen::Index d = target_.mean.size();
    Eigen::MatrixXd m = ab * target_.cov + (1.0 - ab) * Eigen::MatrixXd::Identity(d, d);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
    if (ldlt.info() != Eigen::Success) throw SingularityError("degenerate noised covariance");
    Eigen::MatrixXd diff = in.x_h.colwise() - (sab * target_.mean);
    Eigen::MatrixXd out = (sab * target_.cov) * ldlt.solve(diff);
    out.colwise() += target_.mean;
    return out;
  }

  const GaussianTarget& target() const { return target_; }

 private:
  GaussianTarget target_;
  std::string role_;
};

// ---------------------------------------------------------------------------
// Trainable denoiser: residual MLP with sinusoidal time embedding and
// additive conditioning projections.
// ---------------------------------------------------------------------------

struct MlpConfig {
  int state_dim = 0;
  int context_dim = 0;
  int anchor_dim = 0;  // 0 for the shared (prefix-only) model
  int width = 256;
  int blocks = 3;
  int time_embed_dim = 32;
};

struct MlpBlock {
  Eigen::MatrixXd w1, b1, w2, b2;  // biases stored as width x 1
};

struct MlpParams {
  Eigen::MatrixXd w_in, b_in;
  Eigen::MatrixXd w_time;
  Eigen::MatrixXd w_ctx;
  Eigen::MatrixXd w_anchor;    // empty when anchor_dim == 0
  Eigen::MatrixXd null_token;  // width x 1; stands in for a dropped anchor
  std::vector<MlpBlock> blocks;
  Eigen::MatrixXd w_out, b_out;

  template <class F>
  void visit(F&& f) {
    f("w_in", w_in);
    f("b_in", b_in);
    f("w_time", w_time);
    f("w_ctx", w_ctx);
    if (w_anchor.size() > 0) {
      f("w_anchor", w_anchor);
      f("null_token", null_token);
    }
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string p = "block" + std::to_string(i) + ".";
      f(p + "w1", blocks[i].w1);
      f(p + "b1", blocks[i].b1);
      f(p + "w2", blocks[i].w2);
      f(p + "b2", blocks[i].b2);
    }
    f("w_out", w_out);
    f("b_out", b_out);
  }

  template <class F>
  void visit(F&& f) const {
    const_cast<MlpParams*>(this)->visit(
        [&](const std::string& n, Eigen::MatrixXd& m) { f(n, static_cast<const Eigen::MatrixXd&>(m)); });
  }

  MlpParams zeros_like() const {
    MlpParams z = *this;
    z.visit([](const std::string&, Eigen::MatrixXd& m) { m.setZero(); });
    return z;
  }

  double squared_norm() const {
    double s = 0.0;
    visit([&](const std::string&, const Eigen::MatrixXd& m) { s += m.squaredNorm(); });
    return s;
  }
};

inline MlpParams init_mlp_params(const MlpConfig& cfg, RngStream& rng) {
  auto init = [&](Eigen::Index rows, Eigen::Index cols, double scale) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
    }
    return m;
  };
  MlpParams p;
  p.w_in = init(cfg.width, cfg.state_dim, 1.0 / std::sqrt(static_cast<double>(cfg.state_dim)));
  p.b_in = Eigen::MatrixXd::Zero(cfg.width, 1);
  p.w_time = init(cfg.width, cfg.time_embed_dim, 1.0 / std::sqrt(static_cast<double>(cfg.time_embed_dim)));
  p.w_ctx = init(cfg.width, cfg.context_dim, 1.0 / std::sqrt(static_cast<double>(cfg.context_dim)));
  if (cfg.anchor_dim > 0) {
    p.w_anchor = init(cfg.width, cfg.anchor_dim, 1.0 / std::sqrt(static_cast<double>(cfg.anchor_dim)));
    p.null_token = init(cfg.width, 1, 0.1);
  }
  p.blocks.resize(cfg.blocks);
  for (auto& b : p.blocks) {
    b.w1 = init(cfg.width, cfg.width, 1.0 / std::sqrt(static_cast<double>(cfg.width)));
    b.b1 = Eigen::MatrixXd::Zero(cfg.width, 1);
    // residual branches start near zero so the net begins close to identity
    b.w2 = init(cfg.width, cfg.width, 0.01 / std::sqrt(static_cast<double>(cfg.width)));
    b.b2 = Eigen::MatrixXd::Zero(cfg.width, 1);
  }
  p.w_out = init(cfg.state_dim, cfg.width, 0.01 / std::sqrt(static_cast<double>(cfg.width)));
  p.b_out = Eigen::MatrixXd::Zero(cfg.state_dim, 1);
  return p;
}

inline Eigen::MatrixXd sinusoidal_embedding(const Eigen::VectorXd& t, int dim) {
  const int half = dim / 2;
  Eigen::MatrixXd emb(dim, t.size());
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * k / std::max(1, half - 1));
    for (Eigen::Index b = 0; b < t.size(); ++b) {
      const double arg = 1000.0 * t[b] * freq;
      emb(2 * k, b) = std::sin(arg);
      emb(2 * k + 1, b) = std::cos(arg);
    }
  }
  if (dim % 2 == 1) emb.row(dim - 1).setZero();
  return emb;
}

struct MlpForwardCache {
  Eigen::MatrixXd emb;
  Eigen::MatrixXd h0;
  std::vector<Eigen::MatrixXd> block_in;   // H_i entering block i
  std::vector<Eigen::MatrixXd> block_act;  // tanh activations inside block i
  Eigen::MatrixXd h_final;                 // hidden state entering the head
};

// Batched forward pass: X (state x B), t per column, CTX (ctx x B), optional
// ANCHOR (anchor x B) with per-column dropped flags (dropped -> null token).
inline Eigen::MatrixXd mlp_forward_batch(const MlpParams& p, const MlpConfig& cfg,
                                         const Eigen::MatrixXd& X, const Eigen::VectorXd& t,
                                         const Eigen::MatrixXd& CTX, const Eigen::MatrixXd& ANCHOR,
                                         const std::vector<std::uint8_t>& anchor_dropped,
                                         MlpForwardCache* cache = nullptr) {
  if (X.rows() != cfg.state_dim) throw StructuralError("mlp input dimension mismatch");
  if (CTX.rows() != cfg.context_dim || CTX.cols() != X.cols()) {
    throw StructuralError("mlp context dimension mismatch");
  }
  const Eigen::Index B = X.cols();
  Eigen::MatrixXd emb = sinusoidal_embedding(t, cfg.time_embed_dim);
  Eigen::MatrixXd h = p.w_in * X + p.w_time * emb + p.w_ctx * CTX;
  h.colwise() += p.b_in.col(0);
  if (cfg.anchor_dim > 0) {
    if (ANCHOR.rows() != cfg.anchor_dim || ANCHOR.cols() != B) {
      throw StructuralError("mlp anchor dimension mismatch");
    }
    Eigen::MatrixXd aproj = p.w_anchor * ANCHOR;
    for (Eigen::Index b = 0; b < B; ++b) {
      if (!anchor_dropped.empty() && anchor_dropped[static_cast<std::size_t>(b)]) {
        h.col(b) += p.null_token.col(0);
      } else {
        h.col(b) += aproj.col(b);
      }
    }
  }
  if (cache) {
    cache->emb = emb;
    cache->h0 = h;
    cache->block_in.clear();
    cache->block_act.clear();
  }
  for (const auto& blk : p.blocks) {
    if (cache) cache->block_in.push_back(h);
    Eigen::MatrixXd pre = blk.w1 * h;
    pre.colwise() += blk.b1.col(0);
    Eigen::MatrixXd act = pre.array().tanh().matrix();
    if (cache) cache->block_act.push_back(act);
    Eigen::MatrixXd delta = blk.w2 * act;
    delta.colwise() += blk.b2.col(0);
    h += delta;
  }
  if (cache) cache->h_final = h;
  Eigen::MatrixXd y = p.w_out * h;
  y.colwise() += p.b_out.col(0);
  return y;
}

class MlpDenoiser final : public Denoiser {
 public:
  MlpDenoiser(MlpConfig cfg, MlpParams params, std::string role)
      : cfg_(cfg), params_(std::move(params)), role_(std::move(role)) {}

  const std::string& role() const override { return role_; }
  const MlpConfig& config() const { return cfg_; }
  const MlpParams& params() const { return params_; }
  MlpParams& mutable_params() { return params_; }

  Eigen::MatrixXd predict_x0(const DenoiserInput& in) const override {
    const Eigen::Index B = in.x_h.cols();
    if (!in.context) throw StructuralError("mlp denoiser needs a context vector");
    Eigen::MatrixXd ctx = in.context->replicate(1, B);
    Eigen::MatrixXd anchor(0, 0);
    if (cfg_.anchor_dim > 0) {
      if (!in.anchor) throw StructuralError("full-horizon denoiser needs an anchor");
      anchor = in.anchor->replicate(1, B);
    }
    const Eigen::VectorXd t = Eigen::VectorXd::Constant(B, in.t);
    return mlp_forward_batch(params_, cfg_, in.x_h, t, ctx, anchor, {});
  }

 private:
  MlpConfig cfg_;
  MlpParams params_;
  std::string role_;
};

// ---------------------------------------------------------------------------
// Training: x0-prediction loss with optional corruption mask and anchor
// dropout, momentum SGD with linear warmup. All math in double precision.
// ---------------------------------------------------------------------------

struct TrainingExample {
  Eigen::VectorXd context;
  Eigen::VectorXd x0;  // model-space tensor (prefix for shared, full horizon for full)
};

struct ScheduleParams {
  int H = 200;
  double beta_min = 1e-4;
  double beta_max = 2e-2;
};

struct TrainBatchAudit {
  const Eigen::MatrixXd& x0;
  const Eigen::MatrixXd& x_h;
  const std::vector<std::uint8_t>& anchor_dropped;
  const std::vector<int>& prefix_idx;
};

struct TrainConfig {
  int steps = 2000;
  int batch = 64;
  double lr = 3e-4;
  double momentum = 0.9;
  double warmup_frac = 0.05;
  double grad_clip = 10.0;
  std::uint64_t seed = 1;
  double dropout_rate = 0.5;        // full role only
  double prefix_loss_weight = 0.0;  // full role only; branch frames weigh 1
  // per-channel loss weights over (x, y, cos, sin); the lateral channel is
  // emphasized because the drivable corridor is much tighter sideways
  std::array<double, 4> channel_weights{1.0, 4.0, 1.0, 1.0};
  std::function<void(const TrainBatchAudit&)> batch_audit;
};

struct TrainStats {
  std::vector<double> loss_curve;
  int anchor_dropped = 0;
  int anchor_kept = 0;
  double final_loss = 0.0;
};

// Loss and gradient for one assembled batch; exact inputs exposed so the
// finite-difference check can drive it directly. elem_weight weighs squared
// errors per state dimension (zero masks prefix frames out of the loss).
inline double mlp_loss_and_grad(const MlpParams& p, const MlpConfig& cfg,
                                const Eigen::MatrixXd& X_h, const Eigen::VectorXd& t,
                                const Eigen::MatrixXd& CTX, const Eigen::MatrixXd& ANCHOR,
                                const std::vector<std::uint8_t>& anchor_dropped,
                                const Eigen::MatrixXd& X0, const Eigen::VectorXd& elem_weight,
                                MlpParams* grad) {
  MlpForwardCache cache;
  const Eigen::MatrixXd Y = mlp_forward_batch(p, cfg, X_h, t, CTX, ANCHOR, anchor_dropped, &cache);
  const double wsum = elem_weight.sum();
  if (wsum <= 0.0) throw ConfigError("loss element weights sum to zero");
  const double norm = wsum * static_cast<double>(X_h.cols());
  const Eigen::MatrixXd err = Y - X0;
  Eigen::MatrixXd werr = err;
  werr.array().colwise() *= elem_weight.array();
  const double loss = (werr.array() * err.array()).sum() / norm;
  if (!grad) return loss;

  MlpParams& g = *grad;
  Eigen::MatrixXd dY = (2.0 / norm) * werr;
  g.w_out += dY * cache.h_final.transpose();
  g.b_out.col(0) += dY.rowwise().sum();

  Eigen::MatrixXd dH = p.w_out.transpose() * dY;
  for (int i = static_cast<int>(p.blocks.size()) - 1; i >= 0; --i) {
    const MlpBlock& blk = p.blocks[static_cast<std::size_t>(i)];
    MlpBlock& gb = g.blocks[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd& act = cache.block_act[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd& h_in = cache.block_in[static_cast<std::size_t>(i)];
    gb.w2 += dH * act.transpose();
    gb.b2.col(0) += dH.rowwise().sum();
    Eigen::MatrixXd dPre = blk.w2.transpose() * dH;
    dPre.array() *= (1.0 - act.array().square());
    gb.w1 += dPre * h_in.transpose();
    gb.b1.col(0) += dPre.rowwise().sum();
    dH += blk.w1.transpose() * dPre;
  }

  g.w_in += dH * X_h.transpose();
  g.b_in.col(0) += dH.rowwise().sum();
  g.w_time += dH * cache.emb.transpose();
  g.w_ctx += dH * CTX.transpose();
  if (cfg.anchor_dim > 0) {
    Eigen::MatrixXd dH_kept = dH;
    for (Eigen::Index b = 0; b < dH.cols(); ++b) {
      const bool dropped =
          !anchor_dropped.empty() && anchor_dropped[static_cast<std::size_t>(b)];
      if (dropped) {
        g.null_token.col(0) += dH.col(b);
        dH_kept.col(b).setZero();
      }
    }
    g.w_anchor += dH_kept * ANCHOR.transpose();
  }
  return loss;
}

inline void clip_gradient(MlpParams& g, double max_norm) {
  if (max_norm <= 0.0) return;
  const double n = std::sqrt(g.squared_norm());
  if (n > max_norm) {
    const double s = max_norm / n;
    g.visit([&](const std::string&, Eigen::MatrixXd& m) { m *= s; });
  }
}

namespace detail {

struct MomentumState {
  MlpParams velocity;
};

inline void sgd_step(MlpParams& p, const MlpParams& g, MomentumState& mom, double lr,
                     double momentum) {
  std::vector<Eigen::MatrixXd*> pv, gv, vv;
  p.visit([&](const std::string&, Eigen::MatrixXd& m) { pv.push_back(&m); });
  const_cast<MlpParams&>(g).visit([&](const std::string&, Eigen::MatrixXd& m) { gv.push_back(&m); });
  mom.velocity.visit([&](const std::string&, Eigen::MatrixXd& m) { vv.push_back(&m); });
  for (std::size_t i = 0; i < pv.size(); ++i) {
    *vv[i] = momentum * (*vv[i]) - lr * (*gv[i]);
    *pv[i] += *vv[i];
  }
}

// linear warmup, then cosine decay to a tenth of the peak rate
inline double warmup_lr(double lr, int step, int total_steps, double warmup_frac) {
  const int warm = std::max(1, static_cast<int>(warmup_frac * total_steps));
  if (step < warm) return lr * (static_cast<double>(step + 1) / warm);
  const double u = static_cast<double>(step - warm) / std::max(1, total_steps - warm);
  return lr * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(3.14159265358979323846 * u)));
}

}  // namespace detail

struct TrainResult {
  std::shared_ptr<MlpDenoiser> model;
  TrainStats stats;
};

// Trains the short-term x0-prediction model on clean prefix tensors.
inline TrainResult train_shared(const std::vector<TrainingExample>& data, const MlpConfig& cfg,
                                const TrainConfig& tc, const ScheduleParams& sp) {
  if (data.empty()) throw ConfigError("train_shared: empty dataset");
  RngStream rng(derive_seed(tc.seed, {0x5153}));
  MlpParams params = init_mlp_params(cfg, rng);
  detail::MomentumState mom{params.zeros_like()};
  TrainStats stats;
  Eigen::VectorXd weights(cfg.state_dim);
  for (int d = 0; d < cfg.state_dim; ++d) {
    weights[d] = tc.channel_weights[static_cast<std::size_t>(d % kStateChannels)];
  }
  const std::vector<int> no_prefix;
  for (int step = 0; step < tc.steps; ++step) {
    const int B = tc.batch;
    Eigen::MatrixXd X0(cfg.state_dim, B), CTX(cfg.context_dim, B), X_h(cfg.state_dim, B);
    Eigen::VectorXd t(B);
    for (int b = 0; b < B; ++b) {
      const auto& ex = data[static_cast<std::size_t>(rng.next_u64() % data.size())];
      X0.col(b) = ex.x0;
      CTX.col(b) = ex.context;
      const double u = std::max(1e-4, rng.uniform());
      t[b] = u;
      const double ab = alpha_bar_continuous(u, sp.H, sp.beta_min, sp.beta_max);
      X_h.col(b) = std::sqrt(ab) * ex.x0 + std::sqrt(1.0 - ab) * rng.normal_vector(cfg.state_dim);
    }
    if (tc.batch_audit) {
      static const std::vector<std::uint8_t> none;
      tc.batch_audit(TrainBatchAudit{X0, X_h, none, no_prefix});
    }
    MlpParams grad = params.zeros_like();
    const double loss =
        mlp_loss_and_grad(params, cfg, X_h, t, CTX, Eigen::MatrixXd(0, 0), {}, X0, weights, &grad);
    clip_gradient(grad, tc.grad_clip);
    detail::sgd_step(params, grad, mom, detail::warmup_lr(tc.lr, step, tc.steps, tc.warmup_frac),
                     tc.momentum);
    stats.loss_curve.push_back(loss);
  }
  stats.final_loss = stats.loss_curve.empty() ? 0.0 : stats.loss_curve.back();
  return {std::make_shared<MlpDenoiser>(cfg, std::move(params), "shared"), std::move(stats)};
}

// Trains the full-horizon completion model. Noise is injected only on branch
// frames (t > t_b); prefix frames stay clean in the state and are fed as the
// anchor condition, replaced by the learned null token with dropout_rate.
inline TrainResult train_full(const std::vector<TrainingExample>& data, const MlpConfig& cfg,
                              const std::vector<int>& prefix_idx, const TrainConfig& tc,
                              const ScheduleParams& sp) {
  if (data.empty()) throw ConfigError("train_full: empty dataset");
  if (cfg.anchor_dim != static_cast<int>(prefix_idx.size())) {
    throw StructuralError("train_full: anchor_dim must equal prefix entry count");
  }
  if (tc.dropout_rate < 0.0 || tc.dropout_rate > 1.0) {
    throw ConfigError("train_full: dropout_rate must lie in [0, 1]");
  }
  RngStream rng(derive_seed(tc.seed, {0x46554c4c}));
  MlpParams params = init_mlp_params(cfg, rng);
  detail::MomentumState mom{params.zeros_like()};
  TrainStats stats;

  Eigen::VectorXd weights(cfg.state_dim);
  for (int d = 0; d < cfg.state_dim; ++d) {
    weights[d] = tc.channel_weights[static_cast<std::size_t>(d % kStateChannels)];
  }
  for (int idx : prefix_idx) weights[idx] *= tc.prefix_loss_weight;
  std::vector<std::uint8_t> is_prefix(static_cast<std::size_t>(cfg.state_dim), 0);
  for (int idx : prefix_idx) is_prefix[static_cast<std::size_t>(idx)] = 1;

  for (int step = 0; step < tc.steps; ++step) {
    const int B = tc.batch;
    Eigen::MatrixXd X0(cfg.state_dim, B), CTX(cfg.context_dim, B), X_h(cfg.state_dim, B);
    Eigen::MatrixXd ANCHOR(cfg.anchor_dim, B);
    Eigen::VectorXd t(B);
    std::vector<std::uint8_t> dropped(static_cast<std::size_t>(B), 0);
    for (int b = 0; b < B; ++b) {
      const auto& ex = data[static_cast<std::size_t>(rng.next_u64() % data.size())];
      X0.col(b) = ex.x0;
      CTX.col(b) = ex.context;
      const double u = std::max(1e-4, rng.uniform());
      t[b] = u;
      const double ab = alpha_bar_continuous(u, sp.H, sp.beta_min, sp.beta_max);
      for (int d = 0; d < cfg.state_dim; ++d) {
        X_h(d, b) = is_prefix[static_cast<std::size_t>(d)]
                        ? ex.x0[d]
                        : std::sqrt(ab) * ex.x0[d] + std::sqrt(1.0 - ab) * rng.normal();
      }
      for (int a = 0; a < cfg.anchor_dim; ++a) ANCHOR(a, b) = ex.x0[prefix_idx[a]];
      dropped[static_cast<std::size_t>(b)] = rng.uniform() < tc.dropout_rate ? 1 : 0;
      if (dropped[static_cast<std::size_t>(b)]) {
        ++stats.anchor_dropped;
      } else {
        ++stats.anchor_kept;
      }
    }
    if (tc.batch_audit) tc.batch_audit(TrainBatchAudit{X0, X_h, dropped, prefix_idx});
    MlpParams grad = params.zeros_like();
    const double loss =
        mlp_loss_and_grad(params, cfg, X_h, t, CTX, ANCHOR, dropped, X0, weights, &grad);
    clip_gradient(grad, tc.grad_clip);
    detail::sgd_step(params, grad, mom, detail::warmup_lr(tc.lr, step, tc.steps, tc.warmup_frac),
                     tc.momentum);
    stats.loss_curve.push_back(loss);
  }
  stats.final_loss = stats.loss_curve.empty() ? 0.0 : stats.loss_curve.back();
  return {std::make_shared<MlpDenoiser>(cfg, std::move(params), "full"), std::move(stats)};
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned JSON container with parameters in full precision.
// ---------------------------------------------------------------------------

struct CheckpointMeta {
  int version = 1;
  std::string role;  // "shared" | "full"
  ScheduleParams schedule;
  EncoderConfig encoder;
  int horizon_steps = 80;
  int t_b_steps = 40;
  double dt = 0.1;
  double dropout_rate = 0.5;
};

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data(static_cast<std::size_t>(m.size()));
  Eigen::Map<Eigen::MatrixXd>(data.data(), m.rows(), m.cols()) = m;
  j["data"] = std::move(data);
  return j;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ValidationError("checkpoint matrix payload size mismatch");
  }
  return Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const MlpDenoiser& model,
                            const CheckpointMeta& meta) {
  nlohmann::json j;
  j["version"] = meta.version;
  j["role"] = model.role();
  j["schedule"] = {{"H", meta.schedule.H},
                   {"beta_min", meta.schedule.beta_min},
                   {"beta_max", meta.schedule.beta_max}};
  const EncoderConfig& e = meta.encoder;
  j["encoder"] = {{"max_agents", e.max_agents},       {"history_steps", e.history_steps},
                  {"route_samples", e.route_samples}, {"route_spacing", e.route_spacing},
                  {"max_corridors", e.max_corridors}, {"corridor_samples", e.corridor_samples},
                  {"corridor_spacing", e.corridor_spacing}, {"pos_scale", e.pos_scale},
                  {"speed_scale", e.speed_scale}};
  j["horizon_steps"] = meta.horizon_steps;
  j["t_b_steps"] = meta.t_b_steps;
  j["dt"] = meta.dt;
  j["dropout_rate"] = meta.dropout_rate;
  const MlpConfig& c = model.config();
  j["mlp"] = {{"state_dim", c.state_dim},   {"context_dim", c.context_dim},
              {"anchor_dim", c.anchor_dim}, {"width", c.width},
              {"blocks", c.blocks},         {"time_embed_dim", c.time_embed_dim}};
  nlohmann::json params = nlohmann::json::object();
  model.params().visit([&](const std::string& name, const Eigen::MatrixXd& m) {
    params[name] = detail::matrix_to_json(m);
  });
  j["params"] = std::move(params);
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint: " + path);
  out << j.dump() << "\n";
}

struct LoadedCheckpoint {
  std::shared_ptr<MlpDenoiser> model;
  CheckpointMeta meta;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path,
                                        const std::string& expect_role = "") {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
  CheckpointMeta meta;
  meta.version = j.at("version").get<int>();
  meta.role = j.at("role").get<std::string>();
  if (!expect_role.empty() && meta.role != expect_role) {
    throw ConfigError(path + ": checkpoint role '" + meta.role + "' does not match expected '" +
                      expect_role + "'");
  }
  meta.schedule.H = j.at("schedule").at("H").get<int>();
  meta.schedule.beta_min = j.at("schedule").at("beta_min").get<double>();
  meta.schedule.beta_max = j.at("schedule").at("beta_max").get<double>();
  const auto& e = j.at("encoder");
  meta.encoder.max_agents = e.at("max_agents").get<int>();
  meta.encoder.history_steps = e.at("history_steps").get<int>();
  meta.encoder.route_samples = e.at("route_samples").get<int>();
  meta.encoder.route_spacing = e.at("route_spacing").get<double>();
  meta.encoder.max_corridors = e.at("max_corridors").get<int>();
  meta.encoder.corridor_samples = e.at("corridor_samples").get<int>();
  meta.encoder.corridor_spacing = e.at("corridor_spacing").get<double>();
  meta.encoder.pos_scale = e.at("pos_scale").get<double>();
  meta.encoder.speed_scale = e.at("speed_scale").get<double>();
  meta.horizon_steps = j.at("horizon_steps").get<int>();
  meta.t_b_steps = j.at("t_b_steps").get<int>();
  meta.dt = j.at("dt").get<double>();
  meta.dropout_rate = j.at("dropout_rate").get<double>();
  MlpConfig cfg;
  cfg.state_dim = j.at("mlp").at("state_dim").get<int>();
  cfg.context_dim = j.at("mlp").at("context_dim").get<int>();
  cfg.anchor_dim = j.at("mlp").at("anchor_dim").get<int>();
  cfg.width = j.at("mlp").at("width").get<int>();
  cfg.blocks = j.at("mlp").at("blocks").get<int>();
  cfg.time_embed_dim = j.at("mlp").at("time_embed_dim").get<int>();
  RngStream dummy(0);
  MlpParams params = init_mlp_params(cfg, dummy);
  params.visit([&](const std::string& name, Eigen::MatrixXd& m) {
    m = detail::matrix_from_json(j.at("params").at(name));
  });
  return {std::make_shared<MlpDenoiser>(cfg, std::move(params), meta.role), meta};
}

}  // namespace coplanner
