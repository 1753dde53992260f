#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "coplanner/errors.hpp"
#include "coplanner/rng.hpp"

namespace coplanner {

// Discretized variance-preserving schedule. beta is linear in the step index
// between beta_min and beta_max; alpha_h = 1 - beta_h, alpha_bar_h is the
// running product, sigma_h the posterior noise scale with sigma_1 = 0.
struct DiffusionSchedule {
  int H = 0;
  double beta_min = 1e-4;
  double beta_max = 2e-2;
  std::vector<double> alpha;      // alpha[h-1] = alpha_h, h in 1..H
  std::vector<double> alpha_bar;  // alpha_bar[h-1]
  std::vector<double> beta;
  std::vector<double> sigma;

  double alpha_at(int h) const { return alpha.at(h - 1); }
  double beta_at(int h) const { return beta.at(h - 1); }
  double sigma_at(int h) const { return sigma.at(h - 1); }
  // alpha_bar_0 == 1 by convention.
  double alpha_bar_at(int h) const { return h == 0 ? 1.0 : alpha_bar.at(h - 1); }

  void check_step(int h) const {
    if (h < 1 || h > H) throw std::out_of_range("diffusion step index out of range");
  }

  // Copy with all posterior noise removed; deterministic reverse process.
  DiffusionSchedule with_zero_sigma() const {
    DiffusionSchedule s = *this;
    for (double& v : s.sigma) v = 0.0;
    return s;
  }
};

inline DiffusionSchedule build_vp_schedule(int H, double beta_min, double beta_max) {
  if (H < 1) throw ConfigError("schedule needs H >= 1");
  if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0)) {
    throw ConfigError("schedule needs 0 < beta_min <= beta_max < 1");
  }
  DiffusionSchedule s;
  s.H = H;
  s.beta_min = beta_min;
  s.beta_max = beta_max;
  s.alpha.resize(H);
  s.alpha_bar.resize(H);
  s.beta.resize(H);
  s.sigma.resize(H);
  double running = 1.0;
  for (int h = 1; h <= H; ++h) {
    // midpoint sampling of the linear ramp, so the running product tracks
    // the continuous alpha_bar(t) closely at every grid time
    const double frac = (h - 0.5) / H;
    const double b = beta_min + frac * (beta_max - beta_min);
    const double alpha = 1.0 - b;
    const double beta = 1.0 - alpha;  // stored so beta_h + alpha_h == 1 exactly
    const double prev_bar = running;
    running *= alpha;
    s.beta[h - 1] = beta;
    s.alpha[h - 1] = alpha;
    s.alpha_bar[h - 1] = running;
    // DDPM posterior variance; zero at h = 1 (alpha_bar_0 = 1).
    s.sigma[h - 1] = std::sqrt(beta * (1.0 - prev_bar) / (1.0 - running));
  }
  return s;
}

// Closed-form continuous-time alpha_bar(t), t in [0, 1], for the linear beta
// ramp the discrete grid samples: exp(H * integral_0^t log(1 - beta(s)) ds).
// Matches the discrete running product at grid times to O(beta^2 / H); used
// by continuous-time training so train and test noising agree.
inline double alpha_bar_continuous(double t, int H, double beta_min, double beta_max) {
  if (t <= 0.0) return 1.0;
  t = std::min(t, 1.0);
  const double c = beta_max - beta_min;
  double integral;  // of log(1 - beta(s)) over s in [0, t]
  if (std::abs(c) < 1e-15) {
    integral = t * std::log(1.0 - beta_min);
  } else {
    const auto antider = [&](double s) {
      const double g = 1.0 - beta_min - c * s;
      return -(g * std::log(g) - g) / c;
    };
    integral = antider(t) - antider(0.0);
  }
  return std::exp(static_cast<double>(H) * integral);
}

// Nearest grid index for a continuous time u in [0, 1]; grid times are h / H.
inline int nearest_step(double u, int H) {
  const int h = static_cast<int>(std::lround(u * H));
  return std::max(1, std::min(H, h));
}

// Forward noising x_h = sqrt(alpha_bar_h) x0 + sqrt(1 - alpha_bar_h) eps.
// Returns the exact standard-normal draw alongside the noised sample.
struct ForwardNoise {
  Eigen::VectorXd x_h;
  Eigen::VectorXd eps;
};

inline ForwardNoise forward_noise(const Eigen::VectorXd& x0, int h, const DiffusionSchedule& s,
                                  RngStream& rng) {
  s.check_step(h);
  const double ab = s.alpha_bar_at(h);
  ForwardNoise out;
  out.eps = rng.normal_vector(x0.size());
  out.x_h = std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * out.eps;
  return out;
}

// VP conversion from an x0 estimate to the implied noise estimate.
inline Eigen::MatrixXd x0_to_eps(const Eigen::MatrixXd& x_h, const Eigen::MatrixXd& x0_hat, int h,
                                 const DiffusionSchedule& s) {
  s.check_step(h);
  const double ab = s.alpha_bar_at(h);
  if (1.0 - ab <= 0.0) throw SingularityError("x0_to_eps undefined at alpha_bar == 1");
  return (x_h - std::sqrt(ab) * x0_hat) / std::sqrt(1.0 - ab);
}

// One reverse (ancestral) step:
//   x_{h-1} = (x_h - beta_h / sqrt(1-alpha_bar_h) * eps_hat) / sqrt(alpha_h) + sigma_h z,
// with z = 0 at h = 1. Column b of the batch uses rngs[b].
inline Eigen::MatrixXd ancestral_step(const Eigen::MatrixXd& x_h, const Eigen::MatrixXd& eps_hat,
                                      int h, const DiffusionSchedule& s,
                                      std::vector<RngStream>& rngs) {
  s.check_step(h);
  const double a = s.alpha_at(h);
  const double ab = s.alpha_bar_at(h);
  const double b = s.beta_at(h);
  Eigen::MatrixXd x_prev = (x_h - (b / std::sqrt(1.0 - ab)) * eps_hat) / std::sqrt(a);
  if (h > 1 && s.sigma_at(h) > 0.0) {
    const double sig = s.sigma_at(h);
    for (Eigen::Index c = 0; c < x_prev.cols(); ++c) {
      x_prev.col(c) += sig * rngs[static_cast<std::size_t>(c)].normal_vector(x_prev.rows());
    }
  }
  return x_prev;
}

inline Eigen::VectorXd ancestral_step(const Eigen::VectorXd& x_h, const Eigen::VectorXd& eps_hat,
                                      int h, const DiffusionSchedule& s, RngStream& rng) {
  std::vector<RngStream> rngs{rng};
  Eigen::MatrixXd out = ancestral_step(Eigen::MatrixXd(x_h), Eigen::MatrixXd(eps_hat), h, s, rngs);
  rng = rngs.front();  // keep the caller's stream advanced
  return out.col(0);
}

}  // namespace coplanner
