#pragma once

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "fesmc/core.hpp"
#include "fesmc/errors.hpp"
#include "fesmc/parallel.hpp"
#include "fesmc/rng.hpp"

namespace fesmc {

struct ScaleAdaptation {
  double lower = 0.15;  // halve below
  double upper = 0.40;  // double above
  double floor = 1e-6;
  double ceiling = 1e3;
};

// Proposal covariance is scale * base_covariance; cholesky_factor caches the
// lower factor of base_covariance (after jitter, if needed).
struct KernelState {
  double scale = 0.3;
  Matrix base_covariance;
  Matrix cholesky_factor;
  int sweeps = 10;
  ScaleAdaptation adaptation{};

  void set_covariance(const Matrix& cov) {
    base_covariance = cov;
    cholesky_factor = robust_cholesky(cov);
  }

  static Matrix robust_cholesky(const Matrix& cov) {
    const Eigen::Index d = cov.rows();
    Eigen::LLT<Matrix> llt(cov);
    if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0)
      return llt.matrixL();
    double trace = cov.trace();
    if (!(trace > 0.0) || !std::isfinite(trace)) trace = static_cast<double>(d);
    double jitter = 1e-9 * trace / static_cast<double>(d);
    for (int attempt = 0; attempt < 40; ++attempt) {
      Matrix m = cov;
      m.diagonal().array() += jitter;
      Eigen::LLT<Matrix> retry(m);
      if (retry.info() == Eigen::Success) return retry.matrixL();
      jitter *= 10.0;
    }
    return Matrix::Identity(d, d) * std::sqrt(trace / static_cast<double>(d));
  }
};

struct StepResult {
  Vector theta;
  double log_target = 0.0;
  bool accepted = false;
};

// One Gaussian random-walk Metropolis step. `current_log_target` must be
// log_target(theta); it is threaded through so callers avoid re-evaluation.
inline StepResult rw_mh_step(const Vector& theta, double current_log_target,
                             const LogDensity& log_target, const KernelState& state,
                             Rng& rng) {
  Vector z(theta.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = std_normal(rng);
  Vector proposal = theta + std::sqrt(state.scale) * (state.cholesky_factor * z);
  const double lp = log_target(proposal);
  if (std::isnan(lp)) throw ModelEvaluationError("kernels", "log-target returned NaN");
  const double log_u = std::log(uniform01(rng));
  if (lp - current_log_target >= 0.0 || log_u < lp - current_log_target)
    return {std::move(proposal), lp, true};
  return {theta, current_log_target, false};
}

inline StepResult rw_mh_step(const Vector& theta, const LogDensity& log_target,
                             const KernelState& state, Rng& rng) {
  const double current = log_target(theta);
  if (!std::isfinite(current))
    throw ModelEvaluationError("kernels", "log-target at current state is not finite");
  return rw_mh_step(theta, current, log_target, state, rng);
}

struct SweepResult {
  std::size_t proposals = 0;
  std::size_t accepted = 0;
  double acceptance_rate() const {
    return proposals == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposals);
  }
};

// Applies state.sweeps steps to every particle. Particle n draws from
// make_stream(seed, move, t, n), so the outcome does not depend on `threads`.
inline SweepResult run_sweeps(ParticleSystem& system, const LogDensity& log_target,
                              const KernelState& state, std::uint64_t seed,
                              int threads = 1) {
  SweepResult result;
  if (state.sweeps <= 0) return result;
  const std::size_t n = system.size();
  std::vector<std::size_t> accepted(n, 0);
  parallel_for(n, threads, [&](std::size_t i) {
    Rng rng = make_stream(seed, Stream::move, static_cast<std::uint64_t>(system.t), i);
    Vector theta = system.particles[i];
    double current = log_target(theta);
    if (!std::isfinite(current))
      throw ModelEvaluationError("kernels", "log-target at current state is not finite");
    for (int s = 0; s < state.sweeps; ++s) {
      auto step = rw_mh_step(theta, current, log_target, state, rng);
      if (step.accepted) {
        theta = std::move(step.theta);
        current = step.log_target;
        ++accepted[i];
      }
    }
    system.particles[i] = std::move(theta);
  });
  result.proposals = n * static_cast<std::size_t>(state.sweeps);
  for (auto a : accepted) result.accepted += a;
  return result;
}

inline double adapt_scale(double scale, double acceptance_rate,
                          const ScaleAdaptation& rule = {}) {
  double next = scale;
  if (acceptance_rate < rule.lower)
    next = scale / 2.0;
  else if (acceptance_rate > rule.upper)
    next = scale * 2.0;
  return std::clamp(next, rule.floor, rule.ceiling);
}

}  // namespace fesmc
