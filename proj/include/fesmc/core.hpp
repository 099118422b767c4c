#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fesmc/errors.hpp"

namespace fesmc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using LogDensity = std::function<double(const Vector&)>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Weighted particle cloud. Weights are kept in log space throughout.
struct ParticleSystem {
  std::vector<Vector> particles;
  std::vector<double> log_weights;
  int t = 0;

  std::size_t size() const { return particles.size(); }
  std::size_t dim() const { return particles.empty() ? 0 : particles.front().size(); }
};

struct WeightedMoments {
  Vector mean;
  Matrix covariance;
};

inline double max_finite(std::span<const double> log_weights) {
  double m = kNegInf;
  for (double lw : log_weights) {
    if (std::isnan(lw)) throw InvalidWeightsError("core", "NaN log-weight");
    if (lw > m) m = lw;
  }
  if (!std::isfinite(m)) {
    if (m > 0) throw InvalidWeightsError("core", "+inf log-weight");
    throw DegenerateSystemError("core", "all log-weights are -inf");
  }
  return m;
}

inline double log_sum_exp(std::span<const double> log_values) {
  const double m = max_finite(log_values);
  double s = 0.0;
  for (double v : log_values) s += std::exp(v - m);
  return m + std::log(s);
}

inline std::vector<double> normalize_weights(std::span<const double> log_weights) {
  const double m = max_finite(log_weights);
  std::vector<double> w(log_weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(log_weights[i] - m);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

// (sum w)^2 / (N sum w^2), evaluated after shifting by the max log-weight.
inline double effective_sample_fraction(std::span<const double> log_weights) {
  const double m = max_finite(log_weights);
  double s1 = 0.0, s2 = 0.0;
  for (double lw : log_weights) {
    const double w = std::exp(lw - m);
    s1 += w;
    s2 += w * w;
  }
  return (s1 * s1) / (static_cast<double>(log_weights.size()) * s2);
}

inline double effective_sample_fraction(const ParticleSystem& system) {
  return effective_sample_fraction(system.log_weights);
}

// Weighted mean and covariance with normalized weights (no bias correction).
inline WeightedMoments weighted_moments(const ParticleSystem& system) {
  const std::size_t n = system.size();
  if (n < 2)
    throw InsufficientSampleError("core", "weighted moments need at least 2 particles");
  const auto w = normalize_weights(system.log_weights);
  const Eigen::Index d = system.particles.front().size();
  WeightedMoments out{Vector::Zero(d), Matrix::Zero(d, d)};
  for (std::size_t i = 0; i < n; ++i) out.mean += w[i] * system.particles[i];
  for (std::size_t i = 0; i < n; ++i) {
    const Vector c = system.particles[i] - out.mean;
    out.covariance.noalias() += w[i] * c * c.transpose();
  }
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  return out;
}

// Weighted mean of a scalar functional.
template <typename Fn>
double weighted_mean(const ParticleSystem& system, Fn&& fn) {
  const auto w = normalize_weights(system.log_weights);
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * fn(system.particles[i]);
  return s;
}

}  // namespace fesmc
