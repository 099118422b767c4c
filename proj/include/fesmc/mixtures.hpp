#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fesmc/core.hpp"
#include "fesmc/errors.hpp"
#include "fesmc/free_energy.hpp"
#include "fesmc/rng.hpp"
#include "fesmc/sequences.hpp"

namespace fesmc {

namespace density {

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

// Shape/rate parametrization.
inline double log_gamma_pdf(double x, double shape, double rate) {
  if (!(x > 0.0)) return kNegInf;
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

inline double log_normal_pdf(double x, double mean, double precision) {
  const double r = x - mean;
  return 0.5 * (std::log(precision) - kLogTwoPi) - 0.5 * precision * r * r;
}

inline double gamma_draw(Rng& rng, double shape, double rate) {
  return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

}  // namespace density

// Log-sum-exp over a small fixed set of terms.
inline double log_sum_exp_small(std::span<const double> terms) {
  double m = kNegInf;
  for (double v : terms) m = std::max(m, v);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double v : terms) s += std::exp(v - m);
  return m + std::log(s);
}

// Generic behaviour the experiment layer needs from a mixture plug-in.
class MixtureModel : public BayesModel {
 public:
  virtual std::size_t components() const = 0;
  virtual std::vector<std::string> coordinate_names() const = 0;
  virtual Vector to_natural(const Vector& theta) const = 0;
  // Sort key used to place a particle in one of the K! label sectors.
  virtual std::pair<double, double> component_key(const Vector& theta, std::size_t k) const = 0;
  virtual Vector permute_labels(const Vector& theta, std::span<const std::size_t> perm) const = 0;
  virtual ReactionCoordinate reaction_coordinate(int n_bins = 50) const = 0;
  virtual double log_posterior(const Vector& theta) const {
    const double lp = log_prior(theta);
    if (!std::isfinite(lp)) return lp;
    return lp + log_lik_sum(theta, identity_order(n_obs()));
  }
};

// ---------------------------------------------------------------------------
// Univariate Gaussian mixture

struct UniMixParam {
  std::vector<double> omegas;
  std::vector<double> mus;
  std::vector<double> lambdas;
  double beta = 1.0;

  std::size_t components() const { return omegas.size(); }
};

struct UniMixHyper {
  std::size_t K = 2;
  double delta = 1.0;
  double alpha = 2.0;
  double g = 0.2;
  double h = 1.0;
  double M = 0.0;
  double kappa = 1.0;
  double ybar = 0.0;
  double range = 1.0;
  double x_min = 0.0;
  double x_max = 1.0;
};

inline UniMixHyper derive_hyperparams_uni(std::span<const double> data, std::size_t K = 2) {
  if (data.size() < 2) throw DegenerateDataError("mixtures", "need at least two observations");
  const auto [lo, hi] = std::minmax_element(data.begin(), data.end());
  const double R = *hi - *lo;
  if (!(R > 0.0)) throw DegenerateDataError("mixtures", "data range is zero");
  UniMixHyper hy;
  hy.K = K;
  hy.ybar = std::accumulate(data.begin(), data.end(), 0.0) / static_cast<double>(data.size());
  hy.range = R;
  hy.delta = 1.0;
  hy.alpha = 2.0;
  hy.g = 0.2;
  hy.h = 100.0 * hy.g / (hy.alpha * R * R);
  hy.M = hy.ybar;
  hy.kappa = 4.0 / (R * R);
  hy.x_min = R * R / 2000.0;
  hy.x_max = R * R / 20.0;
  return hy;
}

inline bool uni_param_valid(const UniMixParam& p) {
  if (!(p.beta > 0.0)) return false;
  for (double w : p.omegas)
    if (!(w > 0.0)) return false;
  for (double l : p.lambdas)
    if (!(l > 0.0)) return false;
  return true;
}

// Natural-scale log prior, normalizing constants included.
inline double log_prior_uni(const UniMixParam& p, const UniMixHyper& hy) {
  if (!uni_param_valid(p)) return kNegInf;
  double lp = density::log_gamma_pdf(p.beta, hy.g, hy.h);
  for (std::size_t k = 0; k < p.components(); ++k) {
    lp += density::log_gamma_pdf(p.omegas[k], hy.delta, 1.0);
    lp += density::log_normal_pdf(p.mus[k], hy.M, hy.kappa);
    lp += density::log_gamma_pdf(p.lambdas[k], hy.alpha, p.beta);
  }
  return lp;
}

inline double log_lik_point_uni(const UniMixParam& p, double y) {
  if (!uni_param_valid(p)) return kNegInf;
  const std::size_t K = p.components();
  const double total = std::accumulate(p.omegas.begin(), p.omegas.end(), 0.0);
  std::vector<double> terms(K);
  for (std::size_t k = 0; k < K; ++k)
    terms[k] = std::log(p.omegas[k] / total) + density::log_normal_pdf(y, p.mus[k], p.lambdas[k]);
  return log_sum_exp_small(terms);
}

// -d log pi_t / d beta. The likelihood does not involve beta, so only the
// prior contributes and the value is the same for every t.
inline double force_beta_uni(const UniMixParam& p, const UniMixHyper& hy) {
  if (p.components() == 0) throw InvalidHyperError("mixtures", "mixture needs K >= 1");
  if (!(p.beta > 0.0)) throw InvalidCoordinateError("mixtures", "beta must be positive");
  const double sum_lambda = std::accumulate(p.lambdas.begin(), p.lambdas.end(), 0.0);
  return -(static_cast<double>(p.components()) * hy.alpha + hy.g - 1.0) / p.beta + sum_lambda +
         hy.h;
}

// Sampler coordinates: (log omega_1..K, mu_1..K, log lambda_1..K, log beta).
class UniGaussianMixture final : public MixtureModel {
 public:
  UniGaussianMixture(std::vector<double> data, UniMixHyper hyper)
      : data_(std::move(data)), hy_(hyper) {
    if (hy_.K < 1) throw InvalidHyperError("mixtures", "mixture needs K >= 1");
    if (!(hy_.delta > 0 && hy_.alpha > 0 && hy_.g > 0 && hy_.h > 0 && hy_.kappa > 0))
      throw InvalidHyperError("mixtures", "hyper-parameters must be positive");
  }

  UniGaussianMixture(std::vector<double> data, std::size_t K)
      : UniGaussianMixture(data, derive_hyperparams_uni(data, K)) {}

  const UniMixHyper& hyper() const { return hy_; }
  const std::vector<double>& data() const { return data_; }

  std::size_t components() const override { return hy_.K; }
  std::size_t dim() const override { return 3 * hy_.K + 1; }
  std::size_t n_obs() const override { return data_.size(); }

  UniMixParam unpack(const Vector& th) const {
    const std::size_t K = hy_.K;
    UniMixParam p;
    p.omegas.resize(K);
    p.mus.resize(K);
    p.lambdas.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
      p.omegas[k] = std::exp(th[idx(k)]);
      p.mus[k] = th[idx(K + k)];
      p.lambdas[k] = std::exp(th[idx(2 * K + k)]);
    }
    p.beta = std::exp(th[idx(3 * K)]);
    return p;
  }

  Vector pack(const UniMixParam& p) const {
    const std::size_t K = hy_.K;
    Vector th(static_cast<Eigen::Index>(dim()));
    for (std::size_t k = 0; k < K; ++k) {
      th[idx(k)] = std::log(p.omegas[k]);
      th[idx(K + k)] = p.mus[k];
      th[idx(2 * K + k)] = std::log(p.lambdas[k]);
    }
    th[idx(3 * K)] = std::log(p.beta);
    return th;
  }

  Vector sample_prior(Rng& rng) const override {
    const std::size_t K = hy_.K;
    UniMixParam p;
    p.beta = density::gamma_draw(rng, hy_.g, hy_.h);
    for (std::size_t k = 0; k < K; ++k) {
      p.omegas.push_back(density::gamma_draw(rng, hy_.delta, 1.0));
      p.mus.push_back(hy_.M + std_normal(rng) / std::sqrt(hy_.kappa));
      p.lambdas.push_back(density::gamma_draw(rng, hy_.alpha, p.beta));
    }
    // Gamma(g) with small g can underflow; keep the draw strictly positive.
    p.beta = std::max(p.beta, std::numeric_limits<double>::min());
    for (auto& l : p.lambdas) l = std::max(l, std::numeric_limits<double>::min());
    return pack(p);
  }

  // Includes the log-Jacobian of the log transforms.
  double log_prior(const Vector& th) const override {
    if (!th.allFinite()) return kNegInf;
    const auto p = unpack(th);
    const double lp = log_prior_uni(p, hy_);
    if (!std::isfinite(lp)) return kNegInf;
    double jac = th[idx(3 * hy_.K)];
    for (std::size_t k = 0; k < hy_.K; ++k) jac += th[idx(k)] + th[idx(2 * hy_.K + k)];
    return lp + jac;
  }

  double log_lik(const Vector& th, std::size_t obs) const override {
    const std::size_t one[1] = {obs};
    return log_lik_sum(th, one);
  }

  double log_lik_sum(const Vector& th, std::span<const std::size_t> obs) const override {
    const std::size_t K = hy_.K;
    if (!th.allFinite()) return kNegInf;
    // Per-component constant log(q_k) + 0.5 log(lambda_k / 2 pi).
    std::array<double, 16> cbuf{}, mbuf{}, lbuf{};
    std::vector<double> cvec, mvec, lvec;
    double* c = cbuf.data();
    double* mu = mbuf.data();
    double* lam = lbuf.data();
    if (K > cbuf.size()) {
      cvec.resize(K), mvec.resize(K), lvec.resize(K);
      c = cvec.data(), mu = mvec.data(), lam = lvec.data();
    }
    double max_lw = kNegInf;
    for (std::size_t k = 0; k < K; ++k) max_lw = std::max(max_lw, th[idx(k)]);
    double wsum = 0.0;
    for (std::size_t k = 0; k < K; ++k) wsum += std::exp(th[idx(k)] - max_lw);
    const double log_total = max_lw + std::log(wsum);
    for (std::size_t k = 0; k < K; ++k) {
      const double log_lambda = th[idx(2 * K + k)];
      lam[k] = std::exp(log_lambda);
      mu[k] = th[idx(K + k)];
      c[k] = th[idx(k)] - log_total + 0.5 * (log_lambda - density::kLogTwoPi);
    }
    double total = 0.0;
    for (auto i : obs) {
      const double y = data_[i];
      double m = kNegInf;
      std::array<double, 16> abuf{};
      std::vector<double> avec;
      double* a = abuf.data();
      if (K > abuf.size()) avec.resize(K), a = avec.data();
      for (std::size_t k = 0; k < K; ++k) {
        const double r = y - mu[k];
        a[k] = c[k] - 0.5 * lam[k] * r * r;
        m = std::max(m, a[k]);
      }
      if (m == kNegInf) return kNegInf;
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += std::exp(a[k] - m);
      total += m + std::log(s);
    }
    return total;
  }

  bool has_force() const override { return true; }
  bool likelihood_free_of_xi() const override { return true; }
  double force_prior(const Vector& th) const override { return force_beta_uni(unpack(th), hy_); }

  std::vector<std::string> coordinate_names() const override {
    std::vector<std::string> names;
    for (const char* base : {"omega", "mu", "lambda"})
      for (std::size_t k = 1; k <= hy_.K; ++k) names.push_back(std::string(base) + "_" + std::to_string(k));
    names.emplace_back("beta");
    return names;
  }

  Vector to_natural(const Vector& th) const override {
    Vector out = th;
    for (std::size_t k = 0; k < hy_.K; ++k) {
      out[idx(k)] = std::exp(th[idx(k)]);
      out[idx(2 * hy_.K + k)] = std::exp(th[idx(2 * hy_.K + k)]);
    }
    out[idx(3 * hy_.K)] = std::exp(th[idx(3 * hy_.K)]);
    return out;
  }

  std::pair<double, double> component_key(const Vector& th, std::size_t k) const override {
    return {th[idx(hy_.K + k)], th[idx(2 * hy_.K + k)]};
  }

  Vector permute_labels(const Vector& th, std::span<const std::size_t> perm) const override {
    Vector out = th;
    const std::size_t K = hy_.K;
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t block = 0; block < 3; ++block)
        out[idx(block * K + k)] = th[idx(block * K + perm[k])];
    return out;
  }

  ReactionCoordinate reaction_coordinate(int n_bins = 50) const override {
    const auto last = static_cast<Eigen::Index>(3 * hy_.K);
    return {[last](const Vector& th) { return std::exp(th[last]); },
            ReactionGrid(hy_.x_min, hy_.x_max, n_bins)};
  }

 private:
  static Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

  std::vector<double> data_;
  UniMixHyper hy_;
};

// ---------------------------------------------------------------------------
// Bivariate Gaussian mixture, precision Q_k = C_k C_k^T with
// C_k = [[sqrt(d1), 0], [e, sqrt(d2)]].

struct BartlettFactor {
  double d1 = 1.0;
  double d2 = 1.0;
  double e = 0.0;

  Eigen::Matrix2d precision() const {
    Eigen::Matrix2d c;
    c << std::sqrt(d1), 0.0, e, std::sqrt(d2);
    return c * c.transpose();
  }
};

struct BiMixParam {
  std::vector<double> omegas;
  std::vector<Eigen::Vector2d> mus;
  std::vector<BartlettFactor> bartlett;
  double beta = 1.0;

  std::size_t components() const { return omegas.size(); }
};

struct BiMixHyper {
  std::size_t K = 2;
  double delta = 1.0;
  double alpha = 2.0;
  double g = 0.2;
  double h = 1.0;
  Eigen::Vector2d M = Eigen::Vector2d::Zero();
  Eigen::Matrix2d S = Eigen::Matrix2d::Identity();  // prior precision of mu_k
  double x_min = 0.0;
  double x_max = 1.0;

  void validate() const {
    if (K < 1) throw InvalidHyperError("mixtures", "mixture needs K >= 1");
    if (!(alpha > 1.0)) throw InvalidHyperError("mixtures", "bivariate prior needs alpha > 1");
    if (!(delta > 0 && g > 0 && h > 0)) throw InvalidHyperError("mixtures", "hyper-parameters must be positive");
    Eigen::LLT<Eigen::Matrix2d> llt(S);
    if (llt.info() != Eigen::Success) throw InvalidHyperError("mixtures", "S must be positive definite");
  }
};

// rows x 2 data: M = column means, S = diag(4 / R_j^2), h and the
// reaction range use the mean squared coordinate range.
inline BiMixHyper derive_hyperparams_biv(const std::vector<Eigen::Vector2d>& data, std::size_t K = 2) {
  if (data.size() < 2) throw DegenerateDataError("mixtures", "need at least two observations");
  BiMixHyper hy;
  hy.K = K;
  Eigen::Vector2d lo = data.front(), hi = data.front(), sum = Eigen::Vector2d::Zero();
  for (const auto& y : data) {
    lo = lo.cwiseMin(y);
    hi = hi.cwiseMax(y);
    sum += y;
  }
  const Eigen::Vector2d R = hi - lo;
  if (!(R.minCoeff() > 0.0)) throw DegenerateDataError("mixtures", "a data coordinate has zero range");
  hy.M = sum / static_cast<double>(data.size());
  hy.S = Eigen::Vector2d(4.0 / (R[0] * R[0]), 4.0 / (R[1] * R[1])).asDiagonal();
  const double r2 = 0.5 * (R[0] * R[0] + R[1] * R[1]);
  hy.h = 100.0 * hy.g / (hy.alpha * r2);
  hy.x_min = r2 / 2000.0;
  hy.x_max = r2 / 20.0;
  return hy;
}

// Bartlett shapes alpha/2 and (alpha-1)/2, both at rate beta/2, with
// e ~ N(0, 1/beta): Q_k ~ Wishart_2(alpha, (beta I)^-1), E[Q_k] = alpha/beta I.
inline double log_bartlett_prior(const BartlettFactor& b, double alpha, double beta) {
  return density::log_gamma_pdf(b.d1, 0.5 * alpha, 0.5 * beta) +
         density::log_gamma_pdf(b.d2, 0.5 * (alpha - 1.0), 0.5 * beta) +
         density::log_normal_pdf(b.e, 0.0, beta);
}

inline BartlettFactor sample_bartlett(Rng& rng, double alpha, double beta) {
  BartlettFactor b;
  b.d1 = std::max(density::gamma_draw(rng, 0.5 * alpha, 0.5 * beta), std::numeric_limits<double>::min());
  b.d2 = std::max(density::gamma_draw(rng, 0.5 * (alpha - 1.0), 0.5 * beta),
                  std::numeric_limits<double>::min());
  b.e = std_normal(rng) / std::sqrt(beta);
  return b;
}

inline double log_mvn2_precision(const Eigen::Vector2d& x, const Eigen::Vector2d& mean,
                                 const Eigen::Matrix2d& precision) {
  const Eigen::Vector2d r = x - mean;
  return -density::kLogTwoPi + 0.5 * std::log(precision.determinant()) - 0.5 * r.dot(precision * r);
}

inline bool biv_param_valid(const BiMixParam& p) {
  if (!(p.beta > 0.0)) return false;
  for (double w : p.omegas)
    if (!(w > 0.0)) return false;
  for (const auto& b : p.bartlett)
    if (!(b.d1 > 0.0) || !(b.d2 > 0.0) || !std::isfinite(b.e)) return false;
  return true;
}

inline double log_prior_biv(const BiMixParam& p, const BiMixHyper& hy) {
  if (!(hy.alpha > 1.0)) throw InvalidHyperError("mixtures", "bivariate prior needs alpha > 1");
  if (!biv_param_valid(p)) return kNegInf;
  double lp = density::log_gamma_pdf(p.beta, hy.g, hy.h);
  for (std::size_t k = 0; k < p.components(); ++k) {
    lp += density::log_gamma_pdf(p.omegas[k], hy.delta, 1.0);
    lp += log_mvn2_precision(p.mus[k], hy.M, hy.S);
    lp += log_bartlett_prior(p.bartlett[k], hy.alpha, p.beta);
  }
  return lp;
}

// Component log-density through the triangular factor:
// log det Q = log d1 + log d2 and r^T Q r = |C^T r|^2.
inline double log_component_biv(const Eigen::Vector2d& y, const Eigen::Vector2d& mu,
                                const BartlettFactor& b) {
  const double r1 = y[0] - mu[0], r2 = y[1] - mu[1];
  const double z1 = std::sqrt(b.d1) * r1 + b.e * r2;
  const double z2 = std::sqrt(b.d2) * r2;
  return -density::kLogTwoPi + 0.5 * (std::log(b.d1) + std::log(b.d2)) - 0.5 * (z1 * z1 + z2 * z2);
}

inline double log_lik_point_biv(const BiMixParam& p, const Eigen::Vector2d& y) {
  if (!biv_param_valid(p)) return kNegInf;
  const double total = std::accumulate(p.omegas.begin(), p.omegas.end(), 0.0);
  std::vector<double> terms(p.components());
  for (std::size_t k = 0; k < p.components(); ++k)
    terms[k] = std::log(p.omegas[k] / total) + log_component_biv(y, p.mus[k], p.bartlett[k]);
  return log_sum_exp_small(terms);
}

inline double force_beta_biv(const BiMixParam& p, const BiMixHyper& hy) {
  if (p.components() == 0) throw InvalidHyperError("mixtures", "mixture needs K >= 1");
  if (!(p.beta > 0.0)) throw InvalidCoordinateError("mixtures", "beta must be positive");
  double s = 0.0;
  for (const auto& b : p.bartlett) s += b.d1 + b.d2 + b.e * b.e;
  return -(static_cast<double>(p.components()) * hy.alpha + hy.g - 1.0) / p.beta + 0.5 * s + hy.h;
}

// Sampler coordinates: (log omega, mu1, mu2, log d1, log d2, e) blocks of
// length K, then log beta.
class BiGaussianMixture final : public MixtureModel {
 public:
  BiGaussianMixture(std::vector<Eigen::Vector2d> data, BiMixHyper hyper)
      : data_(std::move(data)), hy_(hyper) {
    hy_.validate();
  }

  BiGaussianMixture(std::vector<Eigen::Vector2d> data, std::size_t K)
      : BiGaussianMixture(data, derive_hyperparams_biv(data, K)) {}

  const BiMixHyper& hyper() const { return hy_; }

  std::size_t components() const override { return hy_.K; }
  std::size_t dim() const override { return 6 * hy_.K + 1; }
  std::size_t n_obs() const override { return data_.size(); }

  BiMixParam unpack(const Vector& th) const {
    const std::size_t K = hy_.K;
    BiMixParam p;
    for (std::size_t k = 0; k < K; ++k) {
      p.omegas.push_back(std::exp(th[at(0, k)]));
      p.mus.emplace_back(th[at(1, k)], th[at(2, k)]);
      p.bartlett.push_back({std::exp(th[at(3, k)]), std::exp(th[at(4, k)]), th[at(5, k)]});
    }
    p.beta = std::exp(th[beta_index()]);
    return p;
  }

  Vector pack(const BiMixParam& p) const {
    Vector th(static_cast<Eigen::Index>(dim()));
    for (std::size_t k = 0; k < hy_.K; ++k) {
      th[at(0, k)] = std::log(p.omegas[k]);
      th[at(1, k)] = p.mus[k][0];
      th[at(2, k)] = p.mus[k][1];
      th[at(3, k)] = std::log(p.bartlett[k].d1);
      th[at(4, k)] = std::log(p.bartlett[k].d2);
      th[at(5, k)] = p.bartlett[k].e;
    }
    th[beta_index()] = std::log(p.beta);
    return th;
  }

  Vector sample_prior(Rng& rng) const override {
    BiMixParam p;
    p.beta = std::max(density::gamma_draw(rng, hy_.g, hy_.h), std::numeric_limits<double>::min());
    const Eigen::Matrix2d cov = hy_.S.inverse();
    const Eigen::Matrix2d L = cov.llt().matrixL();
    for (std::size_t k = 0; k < hy_.K; ++k) {
      p.omegas.push_back(density::gamma_draw(rng, hy_.delta, 1.0));
      const Eigen::Vector2d z(std_normal(rng), std_normal(rng));
      p.mus.emplace_back(hy_.M + L * z);
      p.bartlett.push_back(sample_bartlett(rng, hy_.alpha, p.beta));
    }
    return pack(p);
  }

  double log_prior(const Vector& th) const override {
    if (!th.allFinite()) return kNegInf;
    const double lp = log_prior_biv(unpack(th), hy_);
    if (!std::isfinite(lp)) return kNegInf;
    double jac = th[beta_index()];
    for (std::size_t k = 0; k < hy_.K; ++k) jac += th[at(0, k)] + th[at(3, k)] + th[at(4, k)];
    return lp + jac;
  }

  double log_lik(const Vector& th, std::size_t obs) const override {
    const std::size_t one[1] = {obs};
    return log_lik_sum(th, one);
  }

  double log_lik_sum(const Vector& th, std::span<const std::size_t> obs) const override {
    if (!th.allFinite()) return kNegInf;
    const std::size_t K = hy_.K;
    struct Comp {
      double c, m1, m2, s1, e, s2;
    };
    std::vector<Comp> comp(K);
    double max_lw = kNegInf;
    for (std::size_t k = 0; k < K; ++k) max_lw = std::max(max_lw, th[at(0, k)]);
    double wsum = 0.0;
    for (std::size_t k = 0; k < K; ++k) wsum += std::exp(th[at(0, k)] - max_lw);
    const double log_total = max_lw + std::log(wsum);
    for (std::size_t k = 0; k < K; ++k) {
      const double ld1 = th[at(3, k)], ld2 = th[at(4, k)];
      comp[k] = {th[at(0, k)] - log_total - density::kLogTwoPi + 0.5 * (ld1 + ld2),
                 th[at(1, k)], th[at(2, k)], std::exp(0.5 * ld1), th[at(5, k)], std::exp(0.5 * ld2)};
    }
    std::vector<double> a(K);
    double total = 0.0;
    for (auto i : obs) {
      const auto& y = data_[i];
      double m = kNegInf;
      for (std::size_t k = 0; k < K; ++k) {
        const auto& q = comp[k];
        const double r1 = y[0] - q.m1, r2 = y[1] - q.m2;
        const double z1 = q.s1 * r1 + q.e * r2, z2 = q.s2 * r2;
        a[k] = q.c - 0.5 * (z1 * z1 + z2 * z2);
        m = std::max(m, a[k]);
      }
      if (m == kNegInf) return kNegInf;
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += std::exp(a[k] - m);
      total += m + std::log(s);
    }
    return total;
  }

  bool has_force() const override { return true; }
  bool likelihood_free_of_xi() const override { return true; }
  double force_prior(const Vector& th) const override { return force_beta_biv(unpack(th), hy_); }

  std::vector<std::string> coordinate_names() const override {
    std::vector<std::string> names;
    for (const char* base : {"omega", "mu1", "mu2", "d1", "d2", "e"})
      for (std::size_t k = 1; k <= hy_.K; ++k) names.push_back(std::string(base) + "_" + std::to_string(k));
    names.emplace_back("beta");
    return names;
  }

  Vector to_natural(const Vector& th) const override {
    Vector out = th;
    for (std::size_t k = 0; k < hy_.K; ++k)
      for (std::size_t block : {0u, 3u, 4u}) out[at(block, k)] = std::exp(th[at(block, k)]);
    out[beta_index()] = std::exp(th[beta_index()]);
    return out;
  }

  std::pair<double, double> component_key(const Vector& th, std::size_t k) const override {
    return {th[at(1, k)], th[at(2, k)]};
  }

  Vector permute_labels(const Vector& th, std::span<const std::size_t> perm) const override {
    Vector out = th;
    for (std::size_t k = 0; k < hy_.K; ++k)
      for (std::size_t block = 0; block < 6; ++block) out[at(block, k)] = th[at(block, perm[k])];
    return out;
  }

  ReactionCoordinate reaction_coordinate(int n_bins = 50) const override {
    const Eigen::Index b = beta_index();
    return {[b](const Vector& th) { return std::exp(th[b]); }, ReactionGrid(hy_.x_min, hy_.x_max, n_bins)};
  }

 private:
  Eigen::Index at(std::size_t block, std::size_t k) const {
    return static_cast<Eigen::Index>(block * hy_.K + k);
  }
  Eigen::Index beta_index() const { return static_cast<Eigen::Index>(6 * hy_.K); }

  std::vector<Eigen::Vector2d> data_;
  BiMixHyper hy_;
};

// ---------------------------------------------------------------------------
// Label-switching diagnostics

// Rank of a permutation of 0..K-1 in lexicographic order.
inline std::size_t permutation_rank(std::span<const std::size_t> perm) {
  const std::size_t K = perm.size();
  std::size_t rank = 0;
  for (std::size_t i = 0; i < K; ++i) {
    std::size_t smaller = 0;
    for (std::size_t j = i + 1; j < K; ++j)
      if (perm[j] < perm[i]) ++smaller;
    std::size_t fact = 1;
    for (std::size_t f = 2; f < K - i; ++f) fact *= f;
    rank += smaller * fact;
  }
  return rank;
}

inline std::size_t factorial(std::size_t k) {
  std::size_t f = 1;
  for (std::size_t i = 2; i <= k; ++i) f *= i;
  return f;
}

// Total-variation distance between the weighted mass of the K! label sectors
// (sector = rank order of the component keys) and the uniform vector.
inline double label_symmetry_metric(const ParticleSystem& system, const MixtureModel& model) {
  const std::size_t K = model.components();
  if (K <= 1) return 0.0;
  const std::size_t sectors = factorial(K);
  const auto w = normalize_weights(system.log_weights);
  std::vector<double> mass(sectors, 0.0);
  std::vector<std::size_t> order(K);
  std::vector<std::pair<double, double>> keys(K);
  for (std::size_t n = 0; n < system.size(); ++n) {
    for (std::size_t k = 0; k < K; ++k) keys[k] = model.component_key(system.particles[n], k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
    mass[permutation_rank(order)] += w[n];
  }
  double tv = 0.0;
  for (double m : mass) tv += std::abs(m - 1.0 / static_cast<double>(sectors));
  return 0.5 * tv;
}

// Relabels every particle with an independent uniform permutation.
inline ParticleSystem random_permutation_postprocess(ParticleSystem system, const MixtureModel& model,
                                                     std::uint64_t seed) {
  const std::size_t K = model.components();
  if (K <= 1) return system;
  std::vector<std::size_t> perm(K);
  for (std::size_t n = 0; n < system.size(); ++n) {
    Rng rng = make_stream(seed, Stream::postprocess, 0, n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    system.particles[n] = model.permute_labels(system.particles[n], perm);
  }
  return system;
}

}  // namespace fesmc
