#pragma once

#include <cmath>
#include <vector>

#include "fesmc/sequences.hpp"

namespace testing_models {

// y_i ~ N(theta, sigma^2), theta ~ N(m0, s0^2). Closed-form posterior.
class NormalMean : public fesmc::BayesModel {
 public:
  NormalMean(std::vector<double> y, double sigma, double m0, double s0)
      : y_(std::move(y)), sigma_(sigma), m0_(m0), s0_(s0) {}

  std::size_t dim() const override { return 1; }
  std::size_t n_obs() const override { return y_.size(); }
  fesmc::Vector sample_prior(fesmc::Rng& rng) const override {
    return fesmc::Vector::Constant(1, m0_ + s0_ * fesmc::std_normal(rng));
  }
  double log_prior(const fesmc::Vector& th) const override {
    const double z = (th[0] - m0_) / s0_;
    return -0.5 * z * z - std::log(s0_) - 0.5 * std::log(2.0 * M_PI);
  }
  double log_lik(const fesmc::Vector& th, std::size_t i) const override {
    const double z = (y_[i] - th[0]) / sigma_;
    return -0.5 * z * z - std::log(sigma_) - 0.5 * std::log(2.0 * M_PI);
  }

  // Posterior after the first `t` observations of `order`.
  std::pair<double, double> posterior(const std::vector<std::size_t>& order, std::size_t t) const {
    double prec = 1.0 / (s0_ * s0_);
    double num = m0_ / (s0_ * s0_);
    for (std::size_t s = 0; s < t; ++s) {
      prec += 1.0 / (sigma_ * sigma_);
      num += y_[order[s]] / (sigma_ * sigma_);
    }
    return {num / prec, 1.0 / prec};
  }

  const std::vector<double>& data() const { return y_; }

 private:
  std::vector<double> y_;
  double sigma_, m0_, s0_;
};

inline std::vector<double> normal_data(std::size_t n, double mean, double sd, std::uint64_t seed) {
  fesmc::Rng rng(seed);
  std::vector<double> y(n);
  for (auto& v : y) v = mean + sd * fesmc::std_normal(rng);
  return y;
}

}  // namespace testing_models
