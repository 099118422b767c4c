#pragma once

#include <cmath>
#include <vector>

#include "fesmc/core.hpp"
#include "fesmc/free_energy.hpp"
#include "fesmc/mixtures.hpp"
#include "fesmc/sequences.hpp"

namespace fesmc {

// One-dimensional two-mode target annealed from a wide Gaussian; the
// reaction coordinate is the coordinate itself.
struct ToyBimodal {
  double start_sd = 3.0;
  double weight_left = 0.3;
  double mean_left = -2.0;
  double mean_right = 2.0;
  double sd = 0.4;
  double x_min = -4.0;
  double x_max = 4.0;

  double log_start(double x) const {
    return density::log_normal_pdf(x, 0.0, 1.0 / (start_sd * start_sd));
  }

  double log_target(double x) const {
    const double prec = 1.0 / (sd * sd);
    const double terms[2] = {std::log(weight_left) + density::log_normal_pdf(x, mean_left, prec),
                             std::log1p(-weight_left) + density::log_normal_pdf(x, mean_right, prec)};
    return log_sum_exp_small(terms);
  }

  // d/dx log target
  double grad_log_target(double x) const {
    const double prec = 1.0 / (sd * sd);
    const double terms[2] = {std::log(weight_left) + density::log_normal_pdf(x, mean_left, prec),
                             std::log1p(-weight_left) + density::log_normal_pdf(x, mean_right, prec)};
    const double lse = log_sum_exp_small(terms);
    const double r0 = std::exp(terms[0] - lse), r1 = std::exp(terms[1] - lse);
    return -prec * (r0 * (x - mean_left) + r1 * (x - mean_right));
  }

  double exact_mean() const { return weight_left * mean_left + (1.0 - weight_left) * mean_right; }

  ReactionCoordinate reaction_coordinate(int n_bins = 50) const {
    return {[](const Vector& th) { return th[0]; }, ReactionGrid(x_min, x_max, n_bins)};
  }

  TargetSequence sequence(std::vector<double> schedule) const {
    const ToyBimodal self = *this;
    AnnealEndpoint start{[self](const Vector& th) { return self.log_start(th[0]); },
                         [self](const Vector& th) { return th[0] / (self.start_sd * self.start_sd); }};
    AnnealEndpoint target{[self](const Vector& th) { return self.log_target(th[0]); },
                          [self](const Vector& th) { return -self.grad_log_target(th[0]); }};
    return anneal_sequence(
        [self](Rng& rng) {
          Vector v(1);
          v[0] = self.start_sd * std_normal(rng);
          return v;
        },
        std::move(start), std::move(target), std::move(schedule));
  }
};

}  // namespace fesmc
