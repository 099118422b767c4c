#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "fesmc/core.hpp"
#include "fesmc/sequences.hpp"
#include "normal_mean_model.hpp"

using namespace fesmc;
using testing_models::NormalMean;

namespace {

std::vector<double> ordered_values(const std::vector<double>& v, const std::vector<std::size_t>& idx) {
  std::vector<double> out;
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

double log_normal(double x, double var) { return -0.5 * x * x / var - 0.5 * std::log(2.0 * M_PI * var); }

}  // namespace

TEST(VanDerCorput, OneToSeven) {
  const std::vector<double> v{1, 2, 3, 4, 5, 6, 7};
  EXPECT_EQ(ordered_values(v, van_der_corput_order(v)), (std::vector<double>{4, 2, 6, 1, 3, 5, 7}));
}

TEST(VanDerCorput, EvenSizeTakesSmallerMiddle) {
  const std::vector<double> v{10, 20, 30, 40};
  EXPECT_EQ(ordered_values(v, van_der_corput_order(v)), (std::vector<double>{20, 10, 30, 40}));
}

TEST(VanDerCorput, SingleAndEmpty) {
  EXPECT_EQ(van_der_corput_order(std::vector<double>{3.5}), (std::vector<std::size_t>{0}));
  EXPECT_TRUE(van_der_corput_order(std::vector<double>{}).empty());
}

TEST(VanDerCorput, UnsortedInputIsPermutation) {
  Rng rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 1 + rep * 3;
    std::vector<double> v(n);
    // Coarse rounding forces duplicates.
    for (auto& x : v) x = std::round(std_normal(rng) * 2.0);
    auto idx = van_der_corput_order(v);
    ASSERT_EQ(idx.size(), n);
    std::sort(idx.begin(), idx.end());
    for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(idx[i], i);
  }
}

TEST(VanDerCorput, ShuffledInputGivesSameValueOrder) {
  const std::vector<double> v{7, 3, 5, 1, 6, 2, 4};
  EXPECT_EQ(ordered_values(v, van_der_corput_order(v)), (std::vector<double>{4, 2, 6, 1, 3, 5, 7}));
}

TEST(VanDerCorput, DuplicatesOfPivotGoLeft) {
  // Sorted (1,2,2,2,3): pivot is the middle 2, the other 2s go left.
  const std::vector<double> v{2, 1, 2, 3, 2};
  const auto vals = ordered_values(v, van_der_corput_order(v));
  EXPECT_EQ(vals.front(), 2.0);
  EXPECT_EQ(vals, (std::vector<double>{2, 2, 3, 1, 2}));
}

TEST(IbisSequence, TelescopesToFullLikelihood) {
  auto model = std::make_shared<NormalMean>(testing_models::normal_data(20, 1.0, 2.0, 3), 2.0, 0.0, 5.0);
  auto order = van_der_corput_order(model->data());
  const auto seq = ibis_sequence(model, order);
  EXPECT_EQ(seq.length, 20);
  Rng rng(4);
  for (int rep = 0; rep < 30; ++rep) {
    const Vector th = Vector::Constant(1, 4.0 * std_normal(rng));
    double sum = 0.0;
    for (int t = 1; t <= seq.length; ++t) {
      const double inc = seq.incremental_log_weight(t, th);
      EXPECT_NEAR(seq.log_density(t, th) - seq.log_density(t - 1, th), inc, 1e-10);
      sum += inc;
    }
    double full = 0.0;
    for (std::size_t i = 0; i < 20; ++i) full += model->log_lik(th, i);
    EXPECT_NEAR(sum, full, 1e-10);
  }
}

TEST(IbisSequence, OneObservationConjugateReweighting) {
  auto model = std::make_shared<NormalMean>(std::vector<double>{1.5}, 1.0, 0.0, 2.0);
  const auto seq = ibis_sequence(model, {0});
  Rng rng(5);
  ParticleSystem sys;
  const int n = 200000;
  for (int i = 0; i < n; ++i) sys.particles.push_back(seq.initial_sampler(rng));
  sys.log_weights.assign(n, 0.0);
  EXPECT_DOUBLE_EQ(effective_sample_fraction(sys), 1.0);
  for (int i = 0; i < n; ++i) sys.log_weights[i] += seq.incremental_log_weight(1, sys.particles[i]);
  const auto [pm, pv] = model->posterior({0}, 1);  // mean 1.2, variance 0.8
  const auto mom = weighted_moments(sys);
  const double neff = n * effective_sample_fraction(sys);
  EXPECT_NEAR(mom.mean[0], pm, 3.0 * std::sqrt(pv / neff));
  EXPECT_NEAR(mom.covariance(0, 0), pv, 3.0 * pv * std::sqrt(2.0 / neff));
}

TEST(IbisSequence, RejectsWrongOrderingLength) {
  auto model = std::make_shared<NormalMean>(std::vector<double>{1.0, 2.0}, 1.0, 0.0, 1.0);
  EXPECT_THROW(ibis_sequence(model, {0}), InvalidScheduleError);
}

TEST(AnnealSequence, TelescopingAndClosedForm) {
  AnnealEndpoint start{[](const Vector& v) { return log_normal(v[0], 4.0); }, nullptr};
  AnnealEndpoint target{[](const Vector& v) { return log_normal(v[0], 1.0); }, nullptr};
  const auto seq = anneal_sequence([](Rng& r) { return Vector::Constant(1, 2.0 * std_normal(r)); },
                                   start, target, linear_schedule(10));
  EXPECT_EQ(seq.length, 10);
  Rng rng(6);
  for (int rep = 0; rep < 30; ++rep) {
    const Vector th = Vector::Constant(1, 3.0 * std_normal(rng));
    for (int t = 1; t <= 10; ++t) {
      EXPECT_NEAR(seq.log_density(t, th) - seq.log_density(t - 1, th), seq.incremental_log_weight(t, th),
                  1e-10);
      const double g = t / 10.0;
      const double expected = 0.1 * (log_normal(th[0], 1.0) - log_normal(th[0], 4.0));
      EXPECT_NEAR(seq.incremental_log_weight(t, th), expected, 1e-12);
      // pi_t is N(0, s2) up to a constant with 1/s2 = (1-g)/4 + g.
      const double inv = (1.0 - g) / 4.0 + g;
      const Vector zero = Vector::Zero(1);
      EXPECT_NEAR(seq.log_density(t, th) - seq.log_density(t, zero), -0.5 * th[0] * th[0] * inv, 1e-10);
    }
  }
}

TEST(AnnealSequence, EqualEndpointsGiveZeroIncrements) {
  AnnealEndpoint same{[](const Vector& v) { return -v.squaredNorm(); }, nullptr};
  const auto seq = anneal_sequence([](Rng&) { return Vector::Zero(2); }, same, same, linear_schedule(4));
  for (int t = 1; t <= 4; ++t) EXPECT_EQ(seq.incremental_log_weight(t, Vector::Ones(2)), 0.0);
}

TEST(AnnealSequence, SingleStepIsImportanceSampling) {
  AnnealEndpoint start{[](const Vector& v) { return log_normal(v[0], 4.0); }, nullptr};
  AnnealEndpoint target{[](const Vector& v) { return log_normal(v[0], 1.0); }, nullptr};
  const auto seq = anneal_sequence(nullptr, start, target, linear_schedule(1));
  const Vector th = Vector::Constant(1, 0.7);
  EXPECT_NEAR(seq.incremental_log_weight(1, th), log_normal(0.7, 1.0) - log_normal(0.7, 4.0), 1e-15);
}

TEST(Schedule, Validation) {
  EXPECT_THROW(validate_schedule(std::vector<double>{0.0, 0.5, 0.4, 1.0}), InvalidScheduleError);
  EXPECT_THROW(validate_schedule(std::vector<double>{0.0, 0.5, 0.5, 1.0}), InvalidScheduleError);
  EXPECT_THROW(validate_schedule(std::vector<double>{0.1, 1.0}), InvalidScheduleError);
  EXPECT_THROW(validate_schedule(std::vector<double>{0.0, 0.9}), InvalidScheduleError);
  EXPECT_THROW(linear_schedule(0), InvalidScheduleError);
  EXPECT_NO_THROW(validate_schedule(linear_schedule(7)));
}

TEST(PriorCorrection, Examples) {
  LogDensity narrow = [](const Vector& v) { return log_normal(v[0], 1.0); };
  LogDensity wide = [](const Vector& v) { return log_normal(v[0], 4.0); };
  EXPECT_NEAR(prior_correction_logweight(Vector::Zero(1), narrow, wide), std::log(2.0), 1e-15);
  EXPECT_EQ(prior_correction_logweight(Vector::Constant(1, 1.3), narrow, narrow), 0.0);
  LogDensity zero = [](const Vector&) { return kNegInf; };
  EXPECT_THROW(prior_correction_logweight(Vector::Zero(1), narrow, zero), DominationError);
}

TEST(PriorCorrection, ReweightedWideSampleHasUnitVariance) {
  LogDensity narrow = [](const Vector& v) { return log_normal(v[0], 1.0); };
  LogDensity wide = [](const Vector& v) { return log_normal(v[0], 4.0); };
  Rng rng(7);
  ParticleSystem sys;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    sys.particles.push_back(Vector::Constant(1, 2.0 * std_normal(rng)));
    sys.log_weights.push_back(prior_correction_logweight(sys.particles.back(), narrow, wide));
  }
  const double neff = n * effective_sample_fraction(sys);
  EXPECT_NEAR(weighted_moments(sys).covariance(0, 0), 1.0, 3.0 * std::sqrt(2.0 / neff));
}
