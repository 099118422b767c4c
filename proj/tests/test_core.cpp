#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fesmc/core.hpp"

using namespace fesmc;

namespace {

ParticleSystem scalar_system(const std::vector<double>& xs, const std::vector<double>& lw) {
  ParticleSystem s;
  for (double x : xs) s.particles.push_back(Vector::Constant(1, x));
  s.log_weights = lw;
  return s;
}

}  // namespace

TEST(EffectiveSampleFraction, EqualWeightsGiveOne) {
  std::vector<double> lw(50, -3.7);
  EXPECT_DOUBLE_EQ(effective_sample_fraction(lw), 1.0);
}

TEST(EffectiveSampleFraction, SingleSurvivorGivesOneOverN) {
  std::vector<double> lw(100, kNegInf);
  lw[42] = 0.0;
  EXPECT_DOUBLE_EQ(effective_sample_fraction(lw), 0.01);
}

TEST(EffectiveSampleFraction, WeightsOneOneTwo) {
  // (1+1+2)^2 / (3 * (1+1+4)) = 16/18
  const std::vector<double> lw{0.0, 0.0, std::log(2.0)};
  EXPECT_NEAR(effective_sample_fraction(lw), 16.0 / 18.0, 1e-15);
}

TEST(EffectiveSampleFraction, AllZeroWeightsIsDegenerate) {
  std::vector<double> lw(4, kNegInf);
  EXPECT_THROW(effective_sample_fraction(lw), DegenerateSystemError);
}

TEST(EffectiveSampleFraction, ShiftInvariantAndBounded) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd(0.0, 3.0);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 2 + rep % 37;
    std::vector<double> lw(n), shifted(n);
    const double c = nd(rng) * 100.0;
    for (std::size_t i = 0; i < n; ++i) {
      lw[i] = nd(rng);
      shifted[i] = lw[i] + c;
    }
    const double ef = effective_sample_fraction(lw);
    EXPECT_NEAR(ef, effective_sample_fraction(shifted), 1e-12);
    EXPECT_GE(ef, 1.0 / static_cast<double>(n) - 1e-15);
    EXPECT_LE(ef, 1.0 + 1e-15);
  }
}

TEST(NormalizeWeights, Examples) {
  auto w = normalize_weights(std::vector<double>{0.0, 0.0});
  EXPECT_DOUBLE_EQ(w[0], 0.5);
  EXPECT_DOUBLE_EQ(w[1], 0.5);

  w = normalize_weights(std::vector<double>{std::log(1.0), std::log(3.0)});
  EXPECT_NEAR(w[0], 0.25, 1e-15);
  EXPECT_NEAR(w[1], 0.75, 1e-15);

  // Far below exp underflow: only the shift-by-max identity keeps these.
  w = normalize_weights(std::vector<double>{-1000.0, -1001.0});
  const double e = std::exp(1.0);
  EXPECT_NEAR(w[0], e / (1.0 + e), 1e-15);
  EXPECT_NEAR(w[1], 1.0 / (1.0 + e), 1e-15);
}

TEST(NormalizeWeights, SumsToOne) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 20.0);
  std::vector<double> lw(1000);
  for (auto& x : lw) x = nd(rng);
  double s = 0.0;
  for (double x : normalize_weights(lw)) s += x;
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(NormalizeWeights, RejectsDegenerate) {
  EXPECT_THROW(normalize_weights(std::vector<double>{kNegInf, kNegInf}), DegenerateSystemError);
}

TEST(WeightedMoments, SymmetricPair) {
  const auto s = scalar_system({2.5, -2.5}, {0.0, 0.0});
  const auto m = weighted_moments(s);
  EXPECT_NEAR(m.mean[0], 0.0, 1e-15);
  EXPECT_NEAR(m.covariance(0, 0), 6.25, 1e-15);
}

TEST(WeightedMoments, IdenticalParticlesHaveZeroCovariance) {
  ParticleSystem s;
  Vector v(3);
  v << 1.0, -2.0, 0.5;
  for (int i = 0; i < 10; ++i) s.particles.push_back(v);
  s.log_weights.assign(10, 0.0);
  const auto m = weighted_moments(s);
  EXPECT_NEAR(m.covariance.cwiseAbs().maxCoeff(), 0.0, 1e-15);
  EXPECT_TRUE(m.mean.isApprox(v));
}

TEST(WeightedMoments, NeedsTwoParticles) {
  EXPECT_THROW(weighted_moments(scalar_system({1.0}, {0.0})), InsufficientSampleError);
}

TEST(WeightedMoments, StandardNormalVariance) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  std::vector<double> xs(100000);
  for (auto& x : xs) x = nd(rng);
  const auto m = weighted_moments(scalar_system(xs, std::vector<double>(xs.size(), 0.0)));
  EXPECT_NEAR(m.covariance(0, 0), 1.0, 0.02);
}

TEST(WeightedMoments, EqualWeightsMatchUnweightedSampleMoments) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  ParticleSystem s;
  for (int i = 0; i < 500; ++i) {
    Vector v(2);
    v << nd(rng), 0.5 * nd(rng) + 1.0;
    s.particles.push_back(v);
  }
  s.log_weights.assign(500, 1.234);
  const auto m = weighted_moments(s);
  Vector mean = Vector::Zero(2);
  for (const auto& p : s.particles) mean += p;
  mean /= 500.0;
  Matrix cov = Matrix::Zero(2, 2);
  for (const auto& p : s.particles) cov += (p - mean) * (p - mean).transpose();
  cov /= 500.0;
  EXPECT_LT((m.mean - mean).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((m.covariance - cov).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_DOUBLE_EQ(m.covariance(0, 1), m.covariance(1, 0));
  EXPECT_GE(m.covariance(0, 0), 0.0);
}
