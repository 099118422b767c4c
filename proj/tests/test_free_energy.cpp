#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "fesmc/free_energy.hpp"
#include "fesmc/rng.hpp"

using namespace fesmc;

namespace {

ParticleSystem system_from(const std::vector<double>& xs, std::vector<double> lw = {}) {
  ParticleSystem s;
  for (double x : xs) s.particles.push_back(Vector::Constant(1, x));
  s.log_weights = lw.empty() ? std::vector<double>(xs.size(), 0.0) : std::move(lw);
  return s;
}

FreeEnergyEstimate est(const ReactionGrid& g, std::vector<double> v) { return {g, std::move(v)}; }

std::vector<double> normal_draws(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> xs(n);
  for (auto& x : xs) x = std_normal(rng);
  return xs;
}

std::vector<int> bin_counts(const ReactionGrid& g, const std::vector<double>& xs) {
  std::vector<int> c(static_cast<std::size_t>(g.n_bins), 0);
  for (double x : xs) {
    const int b = estimation_bin(g, x);
    if (b >= 0) ++c[static_cast<std::size_t>(b)];
  }
  return c;
}

}  // namespace

TEST(ReactionGrid, Validation) {
  EXPECT_THROW(ReactionGrid(1.0, 1.0, 10), InvalidConfigError);
  EXPECT_THROW(ReactionGrid(0.0, 1.0, 0), InvalidConfigError);
  ReactionGrid g(-1.0, 3.0, 8);
  EXPECT_DOUBLE_EQ(g.width(), 0.5);
  EXPECT_DOUBLE_EQ(g.edge(0), -1.0);
  EXPECT_DOUBLE_EQ(g.edge(8), 3.0);
  EXPECT_DOUBLE_EQ(g.center(1), -0.25);
}

TEST(BinIndex, Examples) {
  ReactionGrid g(0.0, 1.0, 50);
  EXPECT_EQ(bin_index(g, 0.0), 0);
  EXPECT_EQ(bin_index(g, 11.0), 49);
  EXPECT_EQ(bin_index(g, 1.0), 49);
  EXPECT_EQ(bin_index(g, -3.0), 0);
  EXPECT_EQ(bin_index(g, 0.5), 25);
  EXPECT_EQ(bin_index(g, 0.0199), 0);
  EXPECT_EQ(bin_index(g, 0.02), 1);
  EXPECT_THROW(bin_index(g, std::nan("")), InvalidCoordinateError);
}

TEST(Abp, UniformOccupancyIsFlat) {
  ReactionGrid g(0.0, 4.0, 4);
  const auto e = abp_increment(system_from({0.5, 1.5, 2.5, 3.5, 0.1, 1.1, 2.1, 3.1}), std::vector<double>{0.5, 1.5, 2.5, 3.5, 0.1, 1.1, 2.1, 3.1}, g);
  for (double v : e.values) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(Abp, ThreeToOneSplitGivesLogThree) {
  ReactionGrid g(0.0, 2.0, 2);
  // Many particles so the smoothing mass 1/(N n_x) is negligible.
  std::vector<double> xs;
  for (int i = 0; i < 300000; ++i) xs.push_back(0.5);
  for (int i = 0; i < 100000; ++i) xs.push_back(1.5);
  const auto e = abp_increment(system_from(xs), xs, g);
  EXPECT_NEAR(e.values[1] - e.values[0], std::log(3.0), 1e-5);

  // Same split through weights instead of counts.
  const std::vector<double> two{0.5, 1.5};
  const auto w = abp_increment(system_from(two, {std::log(0.75), std::log(0.25)}), two, g);
  // s = 1/(2*2): -log((0.25+0.25)/(0.75+0.25)) = log 2
  EXPECT_NEAR(w.values[1] - w.values[0], std::log(2.0), 1e-14);
}

TEST(Abp, AllWeightInOneBinHitsSmoothingCeiling) {
  ReactionGrid g(0.0, 5.0, 5);
  const std::vector<double> xs(10, 0.2);
  const auto e = abp_increment(system_from(xs), xs, g);
  EXPECT_EQ(e.values[0], 0.0);
  // s = 1/(10*5) = 0.02: ceiling = log((1 + 0.02)/0.02) = log 51
  for (int i = 1; i < 5; ++i) EXPECT_NEAR(e.values[i], std::log(51.0), 1e-12);
}

TEST(Abp, InvariantToWeightScaling) {
  ReactionGrid g(-2.0, 2.0, 10);
  const auto xs = normal_draws(1000, 1);
  std::vector<double> lw(xs.size()), lw2(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    lw[i] = 0.3 * xs[i];
    lw2[i] = lw[i] + 17.0;
  }
  const auto a = abp_increment(system_from(xs, lw), xs, g);
  const auto b = abp_increment(system_from(xs, lw2), xs, g);
  for (int i = 0; i < 10; ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-12);
}

TEST(Abf, ConstantForceGivesLinearEstimate) {
  ReactionGrid g(0.0, 1.0, 10);
  std::vector<double> xs;
  for (int i = 0; i < 100; ++i) xs.push_back((i + 0.5) / 100.0);
  const std::vector<double> f(xs.size(), 2.0);
  const auto e = abf_increment(system_from(xs), xs, f, g);
  for (int i = 0; i < 10; ++i) EXPECT_NEAR(e.values[i], 2.0 * 0.1 * i, 1e-12);

  const std::vector<double> zero(xs.size(), 0.0);
  for (double v : abf_increment(system_from(xs), xs, zero, g).values) EXPECT_EQ(v, 0.0);
}

TEST(Abf, EmptyBinsInterpolateAndExtrapolate) {
  ReactionGrid g(0.0, 5.0, 5);
  // Occupied bins 1 (force 1) and 3 (force 3): bin 2 gets 2, bin 0 gets 1, bin 4 gets 3.
  const std::vector<double> xs{1.5, 3.5};
  const std::vector<double> f{1.0, 3.0};
  const auto e = abf_increment(system_from(xs), xs, f, g);
  const std::vector<double> slope{1, 1, 2, 3, 3};
  std::vector<double> expected(5);
  double cum = 0.0;
  for (int i = 0; i < 5; ++i) {
    expected[i] = cum + 0.5 * slope[i];
    cum += slope[i];
  }
  anchor(expected);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(e.values[i], expected[i], 1e-12);
}

TEST(Abf, NoOccupiedBinIsDegenerate) {
  ReactionGrid g(0.0, 1.0, 4);
  const std::vector<double> xs{5.0, -3.0};
  EXPECT_THROW(abf_increment(system_from(xs), xs, std::vector<double>{0.0, 0.0}, g), DegenerateSystemError);
}

TEST(Abf, StandardNormalMatchesQuadraticAndAgreesWithAbp) {
  ReactionGrid g(-2.0, 2.0, 50);
  const auto xs = normal_draws(100000, 2);
  const auto sys = system_from(xs);
  const auto abf = abf_increment(sys, xs, xs, g);
  const auto abp = abp_increment(sys, xs, g);
  const auto counts = bin_counts(g, xs);
  // Oracle: -log of the exact N(0,1) bin mass, anchored.
  std::vector<double> exact(50);
  for (int i = 0; i < 50; ++i) {
    const double c = g.center(i);
    exact[static_cast<std::size_t>(i)] = 0.5 * c * c;
  }
  anchor(exact);
  for (int i = 0; i < 50; ++i) {
    if (counts[static_cast<std::size_t>(i)] < 100) continue;
    EXPECT_NEAR(abf.values[i], exact[i], 0.15) << "bin " << i;
    EXPECT_NEAR(abp.values[i], abf.values[i], 0.2) << "bin " << i;
  }
}

TEST(Accumulate, Examples) {
  ReactionGrid g(0.0, 1.0, 3);
  const auto x = est(g, {0.0, 2.0, 1.0});
  EXPECT_EQ(accumulate(x, FreeEnergyEstimate::flat(g)).values, x.values);
  EXPECT_EQ(accumulate(FreeEnergyEstimate::flat(g), x).values, x.values);
  const auto y = est(g, {1.0, 0.0, 3.0});
  const auto y_shift = est(g, {8.5, 7.5, 10.5});
  EXPECT_EQ(accumulate(x, y).values, accumulate(x, y_shift).values);
  // (0,2,1) + (1,0,3) = (1,2,4) -> (0,1,3)
  EXPECT_EQ(accumulate(x, y).values, (std::vector<double>{0.0, 1.0, 3.0}));
}

TEST(Accumulate, Associative) {
  ReactionGrid g(0.0, 1.0, 4);
  const auto a = est(g, {0.0, 1.0, 2.0, 3.0});
  const auto b = est(g, {2.0, 0.0, 1.0, 5.0});
  const auto c = est(g, {4.0, 4.0, 0.0, 1.0});
  EXPECT_EQ(accumulate(accumulate(a, b), c).values, accumulate(a, accumulate(b, c)).values);
}

TEST(Accumulate, GridMismatch) {
  EXPECT_THROW(accumulate(FreeEnergyEstimate::flat(ReactionGrid(0, 1, 3)),
                          FreeEnergyEstimate::flat(ReactionGrid(0, 1, 4))),
               IncompatibleGridsError);
  EXPECT_THROW(accumulate(FreeEnergyEstimate::flat(ReactionGrid(0, 1, 3)),
                          FreeEnergyEstimate::flat(ReactionGrid(0, 2, 3))),
               IncompatibleGridsError);
}

TEST(BiasAdjustment, PiecewiseConstantAndClamped) {
  ReactionGrid g(0.0, 3.0, 3);
  const auto e = est(g, {1.0, 0.0, 2.5});
  EXPECT_EQ(bias_log_adjustment(e, -7.0), 1.0);
  EXPECT_EQ(bias_log_adjustment(e, 1.01), bias_log_adjustment(e, 1.99));
  EXPECT_EQ(bias_log_adjustment(e, 99.0), 2.5);
  EXPECT_EQ(bias_log_adjustment(FreeEnergyEstimate::flat(g), 1.3), 0.0);
  EXPECT_THROW(bias_log_adjustment(e, std::nan("")), InvalidCoordinateError);
}

TEST(Debias, FlatEstimateLeavesWeightsUnchanged) {
  ReactionGrid g(-2.0, 2.0, 8);
  const auto xs = normal_draws(50, 3);
  const auto sys = system_from(xs, xs);
  EXPECT_EQ(debias_final(sys, FreeEnergyEstimate::flat(g), xs).log_weights, sys.log_weights);
}

TEST(Debias, BiasThenDebiasRoundTrip) {
  ReactionGrid g(-3.0, 3.0, 30);
  const auto xs = normal_draws(5000, 4);
  std::vector<double> lw(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) lw[i] = -0.1 * xs[i] * xs[i];
  const auto sys = system_from(xs, lw);
  const auto a = abp_increment(sys, xs, g);
  auto biased = sys;
  apply_bias(biased, a, xs);
  const auto back = debias_final(biased, a, xs);
  const auto w0 = normalize_weights(sys.log_weights);
  const auto w1 = normalize_weights(back.log_weights);
  for (std::size_t i = 0; i < w0.size(); ++i) EXPECT_NEAR(w1[i], w0[i], 1e-12);
}

TEST(ProgressiveDebias, ComposesToDirect) {
  ReactionGrid g(0.0, 1.0, 6);
  const auto a = est(g, {0.0, 1.3, 7.1, 2.2, 0.4, 5.9});
  for (int steps : {1, 3, 5, 8}) {
    const auto rows = progressive_debias_targets(a, steps);
    ASSERT_EQ(rows.size(), static_cast<std::size_t>(steps) + 1);
    for (std::size_t i = 0; i < 6; ++i) {
      EXPECT_EQ(rows[0][i], 0.0);
      double sum = 0.0;
      for (int l = 1; l <= steps; ++l) sum += rows[l][i] - rows[l - 1][i];
      EXPECT_NEAR(sum, -a.values[i], 1e-12);
      EXPECT_EQ(rows.back()[i], -a.values[i]);
    }
  }
  EXPECT_THROW(progressive_debias_targets(a, 0), InvalidConfigError);
}
