#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "fesmc/core.hpp"
#include "fesmc/errors.hpp"

namespace fesmc {

// Uniform partition of [x_min, x_max] into n_bins cells.
struct ReactionGrid {
  double x_min = 0.0;
  double x_max = 1.0;
  int n_bins = 50;

  ReactionGrid() = default;
  ReactionGrid(double lo, double hi, int bins) : x_min(lo), x_max(hi), n_bins(bins) {
    validate();
  }

  void validate() const {
    if (!std::isfinite(x_min) || !std::isfinite(x_max) || !(x_min < x_max))
      throw InvalidConfigError("free_energy", "grid needs finite x_min < x_max");
    if (n_bins < 1) throw InvalidConfigError("free_energy", "grid needs at least one bin");
  }

  double width() const { return (x_max - x_min) / n_bins; }
  double edge(int i) const { return x_min + (x_max - x_min) * i / n_bins; }
  double center(int i) const { return 0.5 * (edge(i) + edge(i + 1)); }

  bool operator==(const ReactionGrid&) const = default;
};

// Clamped lookup: anything at or below x_min maps to bin 0, at or above
// x_max to the last bin.
inline int bin_index(const ReactionGrid& grid, double x) {
  if (std::isnan(x)) throw InvalidCoordinateError("free_energy", "reaction coordinate is NaN");
  if (x <= grid.x_min) return 0;
  if (x >= grid.x_max) return grid.n_bins - 1;
  int i = static_cast<int>(std::floor((x - grid.x_min) / (grid.x_max - grid.x_min) * grid.n_bins));
  i = std::clamp(i, 0, grid.n_bins - 1);
  // Guard the floor against rounding at the edges.
  if (x < grid.edge(i)) --i;
  else if (i + 1 < grid.n_bins && x >= grid.edge(i + 1)) ++i;
  return i;
}

// Bin that an estimator counts x in, or -1 if x lies outside the grid.
inline int estimation_bin(const ReactionGrid& grid, double x) {
  if (std::isnan(x)) throw InvalidCoordinateError("free_energy", "reaction coordinate is NaN");
  if (x < grid.x_min || x > grid.x_max) return -1;
  return bin_index(grid, x);
}

struct ReactionCoordinate {
  std::function<double(const Vector&)> xi;
  ReactionGrid grid;
};

// Piecewise-constant free energy, one value per bin, anchored so that the
// minimum is zero.
struct FreeEnergyEstimate {
  ReactionGrid grid;
  std::vector<double> values;

  static FreeEnergyEstimate flat(const ReactionGrid& g) {
    return {g, std::vector<double>(static_cast<std::size_t>(g.n_bins), 0.0)};
  }

  double at(double x) const { return values[static_cast<std::size_t>(bin_index(grid, x))]; }
  double range() const {
    auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    return *hi - *lo;
  }
};

inline void anchor(std::vector<double>& values) {
  if (values.empty()) return;
  const double m = *std::min_element(values.begin(), values.end());
  for (double& v : values) v -= m;
}

namespace detail {

inline void check_inputs(const ParticleSystem& system, std::span<const double> xi) {
  if (xi.size() != system.size())
    throw InvalidCoordinateError("free_energy", "one reaction-coordinate value per particle required");
}

}  // namespace detail

// Occupancy estimator. Each bin receives pseudo-mass s = sum(w) / (N n_x) so
// that empty bins stay finite.
inline FreeEnergyEstimate abp_increment(const ParticleSystem& system, std::span<const double> xi,
                                        const ReactionGrid& grid) {
  detail::check_inputs(system, xi);
  const auto w = normalize_weights(system.log_weights);
  const auto nx = static_cast<std::size_t>(grid.n_bins);
  std::vector<double> mass(nx, 0.0);
  for (std::size_t n = 0; n < w.size(); ++n) {
    const int b = estimation_bin(grid, xi[n]);
    if (b >= 0) mass[static_cast<std::size_t>(b)] += w[n];
  }
  const double total = 1.0;
  const double s = total / (static_cast<double>(w.size()) * static_cast<double>(nx));
  const double denom = total + static_cast<double>(nx) * s;
  FreeEnergyEstimate out{grid, std::vector<double>(nx)};
  for (std::size_t i = 0; i < nx; ++i) out.values[i] = -std::log((mass[i] + s) / denom);
  anchor(out.values);
  return out;
}

// Mean-force estimator. Bins without weight take a linear interpolation of
// the neighbouring mean forces (constant beyond the outermost occupied
// bins); the derivative is then integrated to bin centres.
inline FreeEnergyEstimate abf_increment(const ParticleSystem& system, std::span<const double> xi,
                                        std::span<const double> force, const ReactionGrid& grid) {
  detail::check_inputs(system, xi);
  if (force.size() != system.size())
    throw InvalidCoordinateError("free_energy", "one force value per particle required");
  const auto w = normalize_weights(system.log_weights);
  const auto nx = static_cast<std::size_t>(grid.n_bins);
  std::vector<double> mass(nx, 0.0), moment(nx, 0.0);
  for (std::size_t n = 0; n < w.size(); ++n) {
    if (w[n] == 0.0) continue;
    const int b = estimation_bin(grid, xi[n]);
    if (b < 0) continue;
    if (!std::isfinite(force[n]))
      throw ModelEvaluationError("free_energy", "non-finite force at a weighted particle");
    mass[static_cast<std::size_t>(b)] += w[n];
    moment[static_cast<std::size_t>(b)] += w[n] * force[n];
  }
  std::vector<std::size_t> occupied;
  for (std::size_t i = 0; i < nx; ++i)
    if (mass[i] > 0.0) occupied.push_back(i);
  if (occupied.empty())
    throw DegenerateSystemError("free_energy", "no weighted particle inside the grid");

  std::vector<double> slope(nx);
  for (auto i : occupied) slope[i] = moment[i] / mass[i];
  for (std::size_t i = 0; i < occupied.front(); ++i) slope[i] = slope[occupied.front()];
  for (std::size_t i = occupied.back() + 1; i < nx; ++i) slope[i] = slope[occupied.back()];
  for (std::size_t k = 0; k + 1 < occupied.size(); ++k) {
    const std::size_t a = occupied[k], b = occupied[k + 1];
    for (std::size_t i = a + 1; i < b; ++i) {
      const double frac = static_cast<double>(i - a) / static_cast<double>(b - a);
      slope[i] = (1.0 - frac) * slope[a] + frac * slope[b];
    }
  }

  const double h = grid.width();
  FreeEnergyEstimate out{grid, std::vector<double>(nx)};
  double cumulative = 0.0;
  for (std::size_t i = 0; i < nx; ++i) {
    out.values[i] = cumulative + 0.5 * h * slope[i];
    cumulative += h * slope[i];
  }
  anchor(out.values);
  return out;
}

// A_t = A_{t-1} + D_t, re-anchored.
inline FreeEnergyEstimate accumulate(const FreeEnergyEstimate& prev,
                                     const FreeEnergyEstimate& increment) {
  if (!(prev.grid == increment.grid) || prev.values.size() != increment.values.size())
    throw IncompatibleGridsError("free_energy", "estimates live on different grids");
  FreeEnergyEstimate out{prev.grid, prev.values};
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += increment.values[i];
  anchor(out.values);
  return out;
}

// Difference of two estimates on the same grid, anchored.
inline FreeEnergyEstimate difference(const FreeEnergyEstimate& a, const FreeEnergyEstimate& b) {
  if (!(a.grid == b.grid))
    throw IncompatibleGridsError("free_energy", "estimates live on different grids");
  FreeEnergyEstimate out{a.grid, a.values};
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] -= b.values[i];
  anchor(out.values);
  return out;
}

inline double bias_log_adjustment(const FreeEnergyEstimate& estimate, double xi) {
  return estimate.at(xi);
}

// Adds the bias of `estimate` to every log-weight (sign = +1) or removes it
// (sign = -1).
inline void apply_bias(ParticleSystem& system, const FreeEnergyEstimate& estimate,
                       std::span<const double> xi, double sign = 1.0) {
  detail::check_inputs(system, xi);
  for (std::size_t n = 0; n < system.size(); ++n)
    system.log_weights[n] += sign * bias_log_adjustment(estimate, xi[n]);
}

// Importance step from the biased density back to the target: each
// log-weight gets -A_T(xi).
inline ParticleSystem debias_final(ParticleSystem system, const FreeEnergyEstimate& estimate,
                                   std::span<const double> xi) {
  apply_bias(system, estimate, xi, -1.0);
  return system;
}

// Per-bin log-density adjustments for l = 0..L, adjustment_l = -(l/L) A_T.
// Step l of a progressive debias adds adjustment_l - adjustment_{l-1}.
inline std::vector<std::vector<double>> progressive_debias_targets(
    const FreeEnergyEstimate& estimate, int steps) {
  if (steps < 1) throw InvalidConfigError("free_energy", "progressive debias needs L >= 1");
  std::vector<std::vector<double>> out(static_cast<std::size_t>(steps) + 1);
  for (int l = 0; l <= steps; ++l) {
    auto& row = out[static_cast<std::size_t>(l)];
    row.resize(estimate.values.size());
    for (std::size_t i = 0; i < row.size(); ++i)
      row[i] = l == steps ? -estimate.values[i]
                          : -(static_cast<double>(l) / steps) * estimate.values[i];
  }
  return out;
}

}  // namespace fesmc
