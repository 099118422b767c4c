#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "fesmc/errors.hpp"
#include "fesmc/rng.hpp"

namespace fesmc {

enum class ResamplingScheme { systematic, multinomial, residual };

inline std::string_view to_string(ResamplingScheme s) {
  switch (s) {
    case ResamplingScheme::systematic: return "systematic";
    case ResamplingScheme::multinomial: return "multinomial";
    case ResamplingScheme::residual: return "residual";
  }
  return "?";
}

namespace detail {

inline void check_simplex(std::span<const double> w) {
  if (w.empty()) throw InvalidWeightsError("resampling", "empty weight vector");
  double total = 0.0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x))
      throw InvalidWeightsError("resampling", "weights must be finite and nonnegative");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw InvalidWeightsError("resampling", "weights do not sum to 1");
}

// Cumulative sums with the last entry pinned to exactly 1.
inline std::vector<double> cumulative(std::span<const double> w) {
  std::vector<double> c(w.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    c[i] = acc;
  }
  c.back() = 1.0;
  return c;
}

inline std::size_t locate(const std::vector<double>& cum, double u) {
  const auto it = std::upper_bound(cum.begin(), cum.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()), cum.size() - 1);
}

}  // namespace detail

// One stratified point (u + k) / N per output slot. Output is nondecreasing.
inline std::vector<std::size_t> systematic_resample(std::span<const double> weights,
                                                    double u) {
  detail::check_simplex(weights);
  const std::size_t n = weights.size();
  const auto cum = detail::cumulative(weights);
  std::vector<std::size_t> out(n);
  std::size_t j = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double point = (u + static_cast<double>(k)) / static_cast<double>(n);
    while (j + 1 < n && cum[j] <= point) ++j;
    out[k] = j;
  }
  return out;
}

inline std::vector<std::size_t> multinomial_resample(std::span<const double> weights,
                                                     Rng& rng) {
  detail::check_simplex(weights);
  const auto cum = detail::cumulative(weights);
  std::vector<std::size_t> out(weights.size());
  for (auto& idx : out) idx = detail::locate(cum, uniform01(rng));
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<std::size_t> residual_resample(std::span<const double> weights,
                                                  Rng& rng) {
  detail::check_simplex(weights);
  const std::size_t n = weights.size();
  const double nd = static_cast<double>(n);
  std::vector<std::size_t> out;
  out.reserve(n);
  std::vector<double> residual(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double scaled = nd * weights[i];
    const auto copies = static_cast<std::size_t>(std::floor(scaled));
    out.insert(out.end(), copies, i);
    residual[i] = scaled - static_cast<double>(copies);
  }
  // Rounding can push the deterministic part one over N.
  if (out.size() > n) out.resize(n);
  const std::size_t remaining = n - out.size();
  if (remaining > 0) {
    double total = 0.0;
    for (double r : residual) total += r;
    if (total <= 0.0) {
      // Only reachable through rounding; give the slots to the heaviest particles.
      std::vector<std::size_t> order(n);
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
      for (std::size_t r = 0; r < remaining; ++r) out.push_back(order[r % n]);
    } else {
      for (double& r : residual) r /= total;
      const auto cum = detail::cumulative(residual);
      for (std::size_t r = 0; r < remaining; ++r)
        out.push_back(detail::locate(cum, uniform01(rng)));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Dispatch used by the engine; `rng` supplies u for the systematic scheme.
inline std::vector<std::size_t> resample(ResamplingScheme scheme,
                                         std::span<const double> weights, Rng& rng) {
  switch (scheme) {
    case ResamplingScheme::systematic: return systematic_resample(weights, uniform01(rng));
    case ResamplingScheme::multinomial: return multinomial_resample(weights, rng);
    case ResamplingScheme::residual: return residual_resample(weights, rng);
  }
  throw InvalidWeightsError("resampling", "unknown scheme");
}

}  // namespace fesmc
