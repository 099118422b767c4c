#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "fesmc/errors.hpp"
#include "fesmc/io/export.hpp"
#include "fesmc/rng.hpp"

namespace fesmc::io {

// Generator settings for a synthetic Gaussian mixture. For the bivariate
// case `means` holds x/y pairs and `sds` is per component (isotropic).
struct SynthSpec {
  int dimension = 1;
  std::vector<double> weights{0.5, 0.5};
  std::vector<double> means{-3.0, 3.0};
  std::vector<double> sds{1.0, 1.0};
  std::size_t n = 100;
  std::uint64_t seed = 1;

  std::size_t components() const { return weights.size(); }

  void validate() const {
    if (dimension != 1 && dimension != 2) throw InvalidConfigError("synth", "dimension must be 1 or 2");
    const std::size_t K = components();
    if (K < 1) throw InvalidConfigError("synth", "need at least one component");
    if (means.size() != K * static_cast<std::size_t>(dimension) || sds.size() != K)
      throw InvalidConfigError("synth", "means/sds do not match the number of components");
    for (double w : weights)
      if (!(w > 0.0)) throw InvalidConfigError("synth", "weights must be positive");
    for (double s : sds)
      if (!(s > 0.0)) throw InvalidConfigError("synth", "sds must be positive");
    if (n < 2) throw InvalidConfigError("synth", "need at least two observations");
  }

  std::string describe() const {
    auto join = [](const std::vector<double>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ";" : "") + fmt_double(v[i]);
      return s;
    };
    std::ostringstream out;
    out << "synth dimension=" << dimension << " n=" << n << " seed=" << seed
        << " weights=" << join(weights) << " means=" << join(means) << " sds=" << join(sds);
    return out.str();
  }
};

// Component counts are fixed at round(n * q_k) (remainder to the last
// component) so every dataset carries the requested proportions. Rows are
// shuffled before returning.
inline RowMatrix synth_mixture(const SynthSpec& spec) {
  spec.validate();
  const std::size_t K = spec.components();
  double wsum = 0.0;
  for (double w : spec.weights) wsum += w;
  std::vector<std::size_t> counts(K);
  std::size_t assigned = 0;
  for (std::size_t k = 0; k + 1 < K; ++k) {
    counts[k] = static_cast<std::size_t>(std::llround(static_cast<double>(spec.n) * spec.weights[k] / wsum));
    counts[k] = std::min(counts[k], spec.n - assigned);
    assigned += counts[k];
  }
  counts[K - 1] = spec.n - assigned;
  Rng rng = make_stream(spec.seed, Stream::synth, 0);
  const auto d = static_cast<Eigen::Index>(spec.dimension);
  RowMatrix out(static_cast<Eigen::Index>(spec.n), d);
  Eigen::Index row = 0;
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < counts[k]; ++i, ++row)
      for (Eigen::Index j = 0; j < d; ++j)
        out(row, j) = spec.means[k * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)] +
                      spec.sds[k] * std_normal(rng);
  // Interleave the component blocks (Fisher-Yates).
  for (Eigen::Index i = out.rows() - 1; i > 0; --i) {
    auto j = static_cast<Eigen::Index>(uniform01(rng) * static_cast<double>(i + 1));
    j = std::min(j, i);
    out.row(i).swap(out.row(j));
  }
  return out;
}

inline std::string synth_csv(const SynthSpec& spec, const RowMatrix& values) {
  std::ostringstream out;
  out << "# " << spec.describe() << '\n';
  out << (spec.dimension == 1 ? "y" : "x,y") << '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) out << (j ? "," : "") << fmt_double(values(i, j));
    out << '\n';
  }
  return out.str();
}

}  // namespace fesmc::io
