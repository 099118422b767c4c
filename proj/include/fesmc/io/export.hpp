#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fesmc/core.hpp"
#include "fesmc/engine.hpp"
#include "fesmc/errors.hpp"
#include "fesmc/free_energy.hpp"

namespace fesmc::io {

// Shortest text that round-trips the double.
inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

// Write to a sibling temp file, then rename over the target.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("io", "cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw ParseError("io", "write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

// Natural-scale coordinates of one particle, used by every exporter.
using CoordinateMap = std::function<Vector(const Vector&)>;

inline std::string particles_csv(const ParticleSystem& system, const std::vector<std::string>& names,
                                 const CoordinateMap& to_natural) {
  const auto w = normalize_weights(system.log_weights);
  std::ostringstream out;
  out << "weight";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < system.size(); ++i) {
    const Vector v = to_natural ? to_natural(system.particles[i]) : system.particles[i];
    out << fmt_double(w[i]);
    for (Eigen::Index j = 0; j < v.size(); ++j) out << ',' << fmt_double(v[j]);
    out << '\n';
  }
  return out.str();
}

inline std::string free_energy_csv(const FreeEnergyEstimate& estimate) {
  std::ostringstream out;
  out << "bin_index,x_left,x_right,A_hat\n";
  for (int i = 0; i < estimate.grid.n_bins; ++i)
    out << i << ',' << fmt_double(estimate.grid.edge(i)) << ',' << fmt_double(estimate.grid.edge(i + 1))
        << ',' << fmt_double(estimate.values[static_cast<std::size_t>(i)]) << '\n';
  return out.str();
}

inline std::string ef_trace_csv(const RunDiagnostics& diag) {
  std::ostringstream out;
  out << "t,ef,resampled,acceptance,scale\n";
  auto emit = [&](const IterationRecord& r) {
    out << r.t << ',' << fmt_double(r.ef) << ',' << (r.resampled ? 1 : 0) << ','
        << fmt_double(r.acceptance) << ',' << fmt_double(r.scale) << '\n';
  };
  for (const auto& r : diag.iterations) emit(r);
  for (const auto& r : diag.debias_steps) emit(r);
  return out.str();
}

struct HistogramBin {
  std::string coordinate;
  double left = 0.0;
  double right = 0.0;
  double mass = 0.0;
};

// Weighted histogram of every coordinate over its own particle range.
inline std::vector<HistogramBin> export_histograms(const ParticleSystem& system,
                                                   const std::vector<std::string>& names,
                                                   const CoordinateMap& to_natural, int bins) {
  if (bins < 1) throw InvalidConfigError("io", "histograms need at least one bin");
  const auto w = normalize_weights(system.log_weights);
  std::vector<Vector> nat(system.size());
  for (std::size_t i = 0; i < system.size(); ++i)
    nat[i] = to_natural ? to_natural(system.particles[i]) : system.particles[i];
  std::vector<HistogramBin> out;
  const auto d = static_cast<std::size_t>(nat.empty() ? 0 : nat.front().size());
  for (std::size_t j = 0; j < d; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    double lo = nat.front()[jj], hi = lo;
    for (const auto& v : nat) lo = std::min(lo, v[jj]), hi = std::max(hi, v[jj]);
    if (!(hi > lo)) lo -= 0.5, hi += 0.5;
    const ReactionGrid grid(lo, hi, bins);
    std::vector<double> mass(static_cast<std::size_t>(bins), 0.0);
    for (std::size_t i = 0; i < nat.size(); ++i) mass[static_cast<std::size_t>(bin_index(grid, nat[i][jj]))] += w[i];
    const std::string name = j < names.size() ? names[j] : "x" + std::to_string(j);
    for (int b = 0; b < bins; ++b)
      out.push_back({name, grid.edge(b), grid.edge(b + 1), mass[static_cast<std::size_t>(b)]});
  }
  return out;
}

inline std::string histograms_csv(const std::vector<HistogramBin>& bins) {
  std::ostringstream out;
  out << "coordinate,bin_left,bin_right,weighted_mass\n";
  for (const auto& b : bins)
    out << b.coordinate << ',' << fmt_double(b.left) << ',' << fmt_double(b.right) << ','
        << fmt_double(b.mass) << '\n';
  return out.str();
}

struct HexCell {
  double center_x = 0.0;
  double center_y = 0.0;
  double mass = 0.0;
};

// Weighted counts on a pointy-top hexagonal lattice. `resolution` hexagons
// span the x extent; the y axis is scaled so the hexagons are regular in
// the unit box of the data. Only occupied cells are returned.
inline std::vector<HexCell> export_hexbin(std::span<const double> xs, std::span<const double> ys,
                                          std::span<const double> weights, int resolution) {
  if (resolution < 1) throw InvalidConfigError("io", "hexbin resolution must be >= 1");
  if (xs.size() != ys.size() || xs.size() != weights.size())
    throw InvalidConfigError("io", "hexbin inputs must have equal length");
  if (xs.empty()) return {};
  double total = 0.0;
  for (double w : weights) total += w;
  auto [xlo_it, xhi_it] = std::minmax_element(xs.begin(), xs.end());
  auto [ylo_it, yhi_it] = std::minmax_element(ys.begin(), ys.end());
  double xlo = *xlo_it, xhi = *xhi_it, ylo = *ylo_it, yhi = *yhi_it;
  if (!(xhi > xlo)) xlo -= 0.5, xhi += 0.5;
  if (!(yhi > ylo)) ylo -= 0.5, yhi += 0.5;
  const double sx = (xhi - xlo) / resolution;
  const double sy = (yhi - ylo) / resolution;
  const double size = 1.0 / std::sqrt(3.0);  // unit hexagon width
  std::map<std::pair<long, long>, double> cells;  // (r, q) ordering
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double u = (xs[i] - xlo) / sx, v = (ys[i] - ylo) / sy;
    const double qf = (std::sqrt(3.0) / 3.0 * u - v / 3.0) / size;
    const double rf = (2.0 / 3.0 * v) / size;
    const double sf = -qf - rf;
    double q = std::round(qf), r = std::round(rf), s = std::round(sf);
    const double dq = std::abs(q - qf), dr = std::abs(r - rf), ds = std::abs(s - sf);
    if (dq > dr && dq > ds) q = -r - s;
    else if (dr > ds) r = -q - s;
    cells[{static_cast<long>(r), static_cast<long>(q)}] += weights[i] / total;
  }
  std::vector<HexCell> out;
  out.reserve(cells.size());
  for (const auto& [rq, mass] : cells) {
    const auto [r, q] = rq;
    const double u = size * std::sqrt(3.0) * (static_cast<double>(q) + static_cast<double>(r) / 2.0);
    const double v = size * 1.5 * static_cast<double>(r);
    out.push_back({xlo + u * sx, ylo + v * sy, mass});
  }
  return out;
}

inline std::string hexbin_csv(const std::vector<HexCell>& cells) {
  std::ostringstream out;
  out << "hex_center_x,hex_center_y,weighted_mass\n";
  for (const auto& c : cells)
    out << fmt_double(c.center_x) << ',' << fmt_double(c.center_y) << ',' << fmt_double(c.mass) << '\n';
  return out.str();
}

// Flat key=value report, in insertion order.
class Summary {
 public:
  void set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_)
      if (k == key) {
        v = value;
        return;
      }
    entries_.emplace_back(key, value);
  }
  void set(const std::string& key, double value) { set(key, fmt_double(value)); }
  void set(const std::string& key, long long value) { set(key, std::to_string(value)); }

  std::string str() const {
    std::ostringstream out;
    for (const auto& [k, v] : entries_) out << k << '=' << v << '\n';
    return out.str();
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace fesmc::io
