#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <vector>

#include "fesmc/core.hpp"
#include "fesmc/errors.hpp"
#include "fesmc/rng.hpp"

namespace fesmc {

using Sampler = std::function<Vector(Rng&)>;
using IndexedLogDensity = std::function<double(int, const Vector&)>;

// pi_0 ... pi_T. `force` is optional: -d log pi_t / d xi for the model's
// reaction coordinate, used by the ABF estimator.
struct TargetSequence {
  int length = 0;
  Sampler initial_sampler;
  IndexedLogDensity incremental_log_weight;
  IndexedLogDensity log_density;
  IndexedLogDensity force;
};

// Interface a Bayesian model exposes to the sequence constructors. All
// vectors are in sampler coordinates; log_prior includes the Jacobian of
// whatever transform the model applies.
class BayesModel {
 public:
  virtual ~BayesModel() = default;

  virtual std::size_t dim() const = 0;
  virtual std::size_t n_obs() const = 0;
  virtual Vector sample_prior(Rng& rng) const = 0;
  virtual double log_prior(const Vector& theta) const = 0;
  virtual double log_lik(const Vector& theta, std::size_t obs) const = 0;

  virtual double log_lik_sum(const Vector& theta, std::span<const std::size_t> obs) const {
    double s = 0.0;
    for (auto i : obs) s += log_lik(theta, i);
    return s;
  }

  // -d/dxi of the log-prior and of one observation's log-likelihood.
  virtual bool has_force() const { return false; }
  virtual double force_prior(const Vector&) const {
    return std::numeric_limits<double>::quiet_NaN();
  }
  virtual double force_lik(const Vector&, std::size_t) const { return 0.0; }
  virtual bool likelihood_free_of_xi() const { return false; }
};

// Recursive median split, emitted breadth first. For even-sized groups the
// pivot is the smaller middle value; ties with the pivot go left.
inline std::vector<std::size_t> van_der_corput_order(std::span<const double> values) {
  std::vector<std::size_t> sorted(values.size());
  std::iota(sorted.begin(), sorted.end(), std::size_t{0});
  std::stable_sort(sorted.begin(), sorted.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<std::size_t> out;
  out.reserve(values.size());
  std::deque<std::vector<std::size_t>> queue;
  if (!sorted.empty()) queue.push_back(std::move(sorted));
  while (!queue.empty()) {
    auto group = std::move(queue.front());
    queue.pop_front();
    const std::size_t m = (group.size() - 1) / 2;
    const double pivot = values[group[m]];
    out.push_back(group[m]);
    std::vector<std::size_t> left(group.begin(), group.begin() + static_cast<std::ptrdiff_t>(m));
    std::vector<std::size_t> right;
    for (std::size_t j = m + 1; j < group.size(); ++j) {
      if (values[group[j]] == pivot)
        left.push_back(group[j]);
      else
        right.push_back(group[j]);
    }
    if (!left.empty()) queue.push_back(std::move(left));
    if (!right.empty()) queue.push_back(std::move(right));
  }
  return out;
}

inline std::vector<std::size_t> identity_order(std::size_t n) {
  std::vector<std::size_t> out(n);
  std::iota(out.begin(), out.end(), std::size_t{0});
  return out;
}

inline std::vector<std::size_t> random_order(std::size_t n, Rng& rng) {
  auto out = identity_order(n);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

// Replaces the prior as pi_0; undo with prior_correction_logweight at the end.
struct ArtificialPrior {
  Sampler sampler;
  LogDensity log_density;
};

// pi_t = p(theta | y_{sigma(1)}, ..., y_{sigma(t)}), T = number of observations.
inline TargetSequence ibis_sequence(std::shared_ptr<const BayesModel> model,
                                    std::vector<std::size_t> ordering,
                                    std::shared_ptr<const ArtificialPrior> artificial = nullptr) {
  if (ordering.size() != model->n_obs())
    throw InvalidScheduleError("sequences", "ordering length differs from observation count");
  auto order = std::make_shared<const std::vector<std::size_t>>(std::move(ordering));
  TargetSequence seq;
  seq.length = static_cast<int>(order->size());
  if (artificial) {
    seq.initial_sampler = artificial->sampler;
  } else {
    seq.initial_sampler = [model](Rng& rng) { return model->sample_prior(rng); };
  }
  seq.incremental_log_weight = [model, order](int t, const Vector& theta) {
    return model->log_lik(theta, (*order)[static_cast<std::size_t>(t - 1)]);
  };
  seq.log_density = [model, order, artificial](int t, const Vector& theta) {
    const double lp = artificial ? artificial->log_density(theta) : model->log_prior(theta);
    if (!std::isfinite(lp)) return lp;
    return lp + model->log_lik_sum(
                    theta, std::span<const std::size_t>(order->data(), static_cast<std::size_t>(t)));
  };
  if (model->has_force() && !artificial) {
    seq.force = [model, order](int t, const Vector& theta) {
      double f = model->force_prior(theta);
      if (model->likelihood_free_of_xi()) return f;
      for (int s = 0; s < t; ++s) f += model->force_lik(theta, (*order)[static_cast<std::size_t>(s)]);
      return f;
    };
  }
  return seq;
}

struct AnnealEndpoint {
  LogDensity log_density;
  std::function<double(const Vector&)> force;  // optional
};

inline std::vector<double> linear_schedule(int steps) {
  if (steps < 1) throw InvalidScheduleError("sequences", "annealing needs at least one step");
  std::vector<double> g(static_cast<std::size_t>(steps) + 1);
  for (int t = 0; t <= steps; ++t) g[static_cast<std::size_t>(t)] = static_cast<double>(t) / steps;
  return g;
}

inline void validate_schedule(std::span<const double> gammas) {
  if (gammas.size() < 2)
    throw InvalidScheduleError("sequences", "schedule needs at least two points");
  if (gammas.front() != 0.0 || gammas.back() != 1.0)
    throw InvalidScheduleError("sequences", "schedule must start at 0 and end at 1");
  for (std::size_t i = 1; i < gammas.size(); ++i)
    if (!(gammas[i] > gammas[i - 1]))
      throw InvalidScheduleError("sequences", "schedule must be strictly increasing");
}

// pi_t proportional to pi_0^(1 - gamma_t) * pi^gamma_t.
inline TargetSequence anneal_sequence(Sampler initial_sampler, AnnealEndpoint start,
                                      AnnealEndpoint target, std::vector<double> schedule) {
  validate_schedule(schedule);
  auto gam = std::make_shared<const std::vector<double>>(std::move(schedule));
  auto pi0 = std::make_shared<const AnnealEndpoint>(std::move(start));
  auto pi = std::make_shared<const AnnealEndpoint>(std::move(target));
  TargetSequence seq;
  seq.length = static_cast<int>(gam->size()) - 1;
  seq.initial_sampler = std::move(initial_sampler);
  seq.incremental_log_weight = [gam, pi0, pi](int t, const Vector& theta) {
    const double dg = (*gam)[static_cast<std::size_t>(t)] - (*gam)[static_cast<std::size_t>(t - 1)];
    const double a = pi->log_density(theta);
    const double b = pi0->log_density(theta);
    if (a == b) return 0.0;
    return dg * (a - b);
  };
  seq.log_density = [gam, pi0, pi](int t, const Vector& theta) {
    const double g = (*gam)[static_cast<std::size_t>(t)];
    const double b = pi0->log_density(theta);
    if (g == 0.0) return b;
    const double a = pi->log_density(theta);
    if (g == 1.0) return a;
    return (1.0 - g) * b + g * a;
  };
  if (pi0->force && pi->force) {
    seq.force = [gam, pi0, pi](int t, const Vector& theta) {
      const double g = (*gam)[static_cast<std::size_t>(t)];
      return (1.0 - g) * pi0->force(theta) + g * pi->force(theta);
    };
  }
  return seq;
}

// Annealing from the prior to the full posterior of `model`.
inline TargetSequence anneal_posterior(std::shared_ptr<const BayesModel> model,
                                       std::vector<double> schedule) {
  auto all = std::make_shared<const std::vector<std::size_t>>(identity_order(model->n_obs()));
  AnnealEndpoint start{[model](const Vector& th) { return model->log_prior(th); }, nullptr};
  AnnealEndpoint target{[model, all](const Vector& th) {
                          const double lp = model->log_prior(th);
                          if (!std::isfinite(lp)) return lp;
                          return lp + model->log_lik_sum(th, *all);
                        },
                        nullptr};
  if (model->has_force()) {
    start.force = [model](const Vector& th) { return model->force_prior(th); };
    target.force = [model, all](const Vector& th) {
      double f = model->force_prior(th);
      if (!model->likelihood_free_of_xi())
        for (auto i : *all) f += model->force_lik(th, i);
      return f;
    };
  }
  return anneal_sequence([model](Rng& rng) { return model->sample_prior(rng); },
                         std::move(start), std::move(target), std::move(schedule));
}

inline double prior_correction_logweight(const Vector& theta, const LogDensity& log_true_prior,
                                         const LogDensity& log_artificial_prior) {
  const double art = log_artificial_prior(theta);
  if (art == kNegInf || std::isnan(art))
    throw DominationError("sequences", "artificial prior has zero density at a particle");
  return log_true_prior(theta) - art;
}

}  // namespace fesmc
