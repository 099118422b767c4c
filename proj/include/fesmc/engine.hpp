#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fesmc/core.hpp"
#include "fesmc/errors.hpp"
#include "fesmc/free_energy.hpp"
#include "fesmc/kernels.hpp"
#include "fesmc/parallel.hpp"
#include "fesmc/resampling.hpp"
#include "fesmc/rng.hpp"
#include "fesmc/sequences.hpp"

namespace fesmc {

enum class Estimator { abp, abf };
enum class DebiasMode { direct, progressive };

inline std::string_view to_string(Estimator e) { return e == Estimator::abp ? "abp" : "abf"; }
inline std::string_view to_string(DebiasMode d) {
  return d == DebiasMode::direct ? "direct" : "progressive";
}

struct RunConfig {
  std::size_t n_particles = 1000;
  double ef_threshold = 0.8;
  int sweeps = 10;
  double initial_scale = 0.3;
  ScaleAdaptation adaptation{};
  ResamplingScheme resampling = ResamplingScheme::systematic;
  Estimator estimator = Estimator::abp;
  DebiasMode debias = DebiasMode::direct;
  int progressive_steps = 5;
  // Free-energy update period in iterations; 1 updates at every t.
  int fe_update_every = 1;
  std::uint64_t seed = 1;
  int threads = 1;

  void validate() const {
    if (n_particles < 2) throw InvalidConfigError("engine", "need at least 2 particles");
    if (!(ef_threshold > 0.0 && ef_threshold < 1.0))
      throw InvalidConfigError("engine", "ef_threshold must lie in (0, 1)");
    if (sweeps < 1) throw InvalidConfigError("engine", "sweeps must be >= 1");
    if (!(initial_scale > 0.0)) throw InvalidConfigError("engine", "initial_scale must be > 0");
    if (debias == DebiasMode::progressive && progressive_steps < 1)
      throw InvalidConfigError("engine", "progressive debias needs at least one step");
    if (fe_update_every < 1) throw InvalidConfigError("engine", "fe_update_every must be >= 1");
    if (threads < 1) throw InvalidConfigError("engine", "threads must be >= 1");
  }
};

struct IterationRecord {
  int t = 0;
  double ef = 1.0;
  bool resampled = false;
  double acceptance = std::numeric_limits<double>::quiet_NaN();
  double scale = 0.0;
};

struct FreeEnergyCheckpoint {
  int t = 0;
  FreeEnergyEstimate estimate;
};

struct RunDiagnostics {
  std::vector<IterationRecord> iterations;
  // Progressive-debias steps, numbered T+1 .. T+L.
  std::vector<IterationRecord> debias_steps;
  std::vector<FreeEnergyCheckpoint> free_energy;
  double wall_clock_seconds = 0.0;

  std::size_t resample_count() const {
    std::size_t c = 0;
    for (const auto& r : iterations) c += r.resampled ? 1 : 0;
    return c;
  }
};

// Raised when every weight vanishes; carries what was recorded so far.
class RunAbortedError : public DegenerateSystemError {
 public:
  RunAbortedError(const std::string& what, RunDiagnostics diag)
      : DegenerateSystemError("engine", what), diagnostics(std::move(diag)) {}
  RunDiagnostics diagnostics;
};

// Complete loop state after iteration t; enough to resume bit-identically.
struct EngineState {
  ParticleSystem system;
  std::optional<FreeEnergyEstimate> estimate;
  double scale = 0.3;
  RunDiagnostics diagnostics;
};

// Called after every completed iteration (t >= 0).
using IterationObserver = std::function<void(const EngineState&)>;

struct SmcResult {
  ParticleSystem system;
  RunDiagnostics diagnostics;
};

struct FeSmcResult {
  ParticleSystem biased;
  ParticleSystem debiased;
  FreeEnergyEstimate estimate;
  RunDiagnostics diagnostics;
};

// log pi_t(theta) + A_t(xi(theta)): the density the move kernel preserves.
inline double mcmc_invariant_logdensity(const TargetSequence& seq, int t, const Vector& theta,
                                        const FreeEnergyEstimate& estimate,
                                        const ReactionCoordinate& rc) {
  const double lp = seq.log_density(t, theta);
  if (!std::isfinite(lp)) return lp;
  return lp + estimate.at(rc.xi(theta));
}

namespace detail {

class SmcLoop {
 public:
  SmcLoop(const TargetSequence& seq, const RunConfig& config, const ReactionCoordinate* rc)
      : seq_(seq), config_(config), rc_(rc) {
    config_.validate();
    if (!seq_.initial_sampler || !seq_.incremental_log_weight || !seq_.log_density)
      throw InvalidConfigError("engine", "incomplete target sequence");
    if (seq_.length < 0) throw InvalidConfigError("engine", "negative sequence length");
    if (rc_) {
      rc_->grid.validate();
      if (!rc_->xi) throw InvalidConfigError("engine", "reaction coordinate has no xi");
      if (config_.estimator == Estimator::abf && !seq_.force)
        throw InvalidConfigError("engine", "ABF requires a force evaluator");
    }
  }

  EngineState initialize() {
    EngineState st;
    st.scale = config_.initial_scale;
    const std::size_t n = config_.n_particles;
    st.system.t = 0;
    st.system.particles.resize(n);
    st.system.log_weights.assign(n, 0.0);
    parallel_for(n, config_.threads, [&](std::size_t i) {
      Rng rng = make_stream(config_.seed, Stream::init, 0, i);
      st.system.particles[i] = seq_.initial_sampler(rng);
    });
    if (rc_) {
      // The initial sample targets pi_0; weighting by A_0 moves it to the
      // biased pi_0 the recursion assumes.
      const auto xi = xi_values(st.system);
      auto a0 = abp_increment(st.system, xi, rc_->grid);
      apply_bias(st.system, a0, xi);
      st.estimate = std::move(a0);
      st.diagnostics.free_energy.push_back({0, *st.estimate});
    }
    return st;
  }

  void step(EngineState& st) {
    const int t = st.system.t + 1;
    st.system.t = t;
    const std::size_t n = st.system.size();
    std::vector<double> inc(n);
    parallel_for(n, config_.threads, [&](std::size_t i) {
      inc[i] = seq_.incremental_log_weight(t, st.system.particles[i]);
    });
    for (std::size_t i = 0; i < n; ++i) {
      if (std::isnan(inc[i])) throw ModelEvaluationError("engine", "incremental weight is NaN");
      st.system.log_weights[i] += inc[i];
    }
    guard_degenerate(st);

    if (rc_ && (t % config_.fe_update_every == 0 || t == seq_.length)) {
      const auto xi = xi_values(st.system);
      FreeEnergyEstimate inc_fe = config_.estimator == Estimator::abp
                                      ? abp_increment(st.system, xi, rc_->grid)
                                      : abf_difference(st, xi, t);
      apply_bias(st.system, inc_fe, xi);
      st.estimate = accumulate(*st.estimate, inc_fe);
      guard_degenerate(st);
    }

    IterationRecord rec;
    rec.t = t;
    rec.ef = effective_sample_fraction(st.system.log_weights);
    if (rec.ef < config_.ef_threshold) {
      rec.resampled = true;
      rec.acceptance = resample_move(st, [&](const Vector& th) {
        return rc_ ? mcmc_invariant_logdensity(seq_, t, th, *st.estimate, *rc_)
                   : seq_.log_density(t, th);
      });
    }
    rec.scale = st.scale;
    st.diagnostics.iterations.push_back(rec);
  }

  void record_checkpoint(EngineState& st, int every) {
    if (!rc_ || every <= 0) return;
    if (st.system.t % every == 0 || st.system.t == seq_.length)
      st.diagnostics.free_energy.push_back({st.system.t, *st.estimate});
  }

  // Direct or progressive removal of the bias from the state at t = T.
  ParticleSystem debias(EngineState& st) {
    const auto& estimate = *st.estimate;
    if (config_.debias == DebiasMode::direct)
      return debias_final(st.system, estimate, xi_values(st.system));

    EngineState work = st;
    const int L = config_.progressive_steps;
    const int T = seq_.length;
    const auto targets = progressive_debias_targets(estimate, L);
    for (int l = 1; l <= L; ++l) {
      const int t = T + l;
      work.system.t = t;
      const auto xi = xi_values(work.system);
      const auto& cur = targets[static_cast<std::size_t>(l)];
      const auto& prev = targets[static_cast<std::size_t>(l - 1)];
      for (std::size_t i = 0; i < work.system.size(); ++i) {
        const auto b = static_cast<std::size_t>(bin_index(estimate.grid, xi[i]));
        work.system.log_weights[i] += cur[b] - prev[b];
      }
      guard_degenerate(work);
      IterationRecord rec;
      rec.t = t;
      rec.ef = effective_sample_fraction(work.system.log_weights);
      if (l < L && rec.ef < config_.ef_threshold) {
        rec.resampled = true;
        rec.acceptance = resample_move(work, [&](const Vector& th) {
          const double lp = seq_.log_density(T, th);
          if (!std::isfinite(lp)) return lp;
          const auto b = static_cast<std::size_t>(bin_index(estimate.grid, rc_->xi(th)));
          return lp + estimate.values[b] + cur[b];
        });
      }
      rec.scale = work.scale;
      st.diagnostics.debias_steps.push_back(rec);
    }
    return std::move(work.system);
  }

  int length() const { return seq_.length; }

 private:
  std::vector<double> xi_values(const ParticleSystem& system) const {
    std::vector<double> xi(system.size());
    parallel_for(system.size(), config_.threads,
                 [&](std::size_t i) { xi[i] = rc_->xi(system.particles[i]); });
    return xi;
  }

  // The reweighted system targets pi_t exp(A_{t-1}); conditionally on xi it
  // matches pi_t, so mean forces of pi_t give A_t and D_t = A_t - A_{t-1}.
  FreeEnergyEstimate abf_difference(const EngineState& st, std::span<const double> xi, int t) {
    std::vector<double> force(st.system.size());
    parallel_for(st.system.size(), config_.threads,
                 [&](std::size_t i) { force[i] = seq_.force(t, st.system.particles[i]); });
    const auto a_t = abf_increment(st.system, xi, force, rc_->grid);
    return difference(a_t, *st.estimate);
  }

  template <typename LogTarget>
  double resample_move(EngineState& st, LogTarget&& log_target) {
    const int t = st.system.t;
    const auto w = normalize_weights(st.system.log_weights);
    Rng rng = make_stream(config_.seed, Stream::resample, static_cast<std::uint64_t>(t));
    const auto ancestors = resample(config_.resampling, w, rng);
    std::vector<Vector> next;
    next.reserve(ancestors.size());
    for (auto a : ancestors) next.push_back(st.system.particles[a]);
    st.system.particles = std::move(next);
    st.system.log_weights.assign(st.system.size(), 0.0);

    KernelState kernel;
    kernel.scale = st.scale;
    kernel.sweeps = config_.sweeps;
    kernel.adaptation = config_.adaptation;
    kernel.set_covariance(weighted_moments(st.system).covariance);
    const LogDensity target = std::forward<LogTarget>(log_target);
    const auto sweep = run_sweeps(st.system, target, kernel, config_.seed, config_.threads);
    const double rate = sweep.acceptance_rate();
    st.scale = adapt_scale(st.scale, rate, config_.adaptation);
    return rate;
  }

  void guard_degenerate(const EngineState& st) const {
    for (double lw : st.system.log_weights)
      if (lw > kNegInf) return;
    throw RunAbortedError("all particle weights vanished at t=" + std::to_string(st.system.t),
                          st.diagnostics);
  }

  const TargetSequence& seq_;
  RunConfig config_;
  const ReactionCoordinate* rc_;
};

template <typename Clock = std::chrono::steady_clock>
double seconds_since(typename Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace detail

struct RunHooks {
  IterationObserver observer;
  std::optional<EngineState> resume_from;
  int free_energy_checkpoint_every = 0;
};

// Generic resample-move SMC over pi_0 .. pi_T.
inline SmcResult run_smc(const TargetSequence& seq, const RunConfig& config,
                         const RunHooks& hooks = {}) {
  const auto start = std::chrono::steady_clock::now();
  detail::SmcLoop loop(seq, config, nullptr);
  EngineState st = hooks.resume_from ? *hooks.resume_from : loop.initialize();
  if (!hooks.resume_from && hooks.observer) hooks.observer(st);
  while (st.system.t < loop.length()) {
    loop.step(st);
    if (hooks.observer) hooks.observer(st);
  }
  st.diagnostics.wall_clock_seconds = detail::seconds_since(start);
  return {std::move(st.system), std::move(st.diagnostics)};
}

// Free-energy biased SMC: the particles track pi_t exp(A_t(xi)) and are
// debiased at T.
inline FeSmcResult run_fe_smc(const TargetSequence& seq, const ReactionCoordinate& rc,
                              const RunConfig& config, const RunHooks& hooks = {}) {
  const auto start = std::chrono::steady_clock::now();
  detail::SmcLoop loop(seq, config, &rc);
  EngineState st = hooks.resume_from ? *hooks.resume_from : loop.initialize();
  if (!st.estimate) throw InvalidConfigError("engine", "resume state lacks a free-energy estimate");
  if (!hooks.resume_from && hooks.observer) hooks.observer(st);
  while (st.system.t < loop.length()) {
    loop.step(st);
    loop.record_checkpoint(st, hooks.free_energy_checkpoint_every);
    if (hooks.observer) hooks.observer(st);
  }
  if (st.diagnostics.free_energy.empty() || st.diagnostics.free_energy.back().t != st.system.t)
    st.diagnostics.free_energy.push_back({st.system.t, *st.estimate});
  FeSmcResult out;
  out.debiased = loop.debias(st);
  out.biased = std::move(st.system);
  out.estimate = std::move(*st.estimate);
  st.diagnostics.wall_clock_seconds = detail::seconds_since(start);
  out.diagnostics = std::move(st.diagnostics);
  return out;
}

}  // namespace fesmc
