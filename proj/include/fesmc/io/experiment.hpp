#pragma once

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fesmc/engine.hpp"
#include "fesmc/errors.hpp"
#include "fesmc/io/dataset.hpp"
#include "fesmc/io/export.hpp"
#include "fesmc/mixtures.hpp"
#include "fesmc/sequences.hpp"
#include "fesmc/toy.hpp"

namespace fesmc::io {

using json = nlohmann::json;

enum class ModelKind { uni_mixture, biv_mixture, toy_1d };
enum class ScheduleKind { ibis, anneal };
enum class Ordering { van_der_corput, random, as_given };
enum class Method { fe_smc, smc };

struct HexbinRequest {
  std::string x;
  std::string y;
  int resolution = 30;
};

struct ExperimentSpec {
  ModelKind model = ModelKind::uni_mixture;
  std::size_t K = 2;
  std::string data_path;
  std::vector<std::string> columns;
  ScheduleKind schedule = ScheduleKind::ibis;
  Ordering ordering = Ordering::van_der_corput;
  int anneal_steps = 20;
  std::vector<double> gammas;
  Method method = Method::fe_smc;
  RunConfig config;
  int n_bins = 50;
  std::optional<double> x_min;
  std::optional<double> x_max;
  ToyBimodal toy;
  std::string output_dir = "out";
  int histogram_bins = 50;
  std::vector<HexbinRequest> hexbins;
  bool permute_labels = false;
  int checkpoint_every = 0;
  json source;  // the document this spec was read from, overrides applied
};

namespace detail {

template <typename E>
E parse_enum(const json& j, const char* key, std::initializer_list<std::pair<const char*, E>> options,
             E fallback) {
  if (!j.contains(key)) return fallback;
  const auto s = j.at(key).get<std::string>();
  for (const auto& [name, value] : options)
    if (s == name) return value;
  throw ParseError("spec", std::string("unknown value '") + s + "' for '" + key + "'");
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || k == a;
    if (!ok) throw ParseError("spec", std::string("unknown key '") + k + "' in " + where);
  }
}

}  // namespace detail

// Parses and checks everything that does not need the dataset. Relative data
// paths resolve against `base_dir`.
inline ExperimentSpec parse_spec(const json& doc, const std::filesystem::path& base_dir = {}) {
  ExperimentSpec s;
  s.source = doc;
  try {
    detail::reject_unknown(doc, {"model", "data", "schedule", "method", "config", "grid", "output",
                                 "checkpoint_every", "toy"},
                           "spec");
    const json& model = doc.at("model");
    s.model = detail::parse_enum<ModelKind>(model, "type",
                                            {{"uni_mixture", ModelKind::uni_mixture},
                                             {"biv_mixture", ModelKind::biv_mixture},
                                             {"toy_1d", ModelKind::toy_1d}},
                                            ModelKind::uni_mixture);
    if (model.contains("K")) {
      const auto k = model.at("K").get<long long>();
      if (k < 1) throw ParseError("spec", "K must be >= 1");
      s.K = static_cast<std::size_t>(k);
    }
    if (s.model != ModelKind::toy_1d) {
      const json& data = doc.at("data");
      std::filesystem::path p = data.at("path").get<std::string>();
      if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
      s.data_path = p.string();
      if (data.contains("columns")) s.columns = data.at("columns").get<std::vector<std::string>>();
    }
    if (doc.contains("toy")) {
      const json& t = doc.at("toy");
      s.toy.start_sd = t.value("start_sd", s.toy.start_sd);
      s.toy.weight_left = t.value("weight_left", s.toy.weight_left);
      s.toy.mean_left = t.value("mean_left", s.toy.mean_left);
      s.toy.mean_right = t.value("mean_right", s.toy.mean_right);
      s.toy.sd = t.value("sd", s.toy.sd);
      s.toy.x_min = t.value("x_min", s.toy.x_min);
      s.toy.x_max = t.value("x_max", s.toy.x_max);
    }

    const json sched = doc.value("schedule", json::object());
    s.schedule = detail::parse_enum<ScheduleKind>(
        sched, "type", {{"ibis", ScheduleKind::ibis}, {"anneal", ScheduleKind::anneal}},
        s.model == ModelKind::toy_1d ? ScheduleKind::anneal : ScheduleKind::ibis);
    s.ordering = detail::parse_enum<Ordering>(sched, "ordering",
                                              {{"van_der_corput", Ordering::van_der_corput},
                                               {"random", Ordering::random},
                                               {"as_given", Ordering::as_given}},
                                              s.model == ModelKind::biv_mixture ? Ordering::random
                                                                                : Ordering::van_der_corput);
    s.anneal_steps = sched.value("steps", s.anneal_steps);
    if (sched.contains("gammas")) s.gammas = sched.at("gammas").get<std::vector<double>>();

    s.method = detail::parse_enum<Method>(doc, "method", {{"fe_smc", Method::fe_smc}, {"smc", Method::smc}},
                                          Method::fe_smc);

    const json cfg = doc.value("config", json::object());
    detail::reject_unknown(cfg, {"n_particles", "ef_threshold", "sweeps", "initial_scale", "resampling",
                                 "estimator", "debias", "progressive_steps", "fe_update_every", "seed",
                                 "threads"},
                           "config");
    auto& c = s.config;
    c.n_particles = cfg.value("n_particles", c.n_particles);
    c.ef_threshold = cfg.value("ef_threshold", c.ef_threshold);
    c.sweeps = cfg.value("sweeps", c.sweeps);
    c.initial_scale = cfg.value("initial_scale", c.initial_scale);
    c.resampling = detail::parse_enum<ResamplingScheme>(cfg, "resampling",
                                                        {{"systematic", ResamplingScheme::systematic},
                                                         {"multinomial", ResamplingScheme::multinomial},
                                                         {"residual", ResamplingScheme::residual}},
                                                        c.resampling);
    c.estimator = detail::parse_enum<Estimator>(cfg, "estimator",
                                                {{"abp", Estimator::abp}, {"abf", Estimator::abf}}, c.estimator);
    c.debias = detail::parse_enum<DebiasMode>(
        cfg, "debias", {{"direct", DebiasMode::direct}, {"progressive", DebiasMode::progressive}}, c.debias);
    c.progressive_steps = cfg.value("progressive_steps", c.progressive_steps);
    c.fe_update_every = cfg.value("fe_update_every", c.fe_update_every);
    c.seed = cfg.value("seed", c.seed);
    c.threads = cfg.value("threads", c.threads);

    const json grid = doc.value("grid", json::object());
    s.n_bins = grid.value("n_bins", s.n_bins);
    if (grid.contains("x_min")) s.x_min = grid.at("x_min").get<double>();
    if (grid.contains("x_max")) s.x_max = grid.at("x_max").get<double>();

    const json out = doc.value("output", json::object());
    s.output_dir = out.value("dir", s.output_dir);
    s.histogram_bins = out.value("histogram_bins", s.histogram_bins);
    s.permute_labels = out.value("permute_labels", s.permute_labels);
    if (out.contains("hexbin"))
      for (const auto& h : out.at("hexbin"))
        s.hexbins.push_back({h.at("x").get<std::string>(), h.at("y").get<std::string>(), h.value("resolution", 30)});
    s.checkpoint_every = doc.value("checkpoint_every", 0);
  } catch (const json::exception& e) {
    throw ParseError("spec", e.what());
  }

  try {
    s.config.validate();
  } catch (const Error& e) {
    throw ParseError("spec", e.what());
  }
  if (s.n_bins < 1) throw ParseError("spec", "grid.n_bins must be >= 1");
  if (s.histogram_bins < 1) throw ParseError("spec", "output.histogram_bins must be >= 1");
  if (s.checkpoint_every < 0) throw ParseError("spec", "checkpoint_every must be >= 0");
  if (s.model == ModelKind::toy_1d && s.schedule != ScheduleKind::anneal)
    throw ParseError("spec", "toy_1d only supports the anneal schedule");
  if (s.model == ModelKind::biv_mixture && s.schedule == ScheduleKind::ibis &&
      s.ordering == Ordering::van_der_corput)
    throw ParseError("spec", "Van der Corput ordering needs scalar observations");
  if (s.schedule == ScheduleKind::anneal) {
    if (s.gammas.empty() && s.anneal_steps < 1) throw ParseError("spec", "schedule.steps must be >= 1");
    if (!s.gammas.empty()) {
      try {
        validate_schedule(s.gammas);
      } catch (const Error& e) {
        throw ParseError("spec", e.what());
      }
    }
  }
  if (s.model == ModelKind::toy_1d && !(s.toy.weight_left > 0 && s.toy.weight_left < 1 && s.toy.sd > 0 &&
                                        s.toy.start_sd > 0 && s.toy.x_min < s.toy.x_max))
    throw ParseError("spec", "invalid toy parameters");
  if (s.x_min && s.x_max && !(*s.x_min < *s.x_max)) throw ParseError("spec", "grid needs x_min < x_max");
  return s;
}

inline ExperimentSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("spec", "cannot open spec '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ParseError("spec", std::string("invalid JSON: ") + e.what());
  }
  return parse_spec(doc, std::filesystem::path(path).parent_path());
}

// Everything needed to drive the engine for one spec.
struct Problem {
  std::shared_ptr<const MixtureModel> mixture;
  TargetSequence sequence;
  ReactionCoordinate coordinate;
  std::vector<std::string> names;
  CoordinateMap to_natural;
  std::vector<std::string> provenance;
  std::size_t n_obs = 0;
};

inline Problem build_problem(const ExperimentSpec& s) {
  Problem p;
  if (s.model == ModelKind::toy_1d) {
    p.sequence = s.toy.sequence(s.gammas.empty() ? linear_schedule(s.anneal_steps) : s.gammas);
    p.coordinate = s.toy.reaction_coordinate(s.n_bins);
    p.names = {"theta"};
  } else {
    Dataset ds = load_dataset(s.data_path, s.columns);
    p.provenance = ds.comments;
    p.n_obs = ds.rows();
    std::shared_ptr<const MixtureModel> model;
    if (s.model == ModelKind::uni_mixture) {
      if (ds.values.cols() != 1) throw ParseError("spec", "uni_mixture needs exactly one data column");
      model = std::make_shared<UniGaussianMixture>(ds.column(0), s.K);
    } else {
      if (ds.values.cols() != 2) throw ParseError("spec", "biv_mixture needs exactly two data columns");
      std::vector<Eigen::Vector2d> pts(ds.rows());
      for (std::size_t i = 0; i < ds.rows(); ++i)
        pts[i] = ds.values.row(static_cast<Eigen::Index>(i)).transpose();
      model = std::make_shared<BiGaussianMixture>(std::move(pts), s.K);
    }
    p.mixture = model;
    if (s.schedule == ScheduleKind::ibis) {
      std::vector<std::size_t> order;
      if (s.ordering == Ordering::van_der_corput) {
        order = van_der_corput_order(ds.column(0));
      } else if (s.ordering == Ordering::random) {
        Rng rng = make_stream(s.config.seed, Stream::misc, 0);
        order = random_order(ds.rows(), rng);
      } else {
        order = identity_order(ds.rows());
      }
      p.sequence = ibis_sequence(model, std::move(order));
    } else {
      p.sequence = anneal_posterior(model, s.gammas.empty() ? linear_schedule(s.anneal_steps) : s.gammas);
    }
    p.coordinate = model->reaction_coordinate(s.n_bins);
    p.names = model->coordinate_names();
    p.to_natural = [model](const Vector& th) { return model->to_natural(th); };
  }
  if (s.x_min || s.x_max) {
    const double lo = s.x_min.value_or(p.coordinate.grid.x_min);
    const double hi = s.x_max.value_or(p.coordinate.grid.x_max);
    if (!(lo < hi)) throw ParseError("spec", "grid override needs x_min < x_max");
    p.coordinate.grid = ReactionGrid(lo, hi, s.n_bins);
  }
  for (const auto& h : s.hexbins)
    for (const auto& name : {h.x, h.y}) {
      std::string base = name;
      if (base.rfind("log(", 0) == 0 && base.back() == ')') base = base.substr(4, base.size() - 5);
      if (std::find(p.names.begin(), p.names.end(), base) == p.names.end())
        throw ParseError("spec", "hexbin coordinate '" + name + "' does not exist");
    }
  return p;
}

// Checks a spec end to end without running the sampler: parses, loads the
// data, builds the model and makes sure the output directory is writable.
inline Problem validate_spec(const ExperimentSpec& s) {
  Problem p;
  try {
    p = build_problem(s);
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError("spec", e.what());
  }
  std::error_code ec;
  std::filesystem::create_directories(s.output_dir, ec);
  const auto probe = std::filesystem::path(s.output_dir) / ".write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw ParseError("spec", "output directory '" + s.output_dir + "' is not writable");
  }
  std::filesystem::remove(probe, ec);
  return p;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace detail {

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
inline double from_nullable(const json& j, double fallback) {
  return j.is_null() ? fallback : j.get<double>();
}

inline json records_to_json(const std::vector<IterationRecord>& recs) {
  json arr = json::array();
  for (const auto& r : recs)
    arr.push_back({r.t, number_or_null(r.ef), r.resampled, number_or_null(r.acceptance), r.scale});
  return arr;
}

inline std::vector<IterationRecord> records_from_json(const json& arr) {
  std::vector<IterationRecord> out;
  for (const auto& r : arr)
    out.push_back({r[0].get<int>(), from_nullable(r[1], std::numeric_limits<double>::quiet_NaN()),
                   r[2].get<bool>(), from_nullable(r[3], std::numeric_limits<double>::quiet_NaN()),
                   r[4].get<double>()});
  return out;
}

}  // namespace detail

inline json checkpoint_to_json(const ExperimentSpec& spec, const EngineState& st) {
  json j;
  j["format"] = "fesmc-checkpoint-1";
  j["spec"] = spec.source;
  j["data_path"] = spec.data_path;
  j["t"] = st.system.t;
  j["scale"] = st.scale;
  json particles = json::array();
  for (const auto& p : st.system.particles) particles.push_back(std::vector<double>(p.data(), p.data() + p.size()));
  j["particles"] = std::move(particles);
  json lw = json::array();
  for (double w : st.system.log_weights) lw.push_back(detail::number_or_null(w));
  j["log_weights"] = std::move(lw);
  j["estimate"] = st.estimate ? json(st.estimate->values) : json(nullptr);
  j["iterations"] = detail::records_to_json(st.diagnostics.iterations);
  json fe = json::array();
  for (const auto& c : st.diagnostics.free_energy) fe.push_back({{"t", c.t}, {"values", c.estimate.values}});
  j["free_energy"] = std::move(fe);
  return j;
}

struct LoadedCheckpoint {
  ExperimentSpec spec;
  EngineState state;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("io", "cannot open checkpoint '" + path + "'");
  try {
    json j;
    in >> j;
    if (j.value("format", "") != "fesmc-checkpoint-1") throw ParseError("io", "not a checkpoint file");
    LoadedCheckpoint out;
    out.spec = parse_spec(j.at("spec"));
    out.spec.data_path = j.at("data_path").get<std::string>();
    const Problem problem = build_problem(out.spec);
    auto& st = out.state;
    st.system.t = j.at("t").get<int>();
    st.scale = j.at("scale").get<double>();
    for (const auto& p : j.at("particles")) {
      const auto v = p.get<std::vector<double>>();
      st.system.particles.push_back(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    for (const auto& w : j.at("log_weights")) st.system.log_weights.push_back(detail::from_nullable(w, kNegInf));
    if (!j.at("estimate").is_null())
      st.estimate = FreeEnergyEstimate{problem.coordinate.grid, j.at("estimate").get<std::vector<double>>()};
    st.diagnostics.iterations = detail::records_from_json(j.at("iterations"));
    for (const auto& c : j.at("free_energy"))
      st.diagnostics.free_energy.push_back(
          {c.at("t").get<int>(), {problem.coordinate.grid, c.at("values").get<std::vector<double>>()}});
    if (st.system.particles.size() != out.spec.config.n_particles ||
        st.system.log_weights.size() != st.system.particles.size())
      throw ParseError("io", "checkpoint particle count does not match its spec");
    return out;
  } catch (const json::exception& e) {
    throw ParseError("io", std::string("malformed checkpoint: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Experiment execution

struct ExperimentOutcome {
  std::vector<std::string> artifacts;
  double wall_clock_seconds = 0.0;
  double symmetry_debiased = 0.0;
};

namespace detail {

inline std::string pad_t(int t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d", t);
  return buf;
}

inline std::vector<double> coordinate_values(const ParticleSystem& system, const Problem& p,
                                             const std::string& name) {
  bool take_log = false;
  std::string base = name;
  if (base.rfind("log(", 0) == 0 && base.back() == ')') {
    base = base.substr(4, base.size() - 5);
    take_log = true;
  }
  const auto it = std::find(p.names.begin(), p.names.end(), base);
  const auto j = static_cast<Eigen::Index>(it - p.names.begin());
  std::vector<double> out(system.size());
  for (std::size_t i = 0; i < system.size(); ++i) {
    const Vector v = p.to_natural ? p.to_natural(system.particles[i]) : system.particles[i];
    out[i] = take_log ? std::log(v[j]) : v[j];
  }
  return out;
}

}  // namespace detail

inline ExperimentOutcome run_experiment(const ExperimentSpec& spec,
                                        std::optional<EngineState> resume = std::nullopt) {
  const Problem problem = validate_spec(spec);
  const std::filesystem::path out_dir(spec.output_dir);
  ExperimentOutcome outcome;
  auto write = [&](const std::string& name, const std::string& content) {
    atomic_write(out_dir / name, content);
    outcome.artifacts.push_back(name);
  };

  RunHooks hooks;
  hooks.resume_from = std::move(resume);
  if (spec.checkpoint_every > 0) {
    hooks.observer = [&](const EngineState& st) {
      if (st.system.t == 0 || st.system.t % spec.checkpoint_every != 0) return;
      atomic_write(out_dir / "checkpoint.json", checkpoint_to_json(spec, st).dump());
      if (st.estimate)
        atomic_write(out_dir / ("free_energy_t" + detail::pad_t(st.system.t) + ".csv"),
                     free_energy_csv(*st.estimate));
    };
    hooks.free_energy_checkpoint_every = spec.checkpoint_every;
  }

  ParticleSystem biased, debiased;
  std::optional<FreeEnergyEstimate> estimate;
  RunDiagnostics diag;
  if (spec.method == Method::fe_smc) {
    auto res = run_fe_smc(problem.sequence, problem.coordinate, spec.config, hooks);
    biased = std::move(res.biased);
    debiased = std::move(res.debiased);
    estimate = std::move(res.estimate);
    diag = std::move(res.diagnostics);
  } else {
    if (hooks.resume_from) hooks.resume_from->estimate.reset();
    auto res = run_smc(problem.sequence, spec.config, hooks);
    biased = res.system;
    debiased = std::move(res.system);
    diag = std::move(res.diagnostics);
  }

  write("particles_biased.csv", particles_csv(biased, problem.names, problem.to_natural));
  write("particles_debiased.csv", particles_csv(debiased, problem.names, problem.to_natural));
  if (estimate) write("free_energy.csv", free_energy_csv(*estimate));
  write("ef_trace.csv", ef_trace_csv(diag));
  write("histograms_biased.csv",
        histograms_csv(export_histograms(biased, problem.names, problem.to_natural, spec.histogram_bins)));
  write("histograms_debiased.csv",
        histograms_csv(export_histograms(debiased, problem.names, problem.to_natural, spec.histogram_bins)));
  for (std::size_t i = 0; i < spec.hexbins.size(); ++i) {
    const auto& h = spec.hexbins[i];
    const auto w = normalize_weights(debiased.log_weights);
    const auto xs = detail::coordinate_values(debiased, problem, h.x);
    const auto ys = detail::coordinate_values(debiased, problem, h.y);
    write("hexbin_" + std::to_string(i + 1) + ".csv", hexbin_csv(export_hexbin(xs, ys, w, h.resolution)));
  }

  Summary sum;
  const char* model_names[] = {"uni_mixture", "biv_mixture", "toy_1d"};
  sum.set("model", model_names[static_cast<int>(spec.model)]);
  if (problem.mixture) sum.set("K", static_cast<long long>(spec.K));
  sum.set("method", spec.method == Method::fe_smc ? "fe_smc" : "smc");
  sum.set("schedule", spec.schedule == ScheduleKind::ibis ? "ibis" : "anneal");
  if (spec.schedule == ScheduleKind::ibis) {
    const char* orders[] = {"van_der_corput", "random", "as_given"};
    sum.set("ordering", orders[static_cast<int>(spec.ordering)]);
  }
  sum.set("n_obs", static_cast<long long>(problem.n_obs));
  sum.set("T", static_cast<long long>(problem.sequence.length));
  sum.set("n_particles", static_cast<long long>(spec.config.n_particles));
  sum.set("seed", std::to_string(spec.config.seed));
  sum.set("ef_threshold", spec.config.ef_threshold);
  sum.set("sweeps", static_cast<long long>(spec.config.sweeps));
  sum.set("resampling", std::string(to_string(spec.config.resampling)));
  if (spec.method == Method::fe_smc) {
    sum.set("estimator", std::string(to_string(spec.config.estimator)));
    sum.set("debias", std::string(to_string(spec.config.debias)));
    sum.set("n_bins", static_cast<long long>(problem.coordinate.grid.n_bins));
    sum.set("x_min", problem.coordinate.grid.x_min);
    sum.set("x_max", problem.coordinate.grid.x_max);
    sum.set("free_energy_range", estimate->range());
  }
  sum.set("resample_events", static_cast<long long>(diag.resample_count()));
  sum.set("final_ef_biased", effective_sample_fraction(biased.log_weights));
  sum.set("final_ef_debiased", effective_sample_fraction(debiased.log_weights));
  if (!diag.iterations.empty()) sum.set("final_scale", diag.iterations.back().scale);
  if (problem.mixture) {
    sum.set("label_symmetry_metric_biased", label_symmetry_metric(biased, *problem.mixture));
    outcome.symmetry_debiased = label_symmetry_metric(debiased, *problem.mixture);
    sum.set("label_symmetry_metric_debiased", outcome.symmetry_debiased);
    if (spec.permute_labels) {
      const auto permuted = random_permutation_postprocess(debiased, *problem.mixture, spec.config.seed);
      sum.set("label_symmetry_metric_permuted", label_symmetry_metric(permuted, *problem.mixture));
      write("particles_debiased_permuted.csv", particles_csv(permuted, problem.names, problem.to_natural));
    }
  } else {
    sum.set("posterior_mean_debiased", weighted_mean(debiased, [](const Vector& v) { return v[0]; }));
  }
  for (std::size_t i = 0; i < problem.provenance.size(); ++i)
    sum.set("data_provenance_" + std::to_string(i + 1), problem.provenance[i]);
  write("summary.txt", sum.str());

  outcome.wall_clock_seconds = diag.wall_clock_seconds;
  // Timing lives outside the reproducible artifacts.
  atomic_write(out_dir / "timing.txt", "wall_clock_seconds=" + fmt_double(diag.wall_clock_seconds) + "\n");
  return outcome;
}

}  // namespace fesmc::io
