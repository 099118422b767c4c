// fesmc: run, validate, resume and synthesize free-energy SMC experiments.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "fesmc/errors.hpp"
#include "fesmc/io/experiment.hpp"
#include "fesmc/io/synth.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSpec = 2;
constexpr int kExitRuntime = 3;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> output;
  std::optional<int> checkpoint_every;

  void apply(nlohmann::json& doc) const {
    if (seed) doc["config"]["seed"] = *seed;
    if (threads) doc["config"]["threads"] = *threads;
    if (output) doc["output"]["dir"] = *output;
    if (checkpoint_every) doc["checkpoint_every"] = *checkpoint_every;
  }
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seed", o.seed, "RNG seed");
  cmd->add_option("--threads", o.threads, "worker threads (1 = reproducible reference mode)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--output", o.output, "output directory");
  cmd->add_option("--checkpoint-every", o.checkpoint_every, "write a checkpoint every m iterations")
      ->check(CLI::NonNegativeNumber);
}

fesmc::io::ExperimentSpec read_spec(const std::string& path, const Overrides& o) {
  std::ifstream in(path);
  if (!in) throw fesmc::ParseError("spec", "cannot open spec '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw fesmc::ParseError("spec", std::string("invalid JSON: ") + e.what());
  }
  o.apply(doc);
  return fesmc::io::parse_spec(doc, std::filesystem::path(path).parent_path());
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw fesmc::ParseError("synth", "bad number '" + item + "'");
    }
    if (used != item.size()) throw fesmc::ParseError("synth", "bad number '" + item + "'");
    out.push_back(v);
  }
  return out;
}

void report(const std::string& stage, const std::exception& e) {
  if (const auto* fe = dynamic_cast<const fesmc::Error*>(&e))
    std::cerr << "fesmc " << stage << " failed [" << fe->module() << "]: " << e.what() << '\n';
  else
    std::cerr << "fesmc " << stage << " failed: " << e.what() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Free-energy sequential Monte Carlo experiments"};
  app.require_subcommand(1);

  Overrides run_over, validate_over, resume_over;
  std::string run_spec, validate_spec_path, checkpoint_path;

  auto* run = app.add_subcommand("run", "run an experiment spec");
  run->add_option("--spec", run_spec, "experiment spec (JSON)")->required();
  add_overrides(run, run_over);

  auto* validate = app.add_subcommand("validate", "check a spec without running it");
  validate->add_option("--spec", validate_spec_path, "experiment spec (JSON)")->required();
  add_overrides(validate, validate_over);

  auto* resume = app.add_subcommand("resume", "continue a run from its checkpoint");
  resume->add_option("--checkpoint", checkpoint_path, "checkpoint.json written by run")->required();
  resume->add_option("--threads", resume_over.threads, "worker threads")->check(CLI::PositiveNumber);
  resume->add_option("--output", resume_over.output, "output directory");

  fesmc::io::SynthSpec synth_spec;
  std::string synth_model = "uni", synth_out, synth_weights = "0.5,0.5", synth_means = "-3,3",
              synth_sds = "1,1";
  auto* synth = app.add_subcommand("synth", "write a synthetic Gaussian-mixture dataset");
  synth->add_option("--model", synth_model, "uni or biv")->check(CLI::IsMember({"uni", "biv"}));
  synth->add_option("--n", synth_spec.n, "number of observations");
  synth->add_option("--weights", synth_weights, "comma-separated component weights");
  synth->add_option("--means", synth_means, "comma-separated means (x,y pairs for biv)");
  synth->add_option("--sds", synth_sds, "comma-separated component standard deviations");
  synth->add_option("--seed", synth_spec.seed, "RNG seed");
  synth->add_option("--output", synth_out, "output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitSpec;
  }

  if (*validate) {
    try {
      const auto spec = read_spec(validate_spec_path, validate_over);
      fesmc::io::validate_spec(spec);
      std::cout << "spec ok\n";
      return kExitOk;
    } catch (const std::exception& e) {
      report("validate", e);
      return kExitSpec;
    }
  }

  if (*synth) {
    try {
      synth_spec.dimension = synth_model == "uni" ? 1 : 2;
      synth_spec.weights = parse_list(synth_weights);
      synth_spec.means = parse_list(synth_means);
      synth_spec.sds = parse_list(synth_sds);
      const auto values = fesmc::io::synth_mixture(synth_spec);
      fesmc::io::atomic_write(synth_out, fesmc::io::synth_csv(synth_spec, values));
      std::cout << "wrote " << values.rows() << " rows to " << synth_out << '\n';
      return kExitOk;
    } catch (const std::exception& e) {
      report("synth", e);
      return kExitSpec;
    }
  }

  fesmc::io::ExperimentSpec spec;
  std::optional<fesmc::EngineState> state;
  try {
    if (*run) {
      spec = read_spec(run_spec, run_over);
    } else {
      auto loaded = fesmc::io::load_checkpoint(checkpoint_path);
      auto doc = loaded.spec.source;
      resume_over.apply(doc);
      const auto data_path = loaded.spec.data_path;
      spec = fesmc::io::parse_spec(doc);
      spec.data_path = data_path;
      state = std::move(loaded.state);
    }
    fesmc::io::validate_spec(spec);
  } catch (const std::exception& e) {
    report(*run ? "run" : "resume", e);
    return kExitSpec;
  }

  try {
    const auto outcome = fesmc::io::run_experiment(spec, std::move(state));
    std::cout << "wrote " << outcome.artifacts.size() << " artifacts to " << spec.output_dir << " in "
              << outcome.wall_clock_seconds << " s\n";
    return kExitOk;
  } catch (const std::exception& e) {
    report(*run ? "run" : "resume", e);
    return kExitRuntime;
  }
}
