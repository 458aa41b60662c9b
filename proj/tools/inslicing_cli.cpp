#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "inslicing/error.hpp"
#include "inslicing/experiment.hpp"
#include "inslicing/symbolic.hpp"

namespace fs = std::filesystem;
using namespace inslicing;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string method;
  std::optional<int> steps;
  std::optional<std::size_t> budget_evals;
  std::optional<double> budget_secs;
  bool verbose = false;
  bool train_first = false;
  std::string model;
};

experiment::ExperimentConfig load(const Flags& f) {
  experiment::ExperimentConfig c =
      f.config.empty() ? experiment::parse_config(json::object()) : experiment::load_config(f.config);
  if (f.steps) {
    if (*f.steps < 1) throw ConfigError("--steps must be >= 1");
    c.surrogate.train.steps = *f.steps;
  }
  if (f.budget_evals) c.hybrid.budget_evals = *f.budget_evals;
  if (f.budget_secs) c.hybrid.budget_secs = *f.budget_secs;
  if (!f.method.empty()) c.methods = {harness::method_from_string(f.method)};
  if (!f.out.empty()) c.output_dir = f.out;
  c.hybrid.validate();
  return c;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

int cmd_train_kan(const Flags& f) {
  experiment::ExperimentConfig c = load(f);
  if (f.seed) c.surrogate.seed = *f.seed;
  const sim::Scenario sc = experiment::build_scenario(c);
  const harness::TrainedSurrogates ts = experiment::build_surrogates(sc, c);
  const fs::path dir = c.output_dir;
  fs::create_directories(dir / "datasets");
  experiment::save_models(ts.models, dir / "models");
  for (std::size_t i = 0; i < ts.datasets.size(); ++i)
    kan::write_dataset_csv(ts.datasets[i], dir / "datasets" / ("slice_" + std::to_string(i) + ".csv"));
  sim::save_scenario(sc, dir / "scenario.json");
  std::ofstream tr(dir / "training.csv");
  experiment::write_training_csv(tr, ts.traces);
  for (std::size_t i = 0; i < ts.traces.size(); ++i) {
    const auto& last = ts.traces[i].rows.back();
    std::cout << "slice " << i << ": train rmse " << experiment::format_number(last.train_rmse) << ", test rmse "
              << experiment::format_number(last.test_rmse) << '\n';
  }
  std::cout << "wrote " << ts.models.size() << " models to " << (dir / "models").string() << '\n';
  return 0;
}

int cmd_optimize(const Flags& f) {
  experiment::ExperimentConfig c = load(f);
  if (c.methods.size() != 1) c.methods = {harness::Method::kInSlicing};
  const harness::Method method = c.methods.front();
  const std::uint64_t seed = f.seed.value_or(c.seeds.front());
  const fs::path dir = c.output_dir;
  fs::create_directories(dir);
  const sim::Scenario sc = experiment::build_scenario(c);

  std::vector<kan::KanModel> models;
  std::size_t queries_per_slice = 0;
  if (method != harness::Method::kGbo) {
    if (f.train_first) {
      harness::TrainedSurrogates ts = experiment::build_surrogates(sc, c);
      experiment::save_models(ts.models, dir / "models");
      models = std::move(ts.models);
      queries_per_slice = ts.ground_truth_queries / sc.spec.num_slices();
    } else {
      const fs::path models_dir = c.models_dir.value_or(dir / "models");
      if (!fs::is_directory(models_dir))
        throw ConfigError("model directory not found: " + models_dir.string() + " (run train-kan or pass --train-first)");
      models = experiment::load_models(models_dir, sc.spec.num_slices());
      queries_per_slice = c.surrogate.samples;
    }
  }
  const harness::RunTrace run = experiment::run_method(sc, models, method, seed, c, queries_per_slice);
  if (run.status != "ok") throw Error(run.status);

  json sol;
  if (models.empty()) {
    sol = experiment::solution_json(run, sc, nullptr);
  } else {
    const kan::KanSurrogates surrogates(models);
    sol = experiment::solution_json(run, sc, &surrogates);
  }
  write_json(dir / "solution.json", sol);
  std::ofstream tr(dir / "trace.csv");
  experiment::write_traces_csv(tr, {run});
  std::cout << harness::to_string(method) << " seed " << seed << ": cost " << experiment::format_number(run.final_cost)
            << ", surrogate feasible " << (run.feasible ? "yes" : "no") << ", ground-truth feasible "
            << (run.truth_feasible ? "yes" : "no") << " (" << run.c1_violations << " latency violations)\n";
  return 0;
}

int cmd_experiment(const Flags& f) {
  experiment::ExperimentConfig c = load(f);
  if (f.seed) {
    const std::uint64_t n = c.seeds.size();
    c.seeds.clear();
    for (std::uint64_t k = 0; k < n; ++k) c.seeds.push_back(*f.seed + k);
  }
  const experiment::ExperimentResult res = experiment::run_experiment(c, f.verbose ? &std::cerr : nullptr);
  experiment::write_outputs(res, c.output_dir);
  std::size_t failed = 0;
  for (const auto& r : res.runs) failed += r.status != "ok";
  std::cout << "wrote results to " << c.output_dir.string() << " (" << res.runs.size() << " runs, " << failed
            << " failed)\n";
  return 0;
}

int cmd_explain(const Flags& f) {
  kan::KanModel model;
  try {
    model = kan::load_model(f.model);
  } catch (const Error& e) {
    throw ConfigError(std::string("cannot read model: ") + e.what());
  }
  symbolic::SymbolicOptions opts;
  if (f.seed) opts.seed = *f.seed;
  const symbolic::SymbolicExpression expr = symbolic::extract_symbolic(model, opts);
  std::cout << expr.to_string() << '\n';
  for (const auto& t : expr.terms) {
    switch (t.kind) {
      case symbolic::TermKind::kLinear:
        std::cout << "  linear   x" << t.input + 1 << "  a=" << experiment::format_number(t.a) << '\n';
        break;
      case symbolic::TermKind::kSine:
        std::cout << "  sine     x" << t.input + 1 << "  a=" << experiment::format_number(t.a)
                  << " b=" << experiment::format_number(t.b) << " c=" << experiment::format_number(t.c) << '\n';
        break;
      case symbolic::TermKind::kConstant:
        std::cout << "  constant     a=" << experiment::format_number(t.a) << '\n';
        break;
    }
  }
  std::cout << "symbolic-vs-network rmse " << experiment::format_number(expr.fit_rmse) << " (output range "
            << experiment::format_number(expr.output_range) << ")" << (expr.low_fidelity ? " LOW FIDELITY" : "")
            << '\n';
  return 0;
}

int cmd_gen_scenario(const Flags& f) {
  experiment::ExperimentConfig c = load(f);
  if (f.seed) c.scenario.seed = *f.seed;
  const sim::Scenario sc = experiment::build_scenario(c);
  const fs::path dir = c.output_dir;
  fs::create_directories(dir);
  sim::save_scenario(sc, dir / "scenario.json");
  std::cout << "wrote " << (dir / "scenario.json").string() << " (" << sc.spec.num_slices() << " slices, "
            << sc.spec.num_resources() << " resources)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surrogate-assisted network slice configuration"};
  app.require_subcommand(1, 1);
  Flags f;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "Seed override");
    sub->add_option("--out", f.out, "Output directory");
    sub->add_flag("--verbose", f.verbose, "Progress on stderr");
  };
  auto budget = [&](CLI::App* sub) {
    auto* evals = sub->add_option("--budget-evals", f.budget_evals, "Surrogate evaluation budget");
    auto* secs = sub->add_option("--budget-secs", f.budget_secs, "Wall-clock budget");
    evals->excludes(secs);
  };

  auto* train = app.add_subcommand("train-kan", "Sample the simulator and train one model per slice");
  common(train);
  train->add_option("--steps", f.steps, "Training steps");

  auto* optimize = app.add_subcommand("optimize", "Run one optimization and write solution.json");
  common(optimize);
  budget(optimize);
  optimize->add_option("--method", f.method, "inslicing, ga-only or gbo");
  optimize->add_option("--steps", f.steps, "Training steps for --train-first");
  optimize->add_flag("--train-first", f.train_first, "Train models before optimizing");

  auto* exp = app.add_subcommand("experiment", "Run the method comparison and write all result files");
  common(exp);
  budget(exp);
  exp->add_option("--method", f.method, "Restrict to one method");
  exp->add_option("--steps", f.steps, "Training steps");

  auto* explain = app.add_subcommand("explain", "Print the symbolic formula of a trained model");
  explain->add_option("model", f.model, "Model JSON file")->required();
  explain->add_option("--seed", f.seed, "Seed for background sampling");

  auto* gen = app.add_subcommand("gen-scenario", "Generate a scenario file");
  common(gen);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (train->parsed()) return cmd_train_kan(f);
    if (optimize->parsed()) return cmd_optimize(f);
    if (exp->parsed()) return cmd_experiment(f);
    if (explain->parsed()) return cmd_explain(f);
    if (gen->parsed()) return cmd_gen_scenario(f);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}
