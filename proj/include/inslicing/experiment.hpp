#pragma once

// Experiment configuration (one JSON document shared by all CLI subcommands)
// and the CSV / JSON result files.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "inslicing/harness.hpp"

namespace inslicing::experiment {

struct ScenarioSource {
  enum class Kind { kGenerate, kFile, kToy };
  Kind kind = Kind::kGenerate;
  std::size_t slices = 9;
  std::size_t resources = 6;
  std::uint64_t seed = 0;
  sim::ScenarioOptions options;
  std::filesystem::path file;
};

struct ExperimentConfig {
  ScenarioSource scenario;
  harness::SurrogateConfig surrogate;
  std::optional<std::filesystem::path> models_dir;   // load models instead of training
  std::optional<std::filesystem::path> dataset_dir;  // slice_<i>.csv instead of sampling
  std::vector<harness::Method> methods = {harness::Method::kInSlicing, harness::Method::kGaOnly,
                                          harness::Method::kGbo};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  harness::HybridParams hybrid;
  harness::GboRunParams gbo;
  bool gbo_budget_explicit = false;  // otherwise gbo budget = surrogate samples per slice
  std::vector<std::size_t> scalability_counts;
  std::vector<std::uint64_t> scalability_seeds;
  std::filesystem::path output_dir = "results";

  /// GBO evaluation budget matched to the surrogates' ground-truth queries.
  int effective_gbo_budget() const;
};

/// Throws ConfigError on unknown top-level keys or malformed values.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

sim::Scenario build_scenario(const ExperimentConfig& config);

/// Trains per-slice surrogates (or reads datasets from dataset_dir).
harness::TrainedSurrogates build_surrogates(const sim::Scenario& scenario, const ExperimentConfig& config);
/// models/slice_<i>.json for every slice.
std::vector<kan::KanModel> load_models(const std::filesystem::path& dir, std::size_t num_slices);
void save_models(const std::vector<kan::KanModel>& models, const std::filesystem::path& dir);

struct ExperimentResult {
  sim::Scenario scenario;
  std::vector<kan::KanModel> models;
  std::vector<kan::TrainingTrace> training;
  std::size_t training_queries_per_slice = 0;
  std::vector<harness::RunTrace> runs;              // main comparison
  std::vector<harness::RunTrace> scalability_runs;  // prefix scenarios
  std::vector<harness::ScalabilityRow> scalability;
};

/// One run of `method` with the configured parameters; never throws for a
/// failed run, which is reported through RunTrace::status instead.
harness::RunTrace run_method(const sim::Scenario& scenario, const std::vector<kan::KanModel>& models,
                             harness::Method method, std::uint64_t seed, const ExperimentConfig& config,
                             std::size_t training_queries_per_slice);

ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

/// Writes traces.csv, summary.csv, cdf.csv, regret.csv, training.csv,
/// scenario.json, models/ and (if any) scalability.csv. Wall-clock timings go to
/// timing.csv so that every other file is reproducible byte for byte.
void write_outputs(const ExperimentResult& result, const std::filesystem::path& dir);

/// Fixed-format number used in every CSV ("inf", "nan" for non-finite).
std::string format_number(double v);

void write_traces_csv(std::ostream& out, const std::vector<harness::RunTrace>& runs);
void write_summary_csv(std::ostream& out, const std::vector<harness::RunTrace>& runs);
void write_regret_csv(std::ostream& out, const std::vector<harness::RunTrace>& runs);
void write_cdf_csv(std::ostream& out, const std::vector<harness::RunTrace>& runs);
void write_training_csv(std::ostream& out, const std::vector<kan::TrainingTrace>& traces);

/// Reference optimum per (slices, seed): the lowest final cost of any method.
double reference_optimum(const std::vector<harness::RunTrace>& runs, std::size_t slices, std::uint64_t seed);

/// Solution document for a single optimization.
nlohmann::json solution_json(const harness::RunTrace& run, const sim::Scenario& scenario,
                             const PerformanceModel* surrogates);

}  // namespace inslicing::experiment
