#pragma once

// Hybrid GA + trust-region search, the GA-only and GP baselines, and the
// metrics used to compare them.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "inslicing/ga.hpp"
#include "inslicing/gbo.hpp"
#include "inslicing/kan.hpp"
#include "inslicing/problem.hpp"
#include "inslicing/simulator.hpp"
#include "inslicing/trust_region.hpp"

namespace inslicing::harness {

enum class Method { kInSlicing, kGaOnly, kGbo };

std::string to_string(Method m);
/// Accepts "inslicing", "ga-only", "gbo".
Method method_from_string(const std::string& s);

struct HybridParams {
  ga::GaParams ga;
  trm::TrmParams trm;
  int trm_interval = 5;  // refine every n generations (g > 0)
  std::size_t budget_evals = 20000;  // surrogate objective evaluations
  double budget_secs = 0.0;          // > 0 switches to a wall-clock limit
  PenaltyWeights penalty;
  int restore_bisections = 12;
  bool penalty_curvature = true;  // Gauss-Newton penalty term in the refinement model

  void validate() const;
  /// Generations the evaluation budget affords: the initial population costs
  /// population_size evaluations, each later generation population_size - 1
  /// (the elite is carried over evaluated). With refinement, every
  /// trm_interval generations also pay refinement_allowance().
  int affordable_generations(bool with_refinement = false) const;
  /// Worst-case evaluations of one refinement: gradient-bearing iterations
  /// plus the feasibility restoration.
  std::size_t refinement_allowance() const;
};

struct GboRunParams {
  gbo::GboParams gbo;  // gbo.budget counts full ground-truth evaluations
  PenaltyWeights penalty;
  // Overrides gbo.design_fraction; 0 selects min(1, 3 / |I|) like the surrogate domain.
  double domain_fraction = 0.0;
};

struct TraceRow {
  std::size_t iteration = 0;
  std::size_t evaluations = 0;  // cumulative objective evaluations
  std::string phase;            // "ga", "trm" or "gbo"
  double best_cost = 0.0;       // +inf before the first feasible point
  double reported_cost = 0.0;   // best_cost with the pre-feasible convention applied
  bool feasible = false;
};

struct RunTrace {
  Method method = Method::kInSlicing;
  std::uint64_t seed = 0;
  std::size_t num_slices = 0;
  std::string status = "ok";  // otherwise the error that stopped the run
  std::vector<TraceRow> rows;
  double initial_penalized = 0.0;  // best penalized value of the initial design

  Vector best_genome;         // empty when nothing was found
  double final_cost = 0.0;    // cost of best_genome, or the convention value
  bool feasible = false;      // under the model the method optimized against
  std::size_t evaluations = 0;
  std::size_t ground_truth_queries = 0;  // per-slice latency observations
  int trm_invocations = 0;
  int trm_improvements = 0;
  double wall_seconds = 0.0;

  // Noiseless ground-truth re-validation of best_genome.
  bool validated = false;
  bool truth_feasible = false;
  Vector truth_latency;
  Vector surrogate_latency;  // empty for methods without surrogates
  std::size_t c1_violations = 0;
  double max_c1_shortfall = 0.0;
  double c3_excess = 0.0;
  double max_surrogate_error = 0.0;
  Vector normalized_performance;  // Q / latency per slice
};

/// Applies the pre-feasible convention: rows before the first feasible one get
/// min(initial penalized, max box cost), but never less than the first feasible
/// cost. A run that never becomes feasible reports that value as final cost.
void finalize_reported_costs(RunTrace& trace, const ProblemSpec& spec);

/// GA with trust-region refinement of X_best every trm_interval generations.
/// With trm_interval > generations run, this is exactly the GA-only baseline.
RunTrace run_inslicing(const sim::Scenario& scenario, const PerformanceModel& surrogates,
                       const HybridParams& params, std::uint64_t seed);

RunTrace run_ga_only(const sim::Scenario& scenario, const PerformanceModel& surrogates, HybridParams params,
                     std::uint64_t seed);

/// GP/EI directly on noisy ground truth.
RunTrace run_gbo(const sim::Scenario& scenario, const GboRunParams& params, std::uint64_t seed);

/// Re-checks best_genome against the noiseless simulator and fills the
/// validation fields. `surrogates` may be null.
void validate_on_ground_truth(RunTrace& trace, const sim::Scenario& scenario, const PerformanceModel* surrogates);

/// Feasibility restoration after refinement: bisection from `start` (feasible)
/// toward `target`, first per slice for C1, then jointly for C3 and the box.
/// Returns the restored point and charges evaluations (a per-slice check is
/// 1/|I| of an evaluation, rounded up).
struct Restoration {
  Vector x;
  bool feasible = false;
  std::size_t evaluations = 0;
};
Restoration restore_feasibility(const ProblemSpec& spec, const PerformanceModel& surrogates, const Vector& start,
                                const Vector& target, int bisections);

/// (sum_t (c_t - optimum)) / T over reported costs.
double compute_regret(const std::vector<double>& costs, double optimum);
double compute_regret(const RunTrace& trace, double optimum);

struct CdfPoint {
  double value = 0.0;
  double cdf = 0.0;
};
/// Empirical CDF of all per-slice normalized performances in the traces.
std::vector<CdfPoint> normalized_performance_cdf(const std::vector<const RunTrace*>& traces);

double median(std::vector<double> v);

/// Surrogate training for every slice of a scenario.
struct SurrogateConfig {
  std::size_t samples = 300;
  sim::Sampling sampling = sim::Sampling::kLatinHypercube;
  kan::KanOptions kan;
  kan::TrainOptions train;
  std::uint64_t seed = 0;
  // Samples cover [L, L + f (H - L)] per resource; 0 selects f = min(1, 3 / |I|).
  double domain_fraction = 0.0;
};

/// Fraction f in [0, 1]; 0 selects min(1, 3 / num_slices).
double resolve_domain_fraction(std::size_t num_slices, double domain_fraction);

/// Training domain of slice i's surrogate. Outside it the model clamps, so
/// allocations beyond the cap are predicted to bring no further gain.
Box surrogate_domain(const ProblemSpec& spec, std::size_t slice, double domain_fraction);

struct TrainedSurrogates {
  std::vector<kan::KanModel> models;
  std::vector<kan::TrainingTrace> traces;
  std::vector<kan::Dataset> datasets;
  std::size_t ground_truth_queries = 0;
};

TrainedSurrogates train_surrogates(const sim::Scenario& scenario, const SurrogateConfig& config);

struct ScalabilityRow {
  std::size_t slices = 0;
  Method method = Method::kInSlicing;
  double median_cost = 0.0;
  std::size_t runs = 0;
};

/// Runs every method on nested prefixes of `scenario` (which must have at least
/// max(slice_counts) slices) reusing the first k surrogate models.
std::vector<ScalabilityRow> scalability_sweep(const sim::Scenario& scenario, const std::vector<kan::KanModel>& models,
                                              const std::vector<std::size_t>& slice_counts,
                                              const std::vector<std::uint64_t>& seeds,
                                              const std::vector<Method>& methods, const HybridParams& hybrid,
                                              const GboRunParams& gbo, std::vector<RunTrace>* runs = nullptr);

}  // namespace inslicing::harness
