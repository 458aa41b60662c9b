#pragma once

// Genetic search over flattened configurations with fitness F = total cost.

#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <utility>
#include <vector>

#include "inslicing/problem.hpp"
#include "inslicing/rng.hpp"

namespace inslicing::ga {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Individual {
  Vector genome;
  double fitness = kInf;    // total cost
  double penalized = kInf;  // cost plus constraint penalties
  bool feasible = false;
  bool evaluated = false;
};

/// Tournament order: feasible before infeasible; feasible by fitness,
/// infeasible by penalized value.
bool ranks_before(const Individual& a, const Individual& b);

struct GaParams {
  int population_size = 50;
  double crossover_prob = 0.9;
  double base_mutation_rate = 0.2;
  int total_generations = 100;  // G in the mutation schedule
  int tournament_size = 3;
  double mutation_sigma = 0.1;
  std::uint64_t rng_seed = 0;

  /// Throws ConfigError for out-of-range values.
  void validate() const;
};

struct GaState {
  std::vector<Individual> population;
  int generation = 0;
  std::optional<Individual> best;  // best feasible individual ever evaluated
  std::size_t evaluations = 0;     // objective evaluations consumed

  bool has_best() const { return best.has_value(); }
  double best_fitness() const { return best ? best->fitness : kInf; }
  /// Lowest-ranked member of the current (evaluated) population.
  const Individual& top() const;
};

GaState init_population(const GaParams& params, const ProblemSpec& spec);

/// Evaluates up to `max_evaluations` not-yet-evaluated individuals in order and
/// updates the best-so-far. Returns the number of evaluations performed.
std::size_t evaluate(GaState& state, const ProblemSpec& spec, const PerformanceModel& surrogates,
                     const PenaltyWeights& weights = {},
                     std::size_t max_evaluations = std::numeric_limits<std::size_t>::max());

/// Offers an externally produced individual (already evaluated) to the best-so-far.
bool offer_best(GaState& state, const Individual& candidate);

/// Index of the winner among `tournament_size` distinct uniformly drawn entrants.
std::size_t tournament(const std::vector<Individual>& population, int tournament_size, Rng& rng);

/// population_size / 2 parent index pairs.
std::vector<std::pair<std::size_t, std::size_t>> select_parents(const GaState& state, const GaParams& params,
                                                                Rng& rng);

/// c1 = a p1 + (1 - a) p2, c2 = a p2 + (1 - a) p1.
std::pair<Vector, Vector> crossover(const Vector& p1, const Vector& p2, double alpha);

/// m(g) = m0 (1 - g / G), floored at 0.
double mutation_rate(const GaParams& params, int generation);

/// Adds N(0, sigma^2) to each coordinate with probability m(g), then clips to the box.
Vector mutate(const Vector& genome, int generation, const GaParams& params, const Box& box, Rng& rng);

/// Selection, crossover and mutation into a new population whose first member
/// is the elite (best feasible, else the current top), then evaluation of the
/// offspring within the evaluation allowance.
void step_generation(GaState& state, const GaParams& params, const ProblemSpec& spec,
                     const PerformanceModel& surrogates, const PenaltyWeights& weights = {},
                     std::size_t max_evaluations = std::numeric_limits<std::size_t>::max());

struct TraceRow {
  int generation = 0;
  double best_cost = kInf;  // +inf until feasible
  std::size_t feasible_count = 0;
  double mean_cost = 0.0;
};

TraceRow trace_row(const GaState& state);
void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows);

}  // namespace inslicing::ga
