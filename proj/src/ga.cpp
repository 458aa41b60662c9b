#include "inslicing/ga.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "inslicing/error.hpp"

namespace inslicing::ga {

namespace {

enum Stream : std::uint64_t { kInitStream = 0x67610001, kGenerationStream };

}  // namespace

bool ranks_before(const Individual& a, const Individual& b) {
  if (a.feasible != b.feasible) return a.feasible;
  if (a.feasible) return a.fitness < b.fitness;
  return a.penalized < b.penalized;
}

void GaParams::validate() const {
  if (population_size < 1) throw ConfigError("ga.population_size must be >= 1");
  if (total_generations < 1) throw ConfigError("ga.total_generations must be >= 1");
  if (tournament_size < 1) throw ConfigError("ga.tournament_size must be >= 1");
  if (!(crossover_prob >= 0.0 && crossover_prob <= 1.0)) throw ConfigError("ga.crossover_prob must be in [0, 1]");
  if (!(base_mutation_rate >= 0.0 && base_mutation_rate <= 1.0))
    throw ConfigError("ga.base_mutation_rate must be in [0, 1]");
  if (!(mutation_sigma >= 0.0)) throw ConfigError("ga.mutation_sigma must be >= 0");
}

const Individual& GaState::top() const {
  if (population.empty()) throw Error("empty population");
  return *std::min_element(population.begin(), population.end(),
                           [](const Individual& a, const Individual& b) { return ranks_before(a, b); });
}

GaState init_population(const GaParams& params, const ProblemSpec& spec) {
  params.validate();
  const Box box = box_of(spec);
  Rng rng = make_rng(params.rng_seed, {kInitStream});
  std::uniform_real_distribution<double> U(0.0, 1.0);
  GaState state;
  state.population.resize(static_cast<std::size_t>(params.population_size));
  for (auto& ind : state.population) {
    ind.genome.resize(box.size());
    for (Eigen::Index k = 0; k < box.size(); ++k)
      ind.genome[k] = box.lower[k] + (box.upper[k] - box.lower[k]) * U(rng);
  }
  return state;
}

bool offer_best(GaState& state, const Individual& c) {
  if (!c.evaluated || !c.feasible) return false;
  if (state.best && !(c.fitness < state.best->fitness)) return false;
  state.best = c;
  return true;
}

std::size_t evaluate(GaState& state, const ProblemSpec& spec, const PerformanceModel& surrogates,
                     const PenaltyWeights& weights, std::size_t max_evaluations) {
  std::size_t done = 0;
  for (auto& ind : state.population) {
    if (ind.evaluated) continue;
    if (done >= max_evaluations) break;
    const ConfigMatrix x = unflatten(spec, ind.genome);
    ind.fitness = total_cost(spec, x);
    try {
      const FeasibilityReport rep = check_feasibility(spec, x, surrogates);
      ind.feasible = rep.feasible;
      ind.penalized = penalized_objective(spec, x, rep, weights);
      if (!std::isfinite(ind.penalized)) throw EvaluationError("non-finite objective");
    } catch (const Error&) {
      ind.feasible = false;
      ind.fitness = kInf;
      ind.penalized = kInf;
    }
    ind.evaluated = true;
    ++done;
    offer_best(state, ind);
  }
  state.evaluations += done;
  return done;
}

std::size_t tournament(const std::vector<Individual>& pop, int tournament_size, Rng& rng) {
  const std::size_t n = pop.size();
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(std::max(tournament_size, 1)), n);
  // Partial Fisher-Yates over an index table: k distinct entrants.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::size_t winner = n;
  for (std::size_t t = 0; t < k; ++t) {
    std::uniform_int_distribution<std::size_t> pick(t, n - 1);
    std::swap(idx[t], idx[pick(rng)]);
    const std::size_t e = idx[t];
    if (winner == n || ranks_before(pop[e], pop[winner])) winner = e;
  }
  return winner;
}

std::vector<std::pair<std::size_t, std::size_t>> select_parents(const GaState& state, const GaParams& params,
                                                                Rng& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  const auto count = static_cast<std::size_t>(params.population_size / 2);
  pairs.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t a = tournament(state.population, params.tournament_size, rng);
    const std::size_t b = tournament(state.population, params.tournament_size, rng);
    pairs.emplace_back(a, b);
  }
  return pairs;
}

std::pair<Vector, Vector> crossover(const Vector& p1, const Vector& p2, double alpha) {
  if (p1.size() != p2.size()) throw ShapeError("crossover parents differ in length");
  return {alpha * p1 + (1.0 - alpha) * p2, alpha * p2 + (1.0 - alpha) * p1};
}

double mutation_rate(const GaParams& params, int generation) {
  const double frac = static_cast<double>(generation) / static_cast<double>(params.total_generations);
  return std::max(0.0, params.base_mutation_rate * (1.0 - frac));
}

Vector mutate(const Vector& genome, int generation, const GaParams& params, const Box& box, Rng& rng) {
  const double rate = mutation_rate(params, generation);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> eps(0.0, params.mutation_sigma);
  Vector out = genome;
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    if (!(U(rng) < rate)) continue;
    const double v = std::clamp(out[k] + eps(rng), box.lower[k], box.upper[k]);
    // Box check after clipping; a non-finite draw keeps the original value.
    if (std::isfinite(v) && v >= box.lower[k] && v <= box.upper[k]) out[k] = v;
  }
  return out;
}

void step_generation(GaState& state, const GaParams& params, const ProblemSpec& spec,
                     const PerformanceModel& surrogates, const PenaltyWeights& weights,
                     std::size_t max_evaluations) {
  if (state.population.empty()) throw Error("empty population");
  const Box box = box_of(spec);
  Rng rng = make_rng(params.rng_seed, {kGenerationStream, static_cast<std::uint64_t>(state.generation)});
  std::uniform_real_distribution<double> U(0.0, 1.0);

  std::vector<Individual> next;
  next.reserve(static_cast<std::size_t>(params.population_size));
  next.push_back(state.best ? *state.best : state.top());

  const auto pairs = select_parents(state, params, rng);
  std::size_t pi = 0;
  while (next.size() < static_cast<std::size_t>(params.population_size)) {
    const auto [a, b] = pairs[pi++ % pairs.size()];
    const Vector& p1 = state.population[a].genome;
    const Vector& p2 = state.population[b].genome;
    Vector c1 = p1, c2 = p2;
    if (U(rng) < params.crossover_prob) std::tie(c1, c2) = crossover(p1, p2, U(rng));
    for (Vector* c : {&c1, &c2}) {
      if (next.size() >= static_cast<std::size_t>(params.population_size)) break;
      Individual child;
      child.genome = mutate(*c, state.generation, params, box, rng);
      next.push_back(std::move(child));
    }
  }
  state.population = std::move(next);
  ++state.generation;
  evaluate(state, spec, surrogates, weights, max_evaluations);
}

TraceRow trace_row(const GaState& state) {
  TraceRow row;
  row.generation = state.generation;
  row.best_cost = state.best_fitness();
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& ind : state.population) {
    if (!ind.evaluated) continue;
    if (ind.feasible) ++row.feasible_count;
    if (std::isfinite(ind.fitness)) {
      sum += ind.fitness;
      ++n;
    }
  }
  row.mean_cost = n ? sum / static_cast<double>(n) : 0.0;
  return row;
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows) {
  out << "generation,best_cost,feasible_count,mean_cost\n";
  const auto old = out.precision(12);
  for (const auto& r : rows)
    out << r.generation << ',' << r.best_cost << ',' << r.feasible_count << ',' << r.mean_cost << '\n';
  out.precision(old);
}

}  // namespace inslicing::ga
