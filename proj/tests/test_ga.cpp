#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "inslicing/error.hpp"
#include "inslicing/ga.hpp"
#include "inslicing/simulator.hpp"

using namespace inslicing;
using namespace inslicing::ga;

namespace {

FunctionPerformance constant_perf(std::size_t slices, double v) {
  std::vector<FunctionPerformance::Fn> fns(slices, [v](const Eigen::Ref<const Vector>&) { return v; });
  return FunctionPerformance(std::move(fns));
}

Individual ranked(double fitness, bool feasible, double penalized) {
  Individual ind;
  ind.genome = Vector::Zero(1);
  ind.fitness = fitness;
  ind.penalized = penalized;
  ind.feasible = feasible;
  ind.evaluated = true;
  return ind;
}

}  // namespace

TEST_CASE("initial population is deterministic in its seed") {
  const ProblemSpec s = testing::make_spec(3, 4);
  GaParams p;
  p.rng_seed = 9;
  const auto a = init_population(p, s), b = init_population(p, s);
  REQUIRE(a.population.size() == 50);
  for (std::size_t k = 0; k < a.population.size(); ++k) CHECK(a.population[k].genome == b.population[k].genome);
  CHECK(a.generation == 0);
  CHECK_FALSE(a.has_best());
}

TEST_CASE("degenerate box gives identical genomes at the bound") {
  const ProblemSpec s = testing::make_spec(2, 3, 0.4, 0.4);
  const auto st = init_population(GaParams{}, s);
  for (const auto& ind : st.population) CHECK(ind.genome == Vector::Constant(6, 0.4));
}

TEST_CASE("initial genomes are uniform over the box") {
  const ProblemSpec s = testing::make_spec(1, 3, 0.2, 0.8);
  GaParams p;
  p.population_size = 10000;
  const auto st = init_population(p, s);
  const double se = 0.6 / std::sqrt(12.0) / std::sqrt(10000.0);
  for (Eigen::Index k = 0; k < 3; ++k) {
    double mean = 0.0;
    for (const auto& ind : st.population) {
      CHECK(ind.genome[k] >= 0.2);
      CHECK(ind.genome[k] <= 0.8);
      mean += ind.genome[k];
    }
    mean /= 10000.0;
    CHECK(std::abs(mean - 0.5) <= 3.0 * se);
  }
}

TEST_CASE("evaluating a single feasible individual sets the best") {
  ProblemSpec s = testing::make_spec(1, 2);
  GaParams p;
  p.population_size = 1;
  auto st = init_population(p, s);
  st.population[0].genome = Vector{{1.5, 0.5}};
  s.upper_bounds = Vector::Constant(2, 2.0);
  evaluate(st, s, constant_perf(1, 10.0));
  REQUIRE(st.has_best());
  CHECK(st.best_fitness() == 2.0);
  CHECK(st.evaluations == 1);
}

TEST_CASE("an all-infeasible population leaves the best empty") {
  const ProblemSpec s = testing::make_spec(2, 2);
  auto st = init_population(GaParams{}, s);
  evaluate(st, s, constant_perf(2, 1000.0));
  CHECK_FALSE(st.has_best());
  CHECK(st.best_fitness() == kInf);
  for (const auto& ind : st.population) {
    CHECK(ind.evaluated);
    CHECK_FALSE(ind.feasible);
  }
}

TEST_CASE("a failing surrogate marks the individual infeasible with infinite fitness") {
  const ProblemSpec s = testing::make_spec(1, 2);
  GaParams p;
  p.population_size = 4;
  auto st = init_population(p, s);
  FunctionPerformance bad({[](const Eigen::Ref<const Vector>&) -> double { throw EvaluationError("down"); }});
  evaluate(st, s, bad);
  for (const auto& ind : st.population) {
    CHECK_FALSE(ind.feasible);
    CHECK(ind.fitness == kInf);
  }
  FunctionPerformance nan({[](const Eigen::Ref<const Vector>&) { return std::nan(""); }});
  auto st2 = init_population(p, s);
  evaluate(st2, s, nan);
  for (const auto& ind : st2.population) CHECK_FALSE(ind.feasible);
}

TEST_CASE("evaluation allowance is honored") {
  const ProblemSpec s = testing::make_spec(1, 2);
  auto st = init_population(GaParams{}, s);
  CHECK(evaluate(st, s, constant_perf(1, 10.0), {}, 7) == 7);
  CHECK(st.evaluations == 7);
  CHECK(std::count_if(st.population.begin(), st.population.end(), [](const auto& i) { return i.evaluated; }) == 7);
}

TEST_CASE("ranking puts feasible first, then fitness, infeasible by penalty") {
  CHECK(ranks_before(ranked(5.0, true, 5.0), ranked(1.0, false, 1.0)));
  CHECK(ranks_before(ranked(1.0, true, 1.0), ranked(2.0, true, 2.0)));
  CHECK(ranks_before(ranked(9.0, false, 3.0), ranked(1.0, false, 4.0)));
  CHECK_FALSE(ranks_before(ranked(1.0, true, 1.0), ranked(1.0, true, 1.0)));
}

TEST_CASE("full tournament always returns the population best") {
  std::vector<Individual> pop;
  for (int k = 0; k < 20; ++k) pop.push_back(ranked(10.0 + ((k * 7) % 20), true, 0.0));
  const auto best = static_cast<std::size_t>(
      std::min_element(pop.begin(), pop.end(), [](const auto& a, const auto& b) { return a.fitness < b.fitness; }) -
      pop.begin());
  Rng rng(1);
  for (int t = 0; t < 200; ++t) CHECK(tournament(pop, 20, rng) == best);
}

TEST_CASE("ties are won uniformly among entrants") {
  std::vector<Individual> pop(10, ranked(1.0, true, 1.0));
  Rng rng(2);
  std::vector<int> wins(10, 0);
  for (int t = 0; t < 20000; ++t) ++wins[tournament(pop, 3, rng)];
  for (int w : wins) CHECK(std::abs(w - 2000) < 4.0 * std::sqrt(20000 * 0.1 * 0.9));
}

TEST_CASE("the best individual wins every tournament it enters") {
  std::vector<Individual> pop;
  for (int k = 0; k < 50; ++k) pop.push_back(ranked(static_cast<double>(k), true, 0.0));
  Rng rng(3);
  int wins = 0;
  for (int t = 0; t < 10000; ++t) wins += tournament(pop, 3, rng) == 0;
  const double p_enter = 3.0 / 50.0;
  CHECK(std::abs(wins / 10000.0 - p_enter) < 4.0 * std::sqrt(p_enter * (1 - p_enter) / 10000.0));
}

TEST_CASE("parent selection returns half the population in pairs") {
  const ProblemSpec s = testing::make_spec(1, 2);
  GaParams p;
  auto st = init_population(p, s);
  evaluate(st, s, constant_perf(1, 10.0));
  Rng rng(4);
  const auto pairs = select_parents(st, p, rng);
  CHECK(pairs.size() == 25);
  for (const auto& [a, b] : pairs) {
    CHECK(a < 50);
    CHECK(b < 50);
  }
}

TEST_CASE("crossover identities") {
  const Vector p1{{0.0, 1.0}}, p2{{1.0, 0.0}};
  auto [e1, e2] = crossover(p1, p2, 1.0);
  CHECK(e1 == p1);
  CHECK(e2 == p2);
  auto [m1, m2] = crossover(p1, p2, 0.5);
  CHECK(m1 == m2);
  CHECK(m1 == Vector{{0.5, 0.5}});
  auto [h1, h2] = crossover(p1, p2, 0.25);
  CHECK(h1.isApprox(Vector{{0.75, 0.25}}, 1e-15));
  CHECK(h2.isApprox(Vector{{0.25, 0.75}}, 1e-15));
}

TEST_CASE("crossover children stay in the parents' coordinate hull") {
  Rng rng(5);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    Vector p1(6), p2(6);
    for (Eigen::Index k = 0; k < 6; ++k) {
      p1[k] = U(rng);
      p2[k] = U(rng);
    }
    const auto [c1, c2] = crossover(p1, p2, U(rng));
    for (Eigen::Index k = 0; k < 6; ++k) {
      const double lo = std::min(p1[k], p2[k]), hi = std::max(p1[k], p2[k]);
      for (double c : {c1[k], c2[k]}) {
        CHECK(c >= lo - 1e-15);
        CHECK(c <= hi + 1e-15);
      }
    }
  }
}

TEST_CASE("mutation rate decays linearly to zero") {
  GaParams p;
  p.base_mutation_rate = 0.2;
  p.total_generations = 100;
  CHECK(mutation_rate(p, 0) == 0.2);
  CHECK(mutation_rate(p, 50) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(mutation_rate(p, 100) == 0.0);
  CHECK(mutation_rate(p, 150) == 0.0);
  const Box box{Vector::Zero(8), Vector::Ones(8)};
  Rng rng(6);
  const Vector g = Vector::Constant(8, 0.5);
  for (int t = 0; t < 100; ++t) CHECK(mutate(g, 100, p, box, rng) == g);
}

TEST_CASE("empirical mutation frequency at half the horizon") {
  GaParams p;
  p.base_mutation_rate = 0.2;
  p.total_generations = 100;
  const Box box{Vector::Constant(1000, -1e9), Vector::Constant(1000, 1e9)};
  Rng rng(7);
  const Vector g = Vector::Zero(1000);
  std::size_t changed = 0;
  for (int t = 0; t < 100; ++t) changed += static_cast<std::size_t>((mutate(g, 50, p, box, rng).array() != 0.0).count());
  const double n = 1e5;
  CHECK(std::abs(changed / n - 0.1) <= 3.0 * std::sqrt(0.1 * 0.9 / n));
}

TEST_CASE("mutated coordinates always stay in the box") {
  GaParams p;
  p.base_mutation_rate = 1.0;
  p.mutation_sigma = 2.0;
  const Box box{Vector::Constant(5, 0.1), Vector::Constant(5, 0.6)};
  Rng rng(8);
  Vector g = Vector::Constant(5, 0.55);
  for (int t = 0; t < 1000; ++t) {
    g = mutate(g, 0, p, box, rng);
    CHECK(box.contains(g));
  }
}

TEST_CASE("best-so-far is monotone with elitism and fixed seeds reproduce the run") {
  const auto sc = sim::toy_scenario();
  const sim::GroundTruthModel truth(sc.truths);
  GaParams p;
  p.rng_seed = 11;
  p.total_generations = 60;
  auto run = [&] {
    auto st = init_population(p, sc.spec);
    evaluate(st, sc.spec, truth);
    std::vector<TraceRow> rows{trace_row(st)};
    for (int g = 0; g < 60; ++g) {
      const double before = st.best_fitness();
      step_generation(st, p, sc.spec, truth);
      CHECK(st.best_fitness() <= before);
      if (st.has_best()) {
        CHECK(st.population[0].fitness <= before);
        CHECK(st.best->feasible);
      }
      for (const auto& ind : st.population) CHECK(box_of(sc.spec).contains(ind.genome));
      rows.push_back(trace_row(st));
    }
    std::ostringstream out;
    write_trace_csv(out, rows);
    return out.str();
  };
  const std::string a = run();
  CHECK(a.rfind("generation,best_cost,feasible_count,mean_cost", 0) == 0);
  CHECK(a == run());
}

TEST_CASE("toy problem: median best after 200 generations is within 5% of the grid oracle") {
  const auto sc = sim::toy_scenario();
  const sim::GroundTruthModel truth(sc.truths);
  const double oracle = testing::grid_oracle(sc, 20).cost;
  std::vector<double> finals;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    GaParams p;
    p.rng_seed = seed;
    p.total_generations = 200;
    auto st = init_population(p, sc.spec);
    evaluate(st, sc.spec, truth);
    for (int g = 0; g < 200; ++g) step_generation(st, p, sc.spec, truth);
    finals.push_back(st.best_fitness());
  }
  std::nth_element(finals.begin(), finals.begin() + 10, finals.end());
  CHECK(finals[10] <= 1.05 * oracle);
}

TEST_CASE("parameter validation") {
  GaParams p;
  CHECK_NOTHROW(p.validate());
  p.crossover_prob = 1.5;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = GaParams{};
  p.population_size = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = GaParams{};
  p.tournament_size = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}
