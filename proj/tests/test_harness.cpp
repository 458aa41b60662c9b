#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "inslicing/error.hpp"
#include "inslicing/harness.hpp"

using namespace inslicing;
using namespace inslicing::harness;
using inslicing::ga::kInf;

namespace {

HybridParams small_params() {
  HybridParams p;
  p.ga.population_size = 20;
  p.budget_evals = 1500;
  return p;
}

std::string trace_text(const RunTrace& t) {
  std::string s;
  for (const auto& r : t.rows)
    s += std::to_string(r.iteration) + ',' + std::to_string(r.evaluations) + ',' + r.phase + ',' +
         std::to_string(r.best_cost) + ',' + std::to_string(r.reported_cost) + '\n';
  return s;
}

}  // namespace

TEST_CASE("regret hand computation") {
  CHECK(compute_regret(std::vector<double>{3.0, 2.0, 1.0}, 1.0) == 1.0);
  CHECK(compute_regret(std::vector<double>{1.5, 1.5, 1.5}, 1.5) == 0.0);
}

TEST_CASE("regret of a run trace uses its reported costs") {
  RunTrace t;
  for (double c : {4.0, 3.0, 3.0, 2.0}) {
    TraceRow r;
    r.reported_cost = c;
    t.rows.push_back(r);
  }
  CHECK(compute_regret(t, 2.0) == doctest::Approx((2.0 + 1.0 + 1.0 + 0.0) / 4.0));
}

TEST_CASE("median") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
}

TEST_CASE("pre-feasible convention") {
  const ProblemSpec spec = testing::make_spec(2, 2);
  RunTrace t;
  t.initial_penalized = 100.0;
  for (double c : {kInf, kInf, 3.0, 2.5}) {
    TraceRow r;
    r.best_cost = c;
    r.feasible = std::isfinite(c);
    t.rows.push_back(r);
  }
  t.best_genome = Vector::Constant(4, 0.5);
  t.final_cost = 2.5;
  t.feasible = true;
  finalize_reported_costs(t, spec);
  // Max box cost is 2 slices x 2 resources x weight 1 = 4 < initial penalized.
  CHECK(t.rows[0].reported_cost == 4.0);
  CHECK(t.rows[1].reported_cost == 4.0);
  CHECK(t.rows[2].reported_cost == 3.0);
  CHECK(t.rows[3].reported_cost == 2.5);

  RunTrace never;
  never.initial_penalized = 1.5;
  TraceRow r;
  r.best_cost = kInf;
  never.rows = {r, r};
  finalize_reported_costs(never, spec);
  CHECK(never.rows[1].reported_cost == 1.5);
  CHECK(never.final_cost == 1.5);
}

TEST_CASE("refinement interval beyond the horizon reproduces GA-only exactly") {
  const auto sc = sim::toy_scenario();
  const sim::GroundTruthModel truth(sc.truths);
  HybridParams p = small_params();
  p.trm_interval = 100000;
  for (std::uint64_t seed : {0u, 5u}) {
    const auto h = run_inslicing(sc, truth, p, seed);
    const auto g = run_ga_only(sc, truth, p, seed);
    CHECK(trace_text(h) == trace_text(g));
    CHECK(h.final_cost == g.final_cost);
    CHECK(h.trm_invocations == 0);
  }
}

TEST_CASE("fixed seed gives a bit-identical hybrid trace") {
  const auto sc = sim::toy_scenario();
  const sim::GroundTruthModel truth(sc.truths);
  const auto a = run_inslicing(sc, truth, small_params(), 3);
  const auto b = run_inslicing(sc, truth, small_params(), 3);
  CHECK(trace_text(a) == trace_text(b));
  CHECK(a.best_genome == b.best_genome);
  CHECK(a.trm_invocations > 0);
}

TEST_CASE("hybrid and GA-only spend the same evaluation budget") {
  const auto sc = sim::generate_scenario(3, 6, 1);
  const sim::GroundTruthModel truth(sc.truths);
  const HybridParams p = small_params();
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto h = run_inslicing(sc, truth, p, seed);
    const auto g = run_ga_only(sc, truth, p, seed);
    CHECK(h.evaluations == p.budget_evals);
    CHECK(g.evaluations == p.budget_evals);
    CHECK(h.rows.back().evaluations == h.evaluations);
  }
}

TEST_CASE("best cost column is non-increasing and phases are tagged") {
  const auto sc = sim::generate_scenario(3, 6, 2);
  const sim::GroundTruthModel truth(sc.truths);
  const auto h = run_inslicing(sc, truth, small_params(), 1);
  double last = kInf, last_rep = kInf;
  bool saw_trm = false;
  for (const auto& r : h.rows) {
    CHECK(r.best_cost <= last);
    CHECK(r.reported_cost <= last_rep);
    last = r.best_cost;
    last_rep = r.reported_cost;
    CHECK((r.phase == "ga" || r.phase == "trm"));
    saw_trm = saw_trm || r.phase == "trm";
  }
  CHECK(saw_trm);
}

TEST_CASE("ground-truth validation flags surrogate-induced violations") {
  const auto sc = sim::toy_scenario();
  // Optimistic surrogates: half the true latency.
  std::vector<FunctionPerformance::Fn> fns;
  for (const auto& t : sc.truths) fns.push_back([t](const Eigen::Ref<const Vector>& x) { return 0.5 * t.mean_latency(x); });
  const FunctionPerformance optimistic(std::move(fns));
  auto run = run_ga_only(sc, optimistic, small_params(), 0);
  REQUIRE(run.best_genome.size() == 4);
  validate_on_ground_truth(run, sc, &optimistic);
  CHECK(run.validated);
  CHECK_FALSE(run.truth_feasible);
  CHECK(run.c1_violations > 0);
  CHECK(run.max_c1_shortfall > 0.0);
  CHECK(run.truth_latency.size() == 2);
  CHECK(run.surrogate_latency.size() == 2);

  const sim::GroundTruthModel truth(sc.truths);
  auto honest = run_ga_only(sc, truth, small_params(), 0);
  validate_on_ground_truth(honest, sc, &truth);
  CHECK(honest.truth_feasible);
  CHECK(honest.c1_violations == 0);
}

TEST_CASE("normalized performance at the threshold is one and the CDF is monotone") {
  const auto sc = sim::toy_scenario();
  RunTrace t;
  t.best_genome = Vector::Constant(4, 0.5);
  validate_on_ground_truth(t, sc, nullptr);
  REQUIRE(t.normalized_performance.size() == 2);
  for (Eigen::Index i = 0; i < 2; ++i)
    CHECK(t.normalized_performance[i] == doctest::Approx(sc.spec.thresholds[i] / t.truth_latency[i]));

  RunTrace at;
  at.validated = true;
  at.normalized_performance = Vector{{1.0, 0.8, 1.3}};
  RunTrace other;
  other.validated = true;
  other.normalized_performance = Vector{{2.0, 1.0}};
  const auto cdf = normalized_performance_cdf({&at, &other});
  REQUIRE(cdf.size() == 5);
  for (std::size_t k = 1; k < cdf.size(); ++k) {
    CHECK(cdf[k].value >= cdf[k - 1].value);
    CHECK(cdf[k].cdf >= cdf[k - 1].cdf);
  }
  CHECK(cdf.front().cdf > 0.0);
  CHECK(cdf.back().cdf == 1.0);
  RunTrace unchecked;
  unchecked.normalized_performance = Vector{{5.0}};
  CHECK(normalized_performance_cdf({&unchecked}).empty());
}

TEST_CASE("feasibility restoration ends feasible and charges evaluations") {
  const auto sc = sim::generate_scenario(3, 6, 3);
  const sim::GroundTruthModel truth(sc.truths);
  const Vector start = Vector::Constant(18, 0.3);
  REQUIRE(check_feasibility(sc.spec, unflatten(sc.spec, start), truth).feasible);
  const Vector target = Vector::Zero(18);
  const auto r = restore_feasibility(sc.spec, truth, start, target, 12);
  CHECK(r.feasible);
  CHECK(check_feasibility(sc.spec, unflatten(sc.spec, r.x), truth).feasible);
  CHECK(total_cost(sc.spec, unflatten(sc.spec, r.x)) <= total_cost(sc.spec, unflatten(sc.spec, start)));
  CHECK(r.evaluations > 0);
}

TEST_CASE("one-slice scenario: all methods land within 10% of the grid oracle") {
  sim::Scenario sc = sim::toy_scenario();
  sc = sc.prefix(1);
  const auto oracle = testing::grid_oracle(sc, 100).cost;
  const sim::GroundTruthModel truth(sc.truths);
  HybridParams p = small_params();
  GboRunParams g;
  g.gbo.budget = 60;
  const auto h = run_inslicing(sc, truth, p, 0);
  const auto a = run_ga_only(sc, truth, p, 0);
  const auto b = run_gbo(sc, g, 0);
  for (const auto* r : {&h, &a, &b}) {
    CHECK(r->feasible);
    CHECK(r->final_cost <= 1.10 * oracle);
  }
}

TEST_CASE("surrogate domain") {
  const ProblemSpec spec = testing::make_spec(9, 2, 0.1, 1.0);
  CHECK(resolve_domain_fraction(9, 0.0) == doctest::Approx(1.0 / 3.0));
  CHECK(resolve_domain_fraction(2, 0.0) == 1.0);
  CHECK(resolve_domain_fraction(9, 0.5) == 0.5);
  const Box d = surrogate_domain(spec, 0, 0.0);
  CHECK(d.lower == Vector::Constant(2, 0.1));
  CHECK(d.upper.isApprox(Vector::Constant(2, 0.1 + 0.9 / 3.0)));
}

TEST_CASE("affordable generations account for refinement") {
  HybridParams p;
  p.ga.population_size = 50;
  p.budget_evals = 20000;
  CHECK(p.affordable_generations() == 408);
  CHECK(p.refinement_allowance() == 2 * 25 + 2 + 2 * 12 + 4);
  CHECK(p.affordable_generations(true) == 307);
  p.budget_evals = 10;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("method names") {
  CHECK(method_from_string("inslicing") == Method::kInSlicing);
  CHECK(method_from_string("ga-only") == Method::kGaOnly);
  CHECK(method_from_string("gbo") == Method::kGbo);
  CHECK(to_string(Method::kGaOnly) == "ga-only");
  CHECK_THROWS_AS(method_from_string("random"), ConfigError);
}
