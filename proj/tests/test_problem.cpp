#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "inslicing/error.hpp"
#include "inslicing/problem.hpp"
#include "inslicing/rng.hpp"
#include "inslicing/simulator.hpp"

using namespace inslicing;
using testing::make_spec;

namespace {

FunctionPerformance constant_perf(std::vector<double> values) {
  std::vector<FunctionPerformance::Fn> fns;
  for (double v : values) fns.push_back([v](const Eigen::Ref<const Vector>&) { return v; });
  return FunctionPerformance(std::move(fns));
}

}  // namespace

TEST_CASE("total_cost of zero allocation is zero") {
  ProblemSpec s = make_spec(3, 4);
  s.cost_weights = Vector{{0.3, 1.0, 2.0, 7.0}};
  CHECK(total_cost(s, ConfigMatrix::Zero(3, 4)) == 0.0);
}

TEST_CASE("total_cost hand sum") {
  ProblemSpec s = make_spec(1, 2);
  s.cost_weights = Vector{{1.0, 2.0}};
  ConfigMatrix x(1, 2);
  x << 0.5, 0.25;
  CHECK(total_cost(s, x) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("total_cost rejects mismatched shapes") {
  const ProblemSpec s = make_spec(2, 3);
  CHECK_THROWS_AS(total_cost(s, ConfigMatrix::Zero(3, 2)), ShapeError);
}

TEST_CASE("total_cost is linear") {
  ProblemSpec s = make_spec(4, 3);
  s.cost_weights = Vector{{0.7, 1.1, 1.9}};
  Rng rng(7);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    ConfigMatrix x(4, 3), y(4, 3);
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      x.data()[k] = N(rng);
      y.data()[k] = N(rng);
    }
    const double a = N(rng), b = N(rng);
    const ConfigMatrix z = a * x + b * y;
    CHECK(total_cost(s, z) == doctest::Approx(a * total_cost(s, x) + b * total_cost(s, y)).epsilon(1e-12));
  }
}

TEST_CASE("capacity exactly at H_r is satisfied") {
  const ProblemSpec s = make_spec(2, 2);
  ConfigMatrix x(2, 2);
  x << 0.5, 0.25, 0.5, 0.75;
  const auto rep = check_feasibility(s, x, constant_perf({10.0, 10.0}));
  CHECK(rep.c3_violations.isZero());
  CHECK(rep.feasible);
}

TEST_CASE("box violation on a single slice") {
  ProblemSpec s = make_spec(1, 2, 0.1, 1.0);
  ConfigMatrix x(1, 2);
  x << 0.05, 0.5;
  const auto rep = check_feasibility(s, x, constant_perf({10.0}));
  CHECK_FALSE(rep.feasible);
  CHECK(rep.c2_violation == doctest::Approx(0.05));
}

TEST_CASE("latency sense: shortfall is latency above the threshold") {
  ProblemSpec s = make_spec(2, 1);
  s.threshold_sense[1] = ThresholdSense::kPerformance;
  const ConfigMatrix x = ConfigMatrix::Constant(2, 1, 0.2);
  const auto rep = check_feasibility(s, x, constant_perf({130.0, 70.0}));
  CHECK(rep.c1_violations[0] == doctest::Approx(30.0));
  CHECK(rep.c1_violations[1] == doctest::Approx(30.0));
  CHECK_FALSE(rep.feasible);
  const auto ok = check_feasibility(s, x, constant_perf({100.0, 100.0}));
  CHECK(ok.feasible);
}

TEST_CASE("toy grid-oracle point is feasible") {
  const sim::Scenario sc = sim::toy_scenario();
  const auto best = testing::grid_oracle(sc, 20);
  REQUIRE(std::isfinite(best.cost));
  const sim::GroundTruthModel truth(sc.truths);
  CHECK(check_feasibility(sc.spec, best.x, truth).feasible);
}

TEST_CASE("check_feasibility matches a direct constraint evaluation") {
  ProblemSpec s = make_spec(3, 2, 0.0, 1.0, 200.0);
  s.thresholds = Vector{{200.0, 150.0, 120.0}};
  FunctionPerformance perf({[](const Eigen::Ref<const Vector>& x) { return 300.0 - 200.0 * x.sum(); },
                            [](const Eigen::Ref<const Vector>& x) { return 250.0 - 150.0 * x[0]; },
                            [](const Eigen::Ref<const Vector>& x) { return 180.0 - 100.0 * x[1]; }});
  Rng rng(11);
  std::uniform_real_distribution<double> U(-0.2, 1.2);
  for (int t = 0; t < 500; ++t) {
    ConfigMatrix x(3, 2);
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = U(rng);
    bool ok = true;
    for (Eigen::Index i = 0; i < 3; ++i) {
      const double p = perf.evaluate(static_cast<std::size_t>(i), x.row(i).transpose());
      ok = ok && p <= s.thresholds[i] + kFeasibilityTolerance;
      ok = ok && (x.row(i).array() >= 0.0).all() && (x.row(i).array() <= 1.0).all();
    }
    ok = ok && (x.colwise().sum().array() <= 1.0 + kFeasibilityTolerance).all();
    CHECK(check_feasibility(s, x, perf).feasible == ok);
  }
}

TEST_CASE("penalized objective equals cost on the feasible set") {
  const ProblemSpec s = make_spec(2, 2);
  const ConfigMatrix x = ConfigMatrix::Constant(2, 2, 0.3);
  const auto perf = constant_perf({50.0, 60.0});
  CHECK(penalized_objective(s, x, perf) == total_cost(s, x));
}

TEST_CASE("C3 penalty hand computation") {
  const ProblemSpec s = make_spec(2, 2);
  ConfigMatrix x(2, 2);
  x << 0.6, 0.2, 0.5, 0.2;  // resource 0 uses 1.1 of capacity 1.0
  PenaltyWeights w;
  w.c3 = 100.0;
  const double v = penalized_objective(s, x, constant_perf({0.0, 0.0}), w);
  CHECK(v == doctest::Approx(total_cost(s, x) + 1.0).epsilon(1e-12));
}

TEST_CASE("penalized objective dominates cost with equality iff feasible") {
  ProblemSpec s = make_spec(2, 2, 0.0, 1.0, 100.0);
  FunctionPerformance perf({[](const Eigen::Ref<const Vector>& x) { return 200.0 - 150.0 * x.sum(); },
                            [](const Eigen::Ref<const Vector>& x) { return 180.0 - 200.0 * x[0]; }});
  Rng rng(3);
  std::uniform_real_distribution<double> U(-0.1, 1.1);
  for (int t = 0; t < 500; ++t) {
    ConfigMatrix x(2, 2);
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = U(rng);
    const auto rep = check_feasibility(s, x, perf);
    const double pen = penalized_objective(s, x, rep, {});
    const double c = total_cost(s, x);
    CHECK(pen >= c);
    if (rep.feasible) CHECK(pen - c <= 1e3 * 4 * kFeasibilityTolerance * kFeasibilityTolerance);
    if (pen == c) CHECK(rep.feasible);
  }
}

TEST_CASE("penalized argmin over the toy grid equals the constrained grid optimum") {
  const sim::Scenario sc = sim::toy_scenario();
  const sim::GroundTruthModel truth(sc.truths);
  const auto oracle = testing::grid_oracle(sc, 20);
  double best = std::numeric_limits<double>::infinity();
  ConfigMatrix x(2, 2);
  for (int a = 0; a <= 20; ++a)
    for (int b = 0; b <= 20; ++b)
      for (int c = 0; c <= 20; ++c)
        for (int d = 0; d <= 20; ++d) {
          x << a / 20.0, b / 20.0, c / 20.0, d / 20.0;
          best = std::min(best, penalized_objective(sc.spec, x, truth));
        }
  CHECK(best == doctest::Approx(oracle.cost).epsilon(1e-12));
}

TEST_CASE("penalized gradient matches central differences") {
  const sim::Scenario sc = sim::toy_scenario();
  const sim::GroundTruthModel truth(sc.truths);
  Rng rng(5);
  std::uniform_real_distribution<double> U(0.05, 0.95);
  for (int t = 0; t < 50; ++t) {
    ConfigMatrix x(2, 2);
    for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = U(rng);
    ConfigMatrix g;
    const double f = penalized_objective_gradient(sc.spec, x, truth, {}, g);
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      const double h = 1e-5;
      ConfigMatrix xp = x, xm = x;
      xp.data()[k] += h;
      xm.data()[k] -= h;
      const double fd =
          (penalized_objective(sc.spec, xp, truth) - penalized_objective(sc.spec, xm, truth)) / (2 * h);
      // Truncation plus the rounding floor of a difference quotient of |f|.
      CHECK(std::abs(g.data()[k] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)) + 1e-12 * std::abs(f) / h);
    }
  }
}

TEST_CASE("penalty curvature covers only slices that can become violated") {
  ProblemSpec s = make_spec(2, 2, 0.0, 1.0, 100.0);
  PerformanceJacobian jac;
  jac.values = Vector{{99.0, 50.0}};
  jac.gradients = ConfigMatrix(2, 2);
  jac.gradients << -10.0, -20.0, -10.0, -20.0;
  PenaltyWeights w;
  const Eigen::MatrixXd C = penalty_curvature(s, jac, w, 0.1);
  const Vector dv = jac.gradients.row(0).transpose();
  CHECK((C.block(0, 0, 2, 2) - 2.0 * w.c1 * dv * dv.transpose()).norm() < 1e-9);
  CHECK(C.block(2, 2, 2, 2).isZero());
  CHECK(C.block(0, 2, 2, 2).isZero());
}

TEST_CASE("clip examples and properties") {
  ProblemSpec s = make_spec(1, 3, 0.1, 1.0);
  ConfigMatrix x(1, 3);
  x << 0.5, 1.7, -0.3;
  const ConfigMatrix c = clip(s, x);
  CHECK(c(0, 0) == 0.5);
  CHECK(c(0, 1) == 1.0);
  CHECK(c(0, 2) == 0.1);
  CHECK(clip(s, c) == c);
  CHECK(clip(s, ConfigMatrix::Constant(1, 3, 0.4)) == ConfigMatrix::Constant(1, 3, 0.4));
}

TEST_CASE("ProblemSpec validation") {
  ProblemSpec s = make_spec(2, 2);
  CHECK_NOTHROW(s.validate());
  s.lower_bounds[0] = 2.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = make_spec(2, 2);
  s.cost_weights[1] = -1.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = make_spec(2, 2);
  s.thresholds = Vector{{1.0}};
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("ProblemSpec JSON round trip") {
  ProblemSpec s = make_spec(3, 2, 0.0, 1.0, 60.0);
  s.cost_weights = Vector{{0.123456789012345, 1.5}};
  s.threshold_sense[2] = ThresholdSense::kPerformance;
  s.slice_lower = Matrix::Constant(3, 2, 0.1);
  nlohmann::json j = s;
  const ProblemSpec back = j.get<ProblemSpec>();
  CHECK(back.slice_names == s.slice_names);
  CHECK(back.cost_weights == s.cost_weights);
  CHECK(back.thresholds == s.thresholds);
  CHECK(back.threshold_sense == s.threshold_sense);
  REQUIRE(back.slice_lower.has_value());
  CHECK(*back.slice_lower == *s.slice_lower);
  nlohmann::json bad = j;
  bad["sense"][0] = "throughput";
  CHECK_THROWS_AS(bad.get<ProblemSpec>(), ConfigError);
}
