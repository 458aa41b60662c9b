#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "inslicing/error.hpp"
#include "inslicing/problem.hpp"
#include "inslicing/rng.hpp"
#include "inslicing/simulator.hpp"
#include "inslicing/trust_region.hpp"

using namespace inslicing;
using namespace inslicing::trm;

namespace {

Dense random_pd(Rng& rng, int n) {
  std::normal_distribution<double> N(0.0, 1.0);
  Dense M(n, n);
  for (Eigen::Index k = 0; k < M.size(); ++k) M.data()[k] = N(rng);
  return M * M.transpose() + 0.1 * Dense::Identity(n, n);
}

Objective rosenbrock() {
  Objective f;
  f.value = [](const Vector& x) { return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2); };
  f.value_and_gradient = [](const Vector& x, Vector& g) {
    g.resize(2);
    g[0] = -400.0 * x[0] * (x[1] - x[0] * x[0]) - 2.0 * (1.0 - x[0]);
    g[1] = 200.0 * (x[1] - x[0] * x[0]);
    return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2);
  };
  return f;
}

Objective quadratic(const Dense& A, const Vector& b) {
  Objective f;
  f.value = [A, b](const Vector& x) { return 0.5 * x.dot(A * x) - b.dot(x); };
  f.value_and_gradient = [A, b](const Vector& x, Vector& g) {
    g = A * x - b;
    return 0.5 * x.dot(A * x) - b.dot(x);
  };
  return f;
}

}  // namespace

TEST_CASE("dogleg inside the ball takes the Newton step") {
  const Vector s = solve_subproblem(Vector{{1.0, 0.0}}, Dense::Identity(2, 2), 10.0);
  CHECK(s.isApprox(Vector{{-1.0, 0.0}}, 1e-15));
}

TEST_CASE("dogleg clamps to the boundary") {
  const Vector s = solve_subproblem(Vector{{1.0, 0.0}}, Dense::Identity(2, 2), 0.5);
  CHECK(s.isApprox(Vector{{-0.5, 0.0}}, 1e-15));
}

TEST_CASE("zero gradient yields the zero step") {
  CHECK(solve_subproblem(Vector::Zero(3), Dense::Identity(3, 3), 1.0).isZero());
}

TEST_CASE("dogleg against a 10^4-point sample of the ball") {
  Rng rng(1);
  std::normal_distribution<double> N(0.0, 1.0);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto best_sample = [&](const Vector& g, const Dense& B, double radius) {
    double best = 0.0;
    for (int k = 0; k < 10000; ++k) {
      Vector d(g.size());
      for (auto& v : d) v = N(rng);
      d *= radius * std::pow(U(rng), 1.0 / static_cast<double>(g.size())) / d.norm();
      best = std::min(best, model_change(g, B, d));
    }
    return best;
  };
  for (int t = 0; t < 20; ++t) {
    const int n = 2 + t % 2;
    Vector g(n);
    for (auto& v : g) v = N(rng);
    const double radius = 0.1 + U(rng);
    SUBCASE("scaled identity: the dogleg path is the exact minimizer") {
      const Dense B = (0.5 + U(rng)) * Dense::Identity(n, n);
      const Vector s = solve_subproblem(g, B, radius);
      CHECK(model_change(g, B, s) <= best_sample(g, B, radius));
    }
    SUBCASE("interior Newton step is the global minimizer") {
      const Dense B = random_pd(rng, n);
      const Vector newton = -B.llt().solve(g);
      const double r = newton.norm() * (1.0 + U(rng));
      const Vector s = solve_subproblem(g, B, r);
      CHECK(model_change(g, B, s) <= best_sample(g, B, r));
    }
    SUBCASE("general positive definite model") {
      const Dense B = random_pd(rng, n);
      const Vector s = solve_subproblem(g, B, radius);
      const double ms = model_change(g, B, s);
      CHECK(s.norm() <= radius * (1 + 1e-12));
      CHECK(ms <= model_change(g, B, cauchy_point(g, B, radius)) + 1e-12);
      // Dogleg is an approximate solver: it secures at least half the best sampled decrease.
      CHECK(ms <= 0.5 * best_sample(g, B, radius));
    }
  }
}

TEST_CASE("step norm never exceeds the radius, indefinite models included") {
  Rng rng(2);
  std::normal_distribution<double> N(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const int n = 4;
    Dense B(n, n);
    for (Eigen::Index k = 0; k < B.size(); ++k) B.data()[k] = N(rng);
    B = 0.5 * (B + B.transpose());
    Vector g(n);
    for (auto& v : g) v = N(rng);
    const double radius = std::exp(N(rng));
    const Vector s = solve_subproblem(g, B, radius);
    CHECK(s.norm() <= radius * (1 + 1e-12));
    CHECK(model_change(g, B, s) <= 0.0);
  }
}

TEST_CASE("BFGS converges to the quadratic's Hessian") {
  Rng rng(3);
  const Dense A = random_pd(rng, 4);
  // Conjugate steps reproduce A exactly after one update per dimension.
  const Eigen::SelfAdjointEigenSolver<Dense> eig(A);
  Dense B = Dense::Identity(4, 4);
  double prev = (B - A).norm();
  for (int k = 0; k < 4; ++k) {
    const Vector s = 0.3 * eig.eigenvectors().col(k);
    CHECK(bfgs_update(B, s, A * s));
    CHECK((B - B.transpose()).norm() < 1e-9 * B.norm());
    const double d = (B - A).norm();
    CHECK(d < prev);
    prev = d;
  }
  CHECK(prev < 1e-10 * A.norm());
  // Generic steps: the distance still shrinks overall.
  B = Dense::Identity(4, 4);
  std::normal_distribution<double> N(0.0, 1.0);
  const double start = (B - A).norm();
  for (int k = 0; k < 200; ++k) {
    Vector s(4);
    for (auto& v : s) v = N(rng);
    bfgs_update(B, s, A * s);
  }
  CHECK((B - A).norm() < 1e-2 * start);
}

TEST_CASE("linear objective keeps the identity model") {
  Dense B = Dense::Identity(2, 2);
  CHECK_FALSE(bfgs_update(B, Vector{{0.3, -0.1}}, Vector::Zero(2)));
  CHECK(B == Dense::Identity(2, 2));
}

TEST_CASE("radius rules") {
  const TrmParams p;
  const auto exact = update_radius(1.0, 1.0, 0.2, 0.2, p);
  CHECK(exact.rho == 1.0);
  CHECK(exact.accepted);
  CHECK(exact.radius == 0.4);
  const auto interior = update_radius(1.0, 1.0, 0.2, 0.1, p);
  CHECK(interior.accepted);
  CHECK(interior.radius == 0.2);
  const auto ascent = update_radius(-0.5, 1.0, 0.2, 0.2, p);
  CHECK(ascent.rho < 0.0);
  CHECK_FALSE(ascent.accepted);
  CHECK(ascent.radius == doctest::Approx(0.05));
  const auto weak = update_radius(0.1, 1.0, 0.2, 0.2, p);
  CHECK(weak.accepted);
  CHECK(weak.radius == doctest::Approx(0.05));
  CHECK(update_radius(10.0, 1.0, 0.8, 0.8, p).radius == p.max_radius);
  CHECK_THROWS_AS(update_radius(1.0, 0.0, 0.2, 0.2, p), SubproblemDegenerateError);
}

TEST_CASE("Rosenbrock from (-1.2, 1) converges to (1, 1)") {
  TrmParams p;
  p.max_iterations = 500;
  const auto r = refine(rosenbrock(), Vector{{-1.2, 1.0}}, p);
  CHECK((r.x - Vector{{1.0, 1.0}}).norm() < 1e-6);
  CHECK(r.iterations <= 500);
  double last = std::numeric_limits<double>::infinity();
  for (const auto& rec : r.trace) {
    CHECK(rec.f <= last);
    last = rec.f;
  }
}

TEST_CASE("convex quadratic inside the box reaches its minimizer") {
  Rng rng(4);
  const Dense A = random_pd(rng, 4);
  const Vector xstar{{0.3, 0.6, 0.4, 0.5}};
  const Vector b = A * xstar;
  TrmParams p;
  p.max_iterations = 200;
  const Box box{Vector::Zero(4), Vector::Ones(4)};
  const auto r = refine(quadratic(A, b), Vector::Constant(4, 0.9), p, box);
  CHECK((r.x - xstar).norm() < 1e-6);
}

TEST_CASE("a local minimum is returned unchanged") {
  const Dense A = Dense::Identity(2, 2);
  const Vector xstar{{0.5, 0.5}};
  const auto r = refine(quadratic(A, xstar), xstar, TrmParams{});
  CHECK(r.x == xstar);
  CHECK(r.iterations == 0);
}

TEST_CASE("finite-difference gradients match an independent difference") {
  const auto f = rosenbrock();
  Objective value_only;
  value_only.value = f.value;
  Rng rng(5);
  std::uniform_real_distribution<double> U(-1.5, 1.5);
  for (int t = 0; t < 50; ++t) {
    const Vector x{{U(rng), U(rng)}};
    Vector g, exact;
    evaluate_with_gradient(value_only, x, 1e-6, g);
    f.value_and_gradient(x, exact);
    CHECK((g - exact).norm() <= 1e-4 * std::max(1.0, exact.norm()));
  }
}

TEST_CASE("non-finite objective values are rejected") {
  Objective f;
  f.value = [](const Vector&) { return std::nan(""); };
  Vector g;
  CHECK_THROWS_AS(evaluate_with_gradient(f, Vector::Zero(2), 1e-6, g), EvaluationError);
}

TEST_CASE("refine never increases the penalized surrogate objective") {
  const auto sc = sim::generate_scenario(3, 6, 2);
  const sim::GroundTruthModel truth(sc.truths);
  const Box box = box_of(sc.spec);
  Objective f;
  f.value = [&](const Vector& x) { return penalized_objective(sc.spec, unflatten(sc.spec, x), truth); };
  f.value_and_gradient = [&](const Vector& x, Vector& g) {
    ConfigMatrix G;
    const double v = penalized_objective_gradient(sc.spec, unflatten(sc.spec, x), truth, {}, G);
    g = flatten(G);
    return v;
  };
  Rng rng(6);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    Vector x0(box.size());
    for (auto& v : x0) v = U(rng);
    const auto r = refine(f, x0, TrmParams{}, box);
    CHECK(r.f <= f.value(x0));
    CHECK(r.f == f.value(r.x));
    CHECK(box.contains(r.x));
  }
}

TEST_CASE("closed-form curvature is added to the model") {
  Dense A(2, 2);
  A << 50.0, 10.0, 10.0, 4.0;
  const Vector xstar{{0.2, -0.1}};
  Objective f = quadratic(A, A * xstar);
  f.curvature = [A](const Vector&, double) { return A; };
  TrmParams p;
  p.max_iterations = 1;
  const Vector x0 = Vector::Zero(2);
  Vector g0;
  f.value_and_gradient(x0, g0);
  const Vector s = solve_subproblem(g0, Dense::Identity(2, 2) + A, p.initial_radius);
  const auto one = refine(f, x0, p);
  CHECK((one.x - (x0 + s)).norm() < 1e-14);
  p.max_iterations = 100;
  const auto many = refine(f, x0, p);
  CHECK((many.x - xstar).norm() < 1e-6);
}

TEST_CASE("parameter validation") {
  TrmParams p;
  CHECK_NOTHROW(p.validate());
  p.shrink = 1.5;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = TrmParams{};
  p.eta = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = TrmParams{};
  p.initial_radius = 2.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}
