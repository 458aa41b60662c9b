#pragma once

// Trust-region refinement: quadratic model m(s) = f + g's + s'Bs/2 minimized
// over ||s|| <= radius, with a BFGS-maintained B and ratio-driven radius.

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "inslicing/problem.hpp"

namespace inslicing::trm {

using Dense = Eigen::MatrixXd;

struct TrmParams {
  double initial_radius = 0.2;
  double max_radius = 1.0;
  int max_iterations = 25;
  double shrink = 0.25;
  double expand = 2.0;
  double eta = 0.05;           // minimum ratio for acceptance
  double fd_step = 1e-6;       // central-difference step when no analytic gradient exists
  double curvature_tol = 1e-12;  // BFGS update skipped when s'y is below this
  double gradient_tol = 1e-10;

  void validate() const;
};

/// f and, on request, its gradient.
struct Objective {
  std::function<double(const Vector&)> value;
  /// Returns f(x) and writes the gradient; when empty, central differences of
  /// `value` are used.
  std::function<double(const Vector&, Vector&)> value_and_gradient;
  /// Optional positive semidefinite curvature known in closed form at x for a
  /// trust radius; the model uses B + C and the secant update tracks only the
  /// remaining curvature. Called only at points whose gradient was just taken.
  std::function<Dense(const Vector&, double)> curvature;
};

struct TrustRegionState {
  Vector x;
  double radius = 0.0;
  Dense B;
  double f = 0.0;
  Vector grad;
};

Vector central_difference_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h);

/// Value and gradient at x; grad from the analytic callback when present.
/// Throws EvaluationError on a non-finite value.
double evaluate_with_gradient(const Objective& f, const Vector& x, double fd_step, Vector& grad);

/// BFGS update of B with step s and gradient change y. Returns false (B
/// untouched) when s'y <= tol.
bool bfgs_update(Dense& B, const Vector& s, const Vector& y, double tol = 1e-12);

/// m(s) - f, i.e. g's + s'Bs/2.
double model_change(const Vector& g, const Dense& B, const Vector& s);

/// Steepest-descent minimizer of the model inside the ball.
Vector cauchy_point(const Vector& g, const Dense& B, double radius);

/// Dogleg when B is positive definite, else the Cauchy point. Zero gradient
/// yields the zero step.
Vector solve_subproblem(const Vector& g, const Dense& B, double radius);

struct RadiusUpdate {
  double rho = 0.0;
  double radius = 0.0;
  bool accepted = false;
};

/// rho = actual / predicted. Throws SubproblemDegenerateError when predicted <= 0.
RadiusUpdate update_radius(double actual_reduction, double predicted_reduction, double radius, double step_norm,
                           const TrmParams& params);

struct IterationRecord {
  int k = 0;
  double f = 0.0;
  double radius = 0.0;
  double rho = 0.0;
  bool accepted = false;
};

struct RefineResult {
  Vector x;
  double f = 0.0;
  int iterations = 0;
  std::size_t value_evaluations = 0;
  std::size_t gradient_evaluations = 0;
  std::vector<IterationRecord> trace;
};

/// Up to max_iterations build/solve/update rounds from x_start. With a box,
/// coordinates on a bound whose gradient points outward are frozen and every
/// trial point is clipped. Accepted iterates never increase f.
RefineResult refine(const Objective& f, const Vector& x_start, const TrmParams& params,
                    const std::optional<Box>& box = std::nullopt);

}  // namespace inslicing::trm
