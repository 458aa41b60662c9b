#pragma once

// Closed-form surrogate recovery: a trained network is reduced to a sum of
// per-input affine and sinusoidal terms plus a constant,
//   P(x) = sum_p a_p x_p + sum_k a_k sin(b_k x_{p_k} + c_k) + const.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "inslicing/kan.hpp"

namespace inslicing::symbolic {

enum class TermKind { kLinear, kSine, kConstant };

/// kLinear: a * x_p.  kSine: a * sin(b * x_p + c) with a > 0, b > 0, c in (-pi, pi].
/// kConstant: a.
struct Term {
  TermKind kind = TermKind::kConstant;
  std::size_t input = 0;
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
};

struct SymbolicExpression {
  std::vector<Term> terms;
  std::size_t input_dim = 0;
  double fit_rmse = 0.0;      // vs. the network, performance units
  double output_range = 0.0;  // max - min of the network over the fidelity sample
  bool low_fidelity = false;

  double evaluate(std::span<const double> x) const;
  double evaluate(const Eigen::Ref<const Vector>& x) const {
    return evaluate(std::span(x.data(), static_cast<std::size_t>(x.size())));
  }

  /// Terms of one kind, in stored order.
  std::vector<Term> terms_of(TermKind kind) const;

  /// "P(x) = -300.000000*x1 + 80.000000*sin(9.000000*x2 + 0.500000) + 400.000000".
  /// Inputs are 1-based in the text.
  std::string to_string(int precision = 6) const;
  /// Inverse of to_string. Throws ConfigError on malformed text.
  static SymbolicExpression parse(const std::string& text);
};

struct SymbolicOptions {
  int background_samples = 128;
  int grid_points = 101;
  int max_sines_per_input = 2;
  double min_residual_fraction = 0.01;  // of the output range, to try a sine
  double min_improvement = 0.5;         // sine kept only if RMSE drops to <= this fraction
  int fidelity_samples = 512;
  double low_fidelity_fraction = 0.05;  // of the output range
  std::uint64_t seed = 0;
};

/// Fits each input's main effect over the model's input domain and assembles the
/// expression. A poor fit is reported through low_fidelity, never thrown.
SymbolicExpression extract_symbolic(const kan::KanModel& model, const SymbolicOptions& options = {});

/// Affine plus greedy sines for samples (t, y) of a 1-D function. Returned terms
/// use input index 0; the intercept is returned separately.
struct CurveFit {
  std::vector<Term> terms;
  double intercept = 0.0;
  double rmse = 0.0;
};
CurveFit fit_curve(std::span<const double> t, std::span<const double> y, double output_range,
                   const SymbolicOptions& options = {});

}  // namespace inslicing::symbolic
