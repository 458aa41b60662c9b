#pragma once

#include <span>
#include <vector>

namespace inslicing::bspline {

/// Open uniform knot vector over [lo, hi]: grid_count intervals plus `degree`
/// extra knots on each side, size grid_count + 2*degree + 1.
std::vector<double> uniform_knots(double lo, double hi, int grid_count, int degree);

/// Number of basis functions for a knot vector of this size and degree.
inline int basis_count(std::size_t knot_count, int degree) {
  return static_cast<int>(knot_count) - degree - 1;
}

/// Span index s with t[s] <= x < t[s+1], restricted to [degree, n-1] where n is
/// the basis count; x at the right end of the domain maps to the last span.
int find_span(std::span<const double> knots, int degree, double x);

/// The degree+1 non-zero basis values N_{s-degree..s}(x) on span s.
void basis_functions(std::span<const double> knots, int degree, int span, double x,
                     std::span<double> values);

/// Non-zero basis values and their first derivatives on span s.
void basis_functions_and_derivatives(std::span<const double> knots, int degree, int span, double x,
                                     std::span<double> values, std::span<double> derivatives);

}  // namespace inslicing::bspline
