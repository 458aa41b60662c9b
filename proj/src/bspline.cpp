#include "inslicing/bspline.hpp"

#include <algorithm>
#include <array>
#include <cassert>

namespace inslicing::bspline {

namespace {
constexpr int kMaxDegree = 8;
}

std::vector<double> uniform_knots(double lo, double hi, int grid_count, int degree) {
  const double h = (hi - lo) / grid_count;
  std::vector<double> t(static_cast<std::size_t>(grid_count + 2 * degree + 1));
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = lo + (static_cast<int>(k) - degree) * h;
  return t;
}

int find_span(std::span<const double> knots, int degree, double x) {
  const int n = basis_count(knots.size(), degree);
  if (x >= knots[static_cast<std::size_t>(n)]) return n - 1;
  if (x <= knots[static_cast<std::size_t>(degree)]) return degree;
  const auto it = std::upper_bound(knots.begin() + degree, knots.begin() + n + 1, x);
  return static_cast<int>(it - knots.begin()) - 1;
}

void basis_functions(std::span<const double> t, int p, int s, double x, std::span<double> N) {
  assert(p <= kMaxDegree && N.size() >= static_cast<std::size_t>(p + 1));
  std::array<double, kMaxDegree + 1> left{}, right{};
  N[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[j] = x - t[static_cast<std::size_t>(s + 1 - j)];
    right[j] = t[static_cast<std::size_t>(s + j)] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = N[r] / (right[r + 1] + left[j - r]);
      N[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    N[j] = saved;
  }
}

void basis_functions_and_derivatives(std::span<const double> t, int p, int s, double x,
                                     std::span<double> N, std::span<double> dN) {
  if (p == 0) {
    N[0] = 1.0;
    dN[0] = 0.0;
    return;
  }
  // Degree p-1 basis on the same span gives the derivative:
  // N'_{i,p} = p/(t_{i+p}-t_i) N_{i,p-1} - p/(t_{i+p+1}-t_{i+1}) N_{i+1,p-1}.
  std::array<double, kMaxDegree + 1> lower{};
  basis_functions(t, p - 1, s, x, std::span<double>(lower.data(), static_cast<std::size_t>(p)));
  basis_functions(t, p, s, x, N);
  for (int k = 0; k <= p; ++k) {
    const int i = s - p + k;  // global basis index
    double d = 0.0;
    // N_{i,p-1} is lower[k-1], N_{i+1,p-1} is lower[k] (both zero outside 0..p-1).
    if (k >= 1) {
      const double den = t[static_cast<std::size_t>(i + p)] - t[static_cast<std::size_t>(i)];
      if (den > 0.0) d += p / den * lower[static_cast<std::size_t>(k - 1)];
    }
    if (k <= p - 1) {
      const double den = t[static_cast<std::size_t>(i + p + 1)] - t[static_cast<std::size_t>(i + 1)];
      if (den > 0.0) d -= p / den * lower[static_cast<std::size_t>(k)];
    }
    dN[static_cast<std::size_t>(k)] = d;
  }
}

}  // namespace inslicing::bspline
