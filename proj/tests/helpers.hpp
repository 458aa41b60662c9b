#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "inslicing/problem.hpp"
#include "inslicing/simulator.hpp"

namespace testing {

using inslicing::ConfigMatrix;
using inslicing::ProblemSpec;
using inslicing::Vector;

inline ProblemSpec make_spec(std::size_t slices, std::size_t resources, double lo = 0.0, double hi = 1.0,
                             double threshold = 100.0) {
  ProblemSpec s;
  for (std::size_t i = 0; i < slices; ++i) s.slice_names.push_back("s" + std::to_string(i));
  for (std::size_t r = 0; r < resources; ++r) s.resource_names.push_back("r" + std::to_string(r));
  const auto R = static_cast<Eigen::Index>(resources);
  s.cost_weights = Vector::Ones(R);
  s.lower_bounds = Vector::Constant(R, lo);
  s.upper_bounds = Vector::Constant(R, hi);
  s.thresholds = Vector::Constant(static_cast<Eigen::Index>(slices), threshold);
  s.threshold_sense.assign(slices, inslicing::ThresholdSense::kLatency);
  return s;
}

struct GridOptimum {
  double cost = std::numeric_limits<double>::infinity();
  ConfigMatrix x;
};

/// Brute force over a (steps+1)^(|I||R|) grid of the box using the noiseless truth.
inline GridOptimum grid_oracle(const inslicing::sim::Scenario& sc, int steps) {
  const auto& spec = sc.spec;
  const inslicing::sim::GroundTruthModel truth(sc.truths);
  const std::size_t d = spec.dimension();
  std::vector<int> idx(d, 0);
  GridOptimum best;
  const Eigen::Index R = static_cast<Eigen::Index>(spec.num_resources());
  ConfigMatrix x(static_cast<Eigen::Index>(spec.num_slices()), R);
  while (true) {
    for (std::size_t k = 0; k < d; ++k) {
      const auto i = static_cast<std::size_t>(k) / spec.num_resources();
      const auto r = static_cast<std::size_t>(k) % spec.num_resources();
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)) =
          spec.lower(i, r) + (spec.upper(i, r) - spec.lower(i, r)) * idx[k] / steps;
    }
    const double c = inslicing::total_cost(spec, x);
    if (c < best.cost && inslicing::check_feasibility(spec, x, truth).feasible) {
      best.cost = c;
      best.x = x;
    }
    std::size_t k = 0;
    while (k < d && ++idx[k] > steps) idx[k++] = 0;
    if (k == d) break;
  }
  return best;
}

}  // namespace testing
