#pragma once

// Slice-configuration problem: minimize the operator's resource cost subject to
// per-slice performance thresholds (C1), box bounds (C2) and shared capacity (C3).

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace inslicing {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Decision variables x(i, r): one row per slice, one column per resource.
/// Row-major so that the flattened genome index is i * |R| + r.
using ConfigMatrix = Matrix;

inline constexpr double kFeasibilityTolerance = 1e-6;

/// Canonical resource labels of the reference testbed.
inline const std::vector<std::string>& canonical_resource_names() {
  static const std::vector<std::string> names = {"bandwidth_ul",  "bandwidth_dl", "mcs_offset_ul",
                                                 "mcs_offset_dl", "backhaul_bw",  "cpu_ratio"};
  return names;
}

/// How a slice's raw performance relates to its threshold. Latency slices are
/// satisfied when latency <= Q; performance slices when value >= Q. Both are
/// mapped onto a satisfaction score that must be >= 0.
enum class ThresholdSense { kLatency, kPerformance };

struct ProblemSpec {
  std::vector<std::string> slice_names;
  std::vector<std::string> resource_names;
  Vector cost_weights;  // w_r
  Vector lower_bounds;  // L_r
  Vector upper_bounds;  // H_r, also the capacity in C3
  Vector thresholds;    // Q_i
  std::vector<ThresholdSense> threshold_sense;
  // Optional per-(slice, resource) box overrides, e.g. minimum shares for
  // latency-critical applications. Capacity in C3 always uses H_r.
  std::optional<Matrix> slice_lower;
  std::optional<Matrix> slice_upper;

  std::size_t num_slices() const { return slice_names.size(); }
  std::size_t num_resources() const { return resource_names.size(); }
  std::size_t dimension() const { return num_slices() * num_resources(); }

  double lower(std::size_t i, std::size_t r) const {
    return slice_lower ? (*slice_lower)(i, r) : lower_bounds[r];
  }
  double upper(std::size_t i, std::size_t r) const {
    return slice_upper ? (*slice_upper)(i, r) : upper_bounds[r];
  }

  /// Satisfaction score of slice i for raw performance p: >= 0 means C1 holds.
  double score(std::size_t i, double p) const {
    return threshold_sense[i] == ThresholdSense::kLatency ? thresholds[i] - p : p - thresholds[i];
  }

  /// Throws ConfigError when any structural invariant is broken.
  void validate() const;

  /// Keeps the first k slices.
  ProblemSpec prefix(std::size_t k) const;
};

/// Flattened box bounds of the whole configuration (length |I|*|R|).
struct Box {
  Vector lower;
  Vector upper;

  Eigen::Index size() const { return lower.size(); }
  Vector clip(const Vector& x) const { return x.cwiseMax(lower).cwiseMin(upper); }
  bool contains(const Vector& x, double tol = 0.0) const {
    return ((x - lower).array() >= -tol).all() && ((upper - x).array() >= -tol).all();
  }
};

Box box_of(const ProblemSpec& spec);

inline Eigen::Map<const Vector> flatten(const ConfigMatrix& x) { return {x.data(), x.size()}; }
ConfigMatrix unflatten(const ProblemSpec& spec, const Vector& genome);

/// Per-slice performance P(X_i): a learned surrogate or the ground truth.
class PerformanceModel {
 public:
  virtual ~PerformanceModel() = default;

  virtual std::size_t num_slices() const = 0;
  virtual double evaluate(std::size_t slice, const Eigen::Ref<const Vector>& x) const = 0;

  /// Value and d(value)/dx. The default uses central differences with step h.
  virtual double evaluate_with_gradient(std::size_t slice, const Eigen::Ref<const Vector>& x,
                                        Eigen::Ref<Vector> gradient) const;
  virtual bool has_analytic_gradient() const { return false; }

  double finite_difference_step = 1e-6;
};

/// Adapts plain callables; used by tests and analytic toy problems.
class FunctionPerformance : public PerformanceModel {
 public:
  using Fn = std::function<double(const Eigen::Ref<const Vector>&)>;

  explicit FunctionPerformance(std::vector<Fn> fns) : fns_(std::move(fns)) {}

  std::size_t num_slices() const override { return fns_.size(); }
  double evaluate(std::size_t slice, const Eigen::Ref<const Vector>& x) const override {
    return fns_.at(slice)(x);
  }

 private:
  std::vector<Fn> fns_;
};

struct FeasibilityReport {
  Vector performance;    // raw P(X_i)
  Vector c1_violations;  // per-slice threshold shortfall, performance units
  double c2_violation = 0.0;  // summed box excess
  Vector c3_violations;  // per-resource capacity excess
  bool feasible = false;

  double c1_total() const { return c1_violations.sum(); }
  double c3_total() const { return c3_violations.sum(); }
};

struct PenaltyWeights {
  double c1 = 1e3;
  double c2 = 1e3;
  double c3 = 1e3;
};

double total_cost(const ProblemSpec& spec, const ConfigMatrix& x);

FeasibilityReport check_feasibility(const ProblemSpec& spec, const ConfigMatrix& x,
                                    const PerformanceModel& perf);

/// Report from already-evaluated slice performances (no evaluator calls).
FeasibilityReport feasibility_from_performance(const ProblemSpec& spec, const ConfigMatrix& x,
                                               const Vector& performance);

/// total_cost + sum_k weight_k * violation_k^2; exactly total_cost on the feasible set.
double penalized_objective(const ProblemSpec& spec, const ConfigMatrix& x,
                           const PerformanceModel& perf, const PenaltyWeights& weights = {});
double penalized_objective(const ProblemSpec& spec, const ConfigMatrix& x,
                           const FeasibilityReport& report, const PenaltyWeights& weights);

/// Per-slice performance and d(performance)/dx_i at one configuration.
struct PerformanceJacobian {
  Vector values;
  ConfigMatrix gradients;  // row i: gradient of slice i's performance
};

/// Penalized objective and its gradient with respect to x (same shape as x).
/// When `jacobian` is given it receives the performance values and gradients.
double penalized_objective_gradient(const ProblemSpec& spec, const ConfigMatrix& x,
                                    const PerformanceModel& perf, const PenaltyWeights& weights,
                                    ConfigMatrix& gradient, PerformanceJacobian* jacobian = nullptr);

/// Gauss-Newton curvature of the performance penalty on the flattened
/// configuration: 2 c1 dv dv' per slice whose shortfall v can turn positive
/// within `radius` under the linearization (v + radius |dv| > 0).
Eigen::MatrixXd penalty_curvature(const ProblemSpec& spec, const PerformanceJacobian& jacobian,
                                  const PenaltyWeights& weights, double radius);

/// Elementwise clamp into the (per-slice) box. Idempotent.
ConfigMatrix clip(const ProblemSpec& spec, const ConfigMatrix& x);

/// Largest possible cost of any in-box configuration.
double max_box_cost(const ProblemSpec& spec);

ThresholdSense threshold_sense_from_string(const std::string& s);
std::string to_string(ThresholdSense sense);

void to_json(nlohmann::json& j, const ProblemSpec& spec);
void from_json(const nlohmann::json& j, ProblemSpec& spec);

}  // namespace inslicing
