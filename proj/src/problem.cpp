#include "inslicing/problem.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "inslicing/error.hpp"
#include "inslicing/json_util.hpp"

namespace inslicing {

namespace {

void require_shape(const ProblemSpec& spec, const ConfigMatrix& x) {
  if (static_cast<std::size_t>(x.rows()) != spec.num_slices() ||
      static_cast<std::size_t>(x.cols()) != spec.num_resources()) {
    std::ostringstream os;
    os << "configuration is " << x.rows() << "x" << x.cols() << ", problem expects "
       << spec.num_slices() << "x" << spec.num_resources();
    throw ShapeError(os.str());
  }
}

double box_excess(double x, double lo, double hi) {
  return std::max(0.0, lo - x) + std::max(0.0, x - hi);
}

}  // namespace

void ProblemSpec::validate() const {
  const auto nr = static_cast<Eigen::Index>(num_resources());
  const auto ni = static_cast<Eigen::Index>(num_slices());
  if (ni < 1 || nr < 1) throw ConfigError("problem needs at least one slice and one resource");
  if (cost_weights.size() != nr || lower_bounds.size() != nr || upper_bounds.size() != nr)
    throw ConfigError("weights and bounds must have one entry per resource");
  if (thresholds.size() != ni || threshold_sense.size() != num_slices())
    throw ConfigError("thresholds and senses must have one entry per slice");
  for (Eigen::Index r = 0; r < nr; ++r) {
    if (!(cost_weights[r] >= 0.0)) throw ConfigError("cost weights must be non-negative");
    if (!(lower_bounds[r] >= 0.0 && lower_bounds[r] <= upper_bounds[r]))
      throw ConfigError("bounds must satisfy 0 <= L_r <= H_r");
  }
  if (!thresholds.allFinite()) throw ConfigError("thresholds must be finite");
  for (const auto* m : {&slice_lower, &slice_upper}) {
    if (*m && ((*m)->rows() != ni || (*m)->cols() != nr))
      throw ConfigError("per-slice bound override must be |I| x |R|");
  }
  for (std::size_t i = 0; i < num_slices(); ++i)
    for (std::size_t r = 0; r < num_resources(); ++r)
      if (!(lower(i, r) >= 0.0 && lower(i, r) <= upper(i, r)))
        throw ConfigError("per-slice bounds must satisfy 0 <= lower <= upper");
}

ProblemSpec ProblemSpec::prefix(std::size_t k) const {
  if (k < 1 || k > num_slices()) throw ConfigError("prefix size out of range");
  ProblemSpec out = *this;
  out.slice_names.resize(k);
  out.threshold_sense.resize(k);
  out.thresholds = thresholds.head(static_cast<Eigen::Index>(k));
  if (slice_lower) out.slice_lower = slice_lower->topRows(static_cast<Eigen::Index>(k));
  if (slice_upper) out.slice_upper = slice_upper->topRows(static_cast<Eigen::Index>(k));
  return out;
}

Box box_of(const ProblemSpec& spec) {
  const auto n = static_cast<Eigen::Index>(spec.dimension());
  Box box{Vector(n), Vector(n)};
  const std::size_t nr = spec.num_resources();
  for (std::size_t i = 0; i < spec.num_slices(); ++i) {
    for (std::size_t r = 0; r < nr; ++r) {
      const auto k = static_cast<Eigen::Index>(i * nr + r);
      box.lower[k] = spec.lower(i, r);
      box.upper[k] = spec.upper(i, r);
    }
  }
  return box;
}

ConfigMatrix unflatten(const ProblemSpec& spec, const Vector& genome) {
  if (static_cast<std::size_t>(genome.size()) != spec.dimension())
    throw ShapeError("genome length does not match |I|*|R|");
  return Eigen::Map<const ConfigMatrix>(genome.data(), static_cast<Eigen::Index>(spec.num_slices()),
                                        static_cast<Eigen::Index>(spec.num_resources()));
}

double PerformanceModel::evaluate_with_gradient(std::size_t slice,
                                                const Eigen::Ref<const Vector>& x,
                                                Eigen::Ref<Vector> gradient) const {
  const double h = finite_difference_step;
  Vector probe = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    probe[k] = x[k] + h;
    const double up = evaluate(slice, probe);
    probe[k] = x[k] - h;
    const double down = evaluate(slice, probe);
    probe[k] = x[k];
    gradient[k] = (up - down) / (2.0 * h);
  }
  return evaluate(slice, x);
}

double total_cost(const ProblemSpec& spec, const ConfigMatrix& x) {
  require_shape(spec, x);
  return (x * spec.cost_weights).sum();
}

FeasibilityReport feasibility_from_performance(const ProblemSpec& spec, const ConfigMatrix& x,
                                               const Vector& performance) {
  require_shape(spec, x);
  const auto ni = static_cast<Eigen::Index>(spec.num_slices());
  const auto nr = static_cast<Eigen::Index>(spec.num_resources());
  FeasibilityReport rep;
  rep.performance = performance;
  rep.c1_violations = Vector::Zero(ni);
  rep.c3_violations = Vector::Zero(nr);
  for (Eigen::Index i = 0; i < ni; ++i) {
    const auto si = static_cast<std::size_t>(i);
    rep.c1_violations[i] = std::max(0.0, -spec.score(si, performance[i]));
    for (Eigen::Index r = 0; r < nr; ++r)
      rep.c2_violation +=
          box_excess(x(i, r), spec.lower(si, static_cast<std::size_t>(r)),
                     spec.upper(si, static_cast<std::size_t>(r)));
  }
  const Vector usage = x.colwise().sum().transpose();
  rep.c3_violations = (usage - spec.upper_bounds).cwiseMax(0.0);
  rep.feasible = (rep.c1_violations.array() <= kFeasibilityTolerance).all() &&
                 rep.c2_violation <= kFeasibilityTolerance &&
                 (rep.c3_violations.array() <= kFeasibilityTolerance).all();
  return rep;
}

FeasibilityReport check_feasibility(const ProblemSpec& spec, const ConfigMatrix& x,
                                    const PerformanceModel& perf) {
  require_shape(spec, x);
  const auto ni = static_cast<Eigen::Index>(spec.num_slices());
  if (perf.num_slices() < spec.num_slices())
    throw ShapeError("performance model covers fewer slices than the problem");
  Vector p(ni);
  for (Eigen::Index i = 0; i < ni; ++i) {
    p[i] = perf.evaluate(static_cast<std::size_t>(i), x.row(i).transpose());
    if (!std::isfinite(p[i]))
      throw EvaluationError("non-finite performance for slice " + std::to_string(i));
  }
  return feasibility_from_performance(spec, x, p);
}

double penalized_objective(const ProblemSpec& spec, const ConfigMatrix& x,
                           const FeasibilityReport& rep, const PenaltyWeights& w) {
  double box_sq = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index r = 0; r < x.cols(); ++r) {
      const double e = box_excess(x(i, r), spec.lower(static_cast<std::size_t>(i), static_cast<std::size_t>(r)),
                                  spec.upper(static_cast<std::size_t>(i), static_cast<std::size_t>(r)));
      box_sq += e * e;
    }
  return total_cost(spec, x) + w.c1 * rep.c1_violations.squaredNorm() + w.c2 * box_sq +
         w.c3 * rep.c3_violations.squaredNorm();
}

double penalized_objective(const ProblemSpec& spec, const ConfigMatrix& x,
                           const PerformanceModel& perf, const PenaltyWeights& weights) {
  return penalized_objective(spec, x, check_feasibility(spec, x, perf), weights);
}

double penalized_objective_gradient(const ProblemSpec& spec, const ConfigMatrix& x,
                                    const PerformanceModel& perf, const PenaltyWeights& w,
                                    ConfigMatrix& gradient, PerformanceJacobian* jacobian) {
  require_shape(spec, x);
  const auto ni = static_cast<Eigen::Index>(spec.num_slices());
  const auto nr = static_cast<Eigen::Index>(spec.num_resources());
  gradient.resize(ni, nr);
  Vector p(ni);
  Vector dp(nr);
  if (jacobian) jacobian->gradients.resize(ni, nr);
  for (Eigen::Index i = 0; i < ni; ++i) {
    const auto si = static_cast<std::size_t>(i);
    p[i] = perf.evaluate_with_gradient(si, x.row(i).transpose(), dp);
    if (!std::isfinite(p[i]) || !dp.allFinite())
      throw EvaluationError("non-finite performance for slice " + std::to_string(i));
    if (jacobian) jacobian->gradients.row(i) = dp.transpose();
    gradient.row(i) = spec.cost_weights.transpose();
    const double shortfall = std::max(0.0, -spec.score(si, p[i]));
    if (shortfall > 0.0) {
      // d(shortfall)/dp is +1 for latency (shortfall = p - Q), -1 otherwise.
      const double sign = spec.threshold_sense[si] == ThresholdSense::kLatency ? 1.0 : -1.0;
      gradient.row(i) += (2.0 * w.c1 * shortfall * sign) * dp.transpose();
    }
    for (Eigen::Index r = 0; r < nr; ++r) {
      const double lo = spec.lower(si, static_cast<std::size_t>(r));
      const double hi = spec.upper(si, static_cast<std::size_t>(r));
      if (x(i, r) < lo) gradient(i, r) -= 2.0 * w.c2 * (lo - x(i, r));
      if (x(i, r) > hi) gradient(i, r) += 2.0 * w.c2 * (x(i, r) - hi);
    }
  }
  if (jacobian) jacobian->values = p;
  const auto rep = feasibility_from_performance(spec, x, p);
  for (Eigen::Index r = 0; r < nr; ++r)
    if (rep.c3_violations[r] > 0.0) gradient.col(r).array() += 2.0 * w.c3 * rep.c3_violations[r];
  return penalized_objective(spec, x, rep, w);
}

Eigen::MatrixXd penalty_curvature(const ProblemSpec& spec, const PerformanceJacobian& jacobian,
                                  const PenaltyWeights& w, double radius) {
  const auto ni = static_cast<Eigen::Index>(spec.num_slices());
  const auto nr = static_cast<Eigen::Index>(spec.num_resources());
  if (jacobian.values.size() != ni || jacobian.gradients.rows() != ni || jacobian.gradients.cols() != nr)
    throw ShapeError("performance jacobian does not match the problem");
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(ni * nr, ni * nr);
  for (Eigen::Index i = 0; i < ni; ++i) {
    const Vector dv = jacobian.gradients.row(i).transpose();
    const double v = -spec.score(static_cast<std::size_t>(i), jacobian.values[i]);
    if (v + radius * dv.norm() <= 0.0) continue;
    C.block(i * nr, i * nr, nr, nr) = 2.0 * w.c1 * dv * dv.transpose();
  }
  return C;
}

ConfigMatrix clip(const ProblemSpec& spec, const ConfigMatrix& x) {
  require_shape(spec, x);
  ConfigMatrix out = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index r = 0; r < x.cols(); ++r)
      out(i, r) = std::clamp(x(i, r), spec.lower(static_cast<std::size_t>(i), static_cast<std::size_t>(r)),
                             spec.upper(static_cast<std::size_t>(i), static_cast<std::size_t>(r)));
  return out;
}

double max_box_cost(const ProblemSpec& spec) {
  const Box box = box_of(spec);
  return total_cost(spec, unflatten(spec, box.upper));
}

ThresholdSense threshold_sense_from_string(const std::string& s) {
  if (s == "latency") return ThresholdSense::kLatency;
  if (s == "performance") return ThresholdSense::kPerformance;
  throw ConfigError("unknown threshold sense '" + s + "' (expected latency|performance)");
}

std::string to_string(ThresholdSense sense) {
  return sense == ThresholdSense::kLatency ? "latency" : "performance";
}

void to_json(nlohmann::json& j, const ProblemSpec& spec) {
  using namespace json_util;
  j = json::object();
  j["slices"] = spec.slice_names;
  j["resources"] = spec.resource_names;
  j["weights"] = vector_to_json(spec.cost_weights);
  json bounds = {{"lower", vector_to_json(spec.lower_bounds)},
                 {"upper", vector_to_json(spec.upper_bounds)}};
  if (spec.slice_lower) bounds["slice_lower"] = matrix_to_json(*spec.slice_lower);
  if (spec.slice_upper) bounds["slice_upper"] = matrix_to_json(*spec.slice_upper);
  j["bounds"] = std::move(bounds);
  j["thresholds"] = vector_to_json(spec.thresholds);
  std::vector<std::string> sense;
  for (auto s : spec.threshold_sense) sense.push_back(to_string(s));
  j["sense"] = sense;
}

void from_json(const nlohmann::json& j, ProblemSpec& spec) {
  using namespace json_util;
  try {
    spec = ProblemSpec{};
    spec.slice_names = j.at("slices").get<std::vector<std::string>>();
    spec.resource_names = j.at("resources").get<std::vector<std::string>>();
    spec.cost_weights = vector_from_json(j.at("weights"), "weights");
    const json& b = j.at("bounds");
    spec.lower_bounds = vector_from_json(b.at("lower"), "bounds.lower");
    spec.upper_bounds = vector_from_json(b.at("upper"), "bounds.upper");
    if (b.contains("slice_lower")) spec.slice_lower = matrix_from_json<Matrix>(b["slice_lower"], "bounds.slice_lower");
    if (b.contains("slice_upper")) spec.slice_upper = matrix_from_json<Matrix>(b["slice_upper"], "bounds.slice_upper");
    spec.thresholds = vector_from_json(j.at("thresholds"), "thresholds");
    for (const auto& s : j.at("sense")) spec.threshold_sense.push_back(threshold_sense_from_string(s.get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("ProblemSpec: ") + e.what());
  }
  spec.validate();
}

}  // namespace inslicing
