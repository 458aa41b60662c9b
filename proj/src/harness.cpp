#include "inslicing/harness.hpp"

#include <algorithm>
#include <chrono>
#include <climits>
#include <cmath>

#include "inslicing/error.hpp"
#include "inslicing/rng.hpp"

namespace inslicing::harness {

namespace {

enum Stream : std::uint64_t {
  kGaStream = 0x68790001,
  kGboStream,
  kGboNoiseStream,
  kDataStream,
  kInitStream,
  kShuffleStream
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::kInSlicing:
      return "inslicing";
    case Method::kGaOnly:
      return "ga-only";
    case Method::kGbo:
      return "gbo";
  }
  return "inslicing";
}

Method method_from_string(const std::string& s) {
  if (s == "inslicing" || s == "hybrid") return Method::kInSlicing;
  if (s == "ga-only" || s == "ga") return Method::kGaOnly;
  if (s == "gbo") return Method::kGbo;
  throw ConfigError("unknown method '" + s + "' (expected inslicing, ga-only or gbo)");
}

void HybridParams::validate() const {
  ga.validate();
  trm.validate();
  // Offspring per generation are population_size - 1 behind the elite.
  if (ga.population_size < 2) throw ConfigError("ga.population_size must be >= 2 for a run");
  if (trm_interval < 1) throw ConfigError("trm_interval must be >= 1");
  if (budget_secs <= 0.0 && budget_evals < static_cast<std::size_t>(ga.population_size))
    throw ConfigError("evaluation budget must cover the initial population");
  if (restore_bisections < 1) throw ConfigError("restore_bisections must be >= 1");
}

int HybridParams::affordable_generations(bool with_refinement) const {
  const auto pop = static_cast<std::size_t>(ga.population_size);
  if (budget_evals <= pop) return 1;
  const std::size_t rest = budget_evals - pop;
  const auto n = static_cast<std::size_t>(trm_interval);
  std::size_t per_block = n * (pop - 1);
  if (with_refinement) per_block += refinement_allowance();
  const std::size_t generations = rest * n / per_block + ((rest * n) % per_block != 0);
  return static_cast<int>(std::clamp<std::size_t>(generations, 1, INT_MAX - 1));
}

std::size_t HybridParams::refinement_allowance() const {
  return 2 * static_cast<std::size_t>(trm.max_iterations) + 2 + 2 * static_cast<std::size_t>(restore_bisections) + 4;
}

void finalize_reported_costs(RunTrace& trace, const ProblemSpec& spec) {
  double cap = std::min(trace.initial_penalized, max_box_cost(spec));
  auto first = std::find_if(trace.rows.begin(), trace.rows.end(), [](const TraceRow& r) { return r.feasible; });
  if (first != trace.rows.end()) cap = std::max(cap, first->best_cost);
  for (auto& r : trace.rows) r.reported_cost = r.feasible ? r.best_cost : cap;
  if (!trace.feasible) trace.final_cost = cap;
}

Restoration restore_feasibility(const ProblemSpec& spec, const PerformanceModel& surrogates, const Vector& start,
                                const Vector& target, int bisections) {
  const ConfigMatrix X0 = unflatten(spec, start);
  const ConfigMatrix XT = unflatten(spec, target);
  ConfigMatrix Y = XT;
  const std::size_t I = spec.num_slices();
  std::size_t slice_checks = 0;
  std::size_t full_checks = 0;
  Vector perf(static_cast<Eigen::Index>(I));

  auto slice_ok = [&](std::size_t i, const Vector& row, double& p) {
    ++slice_checks;
    p = surrogates.evaluate(i, row);
    return std::isfinite(p) && spec.score(i, p) >= -kFeasibilityTolerance;
  };

  for (std::size_t i = 0; i < I; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const Vector r0 = X0.row(ii).transpose();
    const Vector d = XT.row(ii).transpose() - r0;
    double p = 0.0;
    if (slice_ok(i, r0 + d, p)) {
      perf[ii] = p;
      continue;
    }
    double lo = 0.0, hi = 1.0, p_lo = std::numeric_limits<double>::quiet_NaN();
    for (int b = 0; b < bisections; ++b) {
      const double mid = 0.5 * (lo + hi);
      if (slice_ok(i, r0 + mid * d, p)) {
        lo = mid;
        p_lo = p;
      } else {
        hi = mid;
      }
    }
    Y.row(ii) = (r0 + lo * d).transpose();
    if (lo == 0.0) {
      ++slice_checks;
      p_lo = surrogates.evaluate(i, r0);
    }
    perf[ii] = p_lo;
  }

  Restoration out;
  FeasibilityReport rep = feasibility_from_performance(spec, Y, perf);
  if (!rep.feasible && rep.c1_total() <= kFeasibilityTolerance) {
    // C3 / box only: step back along the segment from the start; C1 is
    // re-checked at every candidate since it is not convex in t.
    const Vector y = flatten(Y);
    const Vector d = y - start;
    Vector used0 = X0.colwise().sum().transpose();
    Vector used1 = Y.colwise().sum().transpose();
    double t_max = 1.0;
    for (Eigen::Index r = 0; r < used0.size(); ++r) {
      const double cap = spec.upper_bounds[r];
      if (used1[r] > cap + kFeasibilityTolerance && used1[r] > used0[r])
        t_max = std::min(t_max, (cap - used0[r]) / (used1[r] - used0[r]));
    }
    t_max = std::max(0.0, t_max);
    double lo = 0.0, hi = t_max;
    auto full_check = [&](double t) {
      ++full_checks;
      const ConfigMatrix Z = unflatten(spec, start + t * d);
      return check_feasibility(spec, Z, surrogates).feasible;
    };
    if (full_check(t_max)) {
      lo = t_max;
    } else {
      for (int b = 0; b < bisections; ++b) {
        const double mid = 0.5 * (lo + hi);
        if (full_check(mid))
          lo = mid;
        else
          hi = mid;
      }
    }
    Y = unflatten(spec, start + lo * d);
    rep.feasible = true;  // lo was verified, or is 0, the feasible start
  }
  out.x = flatten(Y);
  out.feasible = rep.feasible;
  if (!out.feasible) out.x = start;
  out.evaluations = (slice_checks + I - 1) / I + full_checks;
  return out;
}

namespace {

/// Upper bound on restoration cost, in evaluations.
std::size_t restoration_allowance(int bisections) { return 2 * static_cast<std::size_t>(bisections) + 4; }

RunTrace run_ga_family(const sim::Scenario& sc, const PerformanceModel& surrogates, const HybridParams& params,
                       std::uint64_t seed, Method method) {
  params.validate();
  const ProblemSpec& spec = sc.spec;
  if (surrogates.num_slices() != spec.num_slices()) throw ShapeError("surrogate count does not match the scenario");
  const auto t0 = Clock::now();
  const bool timed = params.budget_secs > 0.0;
  const std::size_t budget = timed ? std::numeric_limits<std::size_t>::max() : params.budget_evals;

  ga::GaParams gp = params.ga;
  gp.rng_seed = derive_seed(seed, {kGaStream});
  if (!timed) gp.total_generations = params.affordable_generations(method == Method::kInSlicing);
  const Box box = box_of(spec);

  RunTrace trace;
  trace.method = method;
  trace.seed = seed;
  trace.num_slices = spec.num_slices();

  ga::GaState state = ga::init_population(gp, spec);
  ga::evaluate(state, spec, surrogates, params.penalty, budget);
  trace.initial_penalized = std::numeric_limits<double>::infinity();
  for (const auto& ind : state.population)
    if (ind.evaluated) trace.initial_penalized = std::min(trace.initial_penalized, ind.penalized);

  auto push = [&](const char* phase) {
    TraceRow r;
    r.iteration = trace.rows.size();
    r.evaluations = state.evaluations;
    r.phase = phase;
    r.best_cost = state.best_fitness();
    r.feasible = state.has_best();
    trace.rows.push_back(r);
  };
  auto exhausted = [&] {
    return state.evaluations >= budget || (timed && seconds_since(t0) >= params.budget_secs);
  };
  push("ga");

  trm::Objective objective;
  objective.value = [&](const Vector& x) {
    return penalized_objective(spec, unflatten(spec, x), surrogates, params.penalty);
  };
  PerformanceJacobian jac;
  Vector jac_at;
  objective.value_and_gradient = [&](const Vector& x, Vector& g) {
    ConfigMatrix G;
    const double v = penalized_objective_gradient(spec, unflatten(spec, x), surrogates, params.penalty, G, &jac);
    jac_at = x;
    g = flatten(G);
    return v;
  };
  if (params.penalty_curvature) {
    objective.curvature = [&](const Vector& x, double radius) {
      if (jac_at.size() != x.size() || jac_at != x) {
        ConfigMatrix G;
        penalized_objective_gradient(spec, unflatten(spec, x), surrogates, params.penalty, G, &jac);
        jac_at = x;
        ++state.evaluations;
      }
      return penalty_curvature(spec, jac, params.penalty, radius);
    };
  }

  while (!exhausted()) {
    const int g = state.generation;
    if (method == Method::kInSlicing && g > 0 && g % params.trm_interval == 0 && state.has_best()) {
      const std::size_t remaining = budget - state.evaluations;
      const std::size_t reserve = 2 + restoration_allowance(params.restore_bisections);
      trm::TrmParams tp = params.trm;
      if (remaining > reserve)
        tp.max_iterations = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(tp.max_iterations),
                                                                    (remaining - reserve) / 2));
      else
        tp.max_iterations = 0;
      if (tp.max_iterations > 0) {
        ++trace.trm_invocations;
        const Vector start = state.best->genome;
        try {
          const trm::RefineResult rr = trm::refine(objective, start, tp, box);
          state.evaluations += rr.value_evaluations + rr.gradient_evaluations;
          const Restoration rs = restore_feasibility(spec, surrogates, start, rr.x, params.restore_bisections);
          state.evaluations += rs.evaluations;
          if (rs.feasible) {
            ga::Individual cand;
            cand.genome = rs.x;
            cand.fitness = total_cost(spec, unflatten(spec, rs.x));
            cand.penalized = cand.fitness;
            cand.feasible = true;
            cand.evaluated = true;
            if (ga::offer_best(state, cand)) ++trace.trm_improvements;
          }
        } catch (const EvaluationError&) {
          // A non-finite surrogate region ends this refinement; X_best is kept.
        }
        push("trm");
        if (exhausted()) break;
      }
    }
    ga::step_generation(state, gp, spec, surrogates, params.penalty, budget - std::min(budget, state.evaluations));
    push("ga");
  }

  trace.evaluations = state.evaluations;
  trace.feasible = state.has_best();
  if (state.best) {
    trace.best_genome = state.best->genome;
    trace.final_cost = state.best->fitness;
  } else {
    trace.best_genome = state.top().genome;
  }
  finalize_reported_costs(trace, spec);
  trace.wall_seconds = seconds_since(t0);
  return trace;
}

}  // namespace

RunTrace run_inslicing(const sim::Scenario& scenario, const PerformanceModel& surrogates, const HybridParams& params,
                       std::uint64_t seed) {
  return run_ga_family(scenario, surrogates, params, seed, Method::kInSlicing);
}

RunTrace run_ga_only(const sim::Scenario& scenario, const PerformanceModel& surrogates, HybridParams params,
                     std::uint64_t seed) {
  return run_ga_family(scenario, surrogates, params, seed, Method::kGaOnly);
}

RunTrace run_gbo(const sim::Scenario& sc, const GboRunParams& params, std::uint64_t seed) {
  const ProblemSpec& spec = sc.spec;
  const auto t0 = Clock::now();
  const std::size_t I = spec.num_slices();
  const std::uint64_t noise_seed = derive_seed(seed, {kGboNoiseStream});
  gbo::BlackBox f = [&](const Vector& x, std::size_t index) {
    const ConfigMatrix X = unflatten(spec, x);
    Vector perf(static_cast<Eigen::Index>(I));
    for (std::size_t i = 0; i < I; ++i)
      perf[static_cast<Eigen::Index>(i)] = sim::query(sc.truths[i], X.row(static_cast<Eigen::Index>(i)).transpose(),
                                                      derive_seed(noise_seed, {index, i}));
    const FeasibilityReport rep = feasibility_from_performance(spec, X, perf);
    return gbo::Observation{penalized_objective(spec, X, rep, params.penalty), total_cost(spec, X), rep.feasible};
  };
  gbo::GboParams gp = params.gbo;
  gp.rng_seed = derive_seed(seed, {kGboStream});
  gp.design_fraction = resolve_domain_fraction(I, params.domain_fraction);
  const gbo::GboResult res = gbo::gbo_optimize(box_of(spec), f, gp);

  RunTrace trace;
  trace.method = Method::kGbo;
  trace.seed = seed;
  trace.num_slices = I;
  trace.initial_penalized = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < res.trace.size(); ++k) {
    const auto& t = res.trace[k];
    if (k < static_cast<std::size_t>(gp.initial_samples))
      trace.initial_penalized = std::min(trace.initial_penalized, t.penalized);
    TraceRow r;
    r.iteration = k;
    r.evaluations = k + 1;
    r.phase = "gbo";
    r.best_cost = t.best_cost;
    r.feasible = std::isfinite(t.best_cost);
    trace.rows.push_back(r);
  }
  trace.best_genome = res.best_x;
  trace.feasible = res.feasible;
  trace.final_cost = res.feasible ? res.best_cost : 0.0;
  trace.evaluations = res.trace.size();
  trace.ground_truth_queries = res.trace.size() * I;
  finalize_reported_costs(trace, spec);
  trace.wall_seconds = seconds_since(t0);
  return trace;
}

void validate_on_ground_truth(RunTrace& trace, const sim::Scenario& sc, const PerformanceModel* surrogates) {
  const ProblemSpec& spec = sc.spec;
  if (trace.best_genome.size() != static_cast<Eigen::Index>(spec.dimension())) {
    trace.validated = false;
    return;
  }
  const ConfigMatrix X = unflatten(spec, trace.best_genome);
  const sim::GroundTruthModel truth(sc.truths);
  const FeasibilityReport rep = check_feasibility(spec, X, truth);
  trace.validated = true;
  trace.truth_feasible = rep.feasible;
  trace.truth_latency = rep.performance;
  trace.c1_violations = 0;
  trace.max_c1_shortfall = 0.0;
  for (Eigen::Index i = 0; i < rep.c1_violations.size(); ++i) {
    if (rep.c1_violations[i] > kFeasibilityTolerance) ++trace.c1_violations;
    trace.max_c1_shortfall = std::max(trace.max_c1_shortfall, rep.c1_violations[i]);
  }
  trace.c3_excess = rep.c3_total() + rep.c2_violation;
  const auto I = static_cast<Eigen::Index>(spec.num_slices());
  trace.normalized_performance.resize(I);
  for (Eigen::Index i = 0; i < I; ++i) {
    const double p = rep.performance[i];
    const double q = spec.thresholds[i];
    trace.normalized_performance[i] =
        spec.threshold_sense[static_cast<std::size_t>(i)] == ThresholdSense::kLatency ? q / p : p / q;
  }
  trace.max_surrogate_error = 0.0;
  trace.surrogate_latency.resize(0);
  if (surrogates) {
    trace.surrogate_latency.resize(I);
    for (Eigen::Index i = 0; i < I; ++i) {
      trace.surrogate_latency[i] = surrogates->evaluate(static_cast<std::size_t>(i), X.row(i).transpose());
      trace.max_surrogate_error =
          std::max(trace.max_surrogate_error, std::abs(trace.surrogate_latency[i] - rep.performance[i]));
    }
  }
}

double compute_regret(const std::vector<double>& costs, double optimum) {
  if (costs.empty()) throw ConfigError("regret needs a non-empty trace");
  double sum = 0.0;
  for (double c : costs) sum += c - optimum;
  return sum / static_cast<double>(costs.size());
}

double compute_regret(const RunTrace& trace, double optimum) {
  std::vector<double> costs;
  costs.reserve(trace.rows.size());
  for (const auto& r : trace.rows) costs.push_back(r.reported_cost);
  return compute_regret(costs, optimum);
}

std::vector<CdfPoint> normalized_performance_cdf(const std::vector<const RunTrace*>& traces) {
  std::vector<double> v;
  for (const auto* t : traces)
    if (t && t->validated)
      for (Eigen::Index i = 0; i < t->normalized_performance.size(); ++i) v.push_back(t->normalized_performance[i]);
  std::sort(v.begin(), v.end());
  std::vector<CdfPoint> out;
  out.reserve(v.size());
  for (std::size_t k = 0; k < v.size(); ++k)
    out.push_back({v[k], static_cast<double>(k + 1) / static_cast<double>(v.size())});
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double resolve_domain_fraction(std::size_t num_slices, double domain_fraction) {
  if (domain_fraction < 0.0 || domain_fraction > 1.0) throw ConfigError("domain_fraction must be in [0, 1]");
  return domain_fraction > 0.0 ? domain_fraction : std::min(1.0, 3.0 / static_cast<double>(num_slices));
}

Box surrogate_domain(const ProblemSpec& spec, std::size_t slice, double domain_fraction) {
  const double f = resolve_domain_fraction(spec.num_slices(), domain_fraction);
  const auto R = static_cast<Eigen::Index>(spec.num_resources());
  Box box{Vector(R), Vector(R)};
  for (Eigen::Index r = 0; r < R; ++r) {
    box.lower[r] = spec.lower(slice, static_cast<std::size_t>(r));
    box.upper[r] = box.lower[r] + f * (spec.upper(slice, static_cast<std::size_t>(r)) - box.lower[r]);
  }
  return box;
}

TrainedSurrogates train_surrogates(const sim::Scenario& sc, const SurrogateConfig& cfg) {
  const ProblemSpec& spec = sc.spec;
  TrainedSurrogates out;
  for (std::size_t i = 0; i < spec.num_slices(); ++i) {
    const Box dom = surrogate_domain(spec, i, cfg.domain_fraction);
    const Vector& lo = dom.lower;
    const Vector& hi = dom.upper;
    kan::Dataset data = sim::collect_training_set(sc.truths[i], lo, hi, cfg.samples, cfg.sampling,
                                                  derive_seed(cfg.seed, {kDataStream, i}), spec.resource_names);
    kan::KanOptions ko = cfg.kan;
    ko.seed = derive_seed(cfg.seed, {kInitStream, i});
    kan::KanModel model = kan::KanModel::create(lo, hi, ko);
    kan::TrainOptions to = cfg.train;
    to.shuffle_seed = derive_seed(cfg.seed, {kShuffleStream, i});
    out.traces.push_back(kan::train(model, data, to));
    out.models.push_back(std::move(model));
    out.datasets.push_back(std::move(data));
    out.ground_truth_queries += cfg.samples;
  }
  return out;
}

std::vector<ScalabilityRow> scalability_sweep(const sim::Scenario& scenario, const std::vector<kan::KanModel>& models,
                                              const std::vector<std::size_t>& slice_counts,
                                              const std::vector<std::uint64_t>& seeds,
                                              const std::vector<Method>& methods, const HybridParams& hybrid,
                                              const GboRunParams& gbo, std::vector<RunTrace>* runs) {
  std::vector<ScalabilityRow> rows;
  for (std::size_t k : slice_counts) {
    if (k < 1 || k > scenario.truths.size() || k > models.size())
      throw ConfigError("slice count " + std::to_string(k) + " exceeds the base scenario");
    const sim::Scenario sub = scenario.prefix(k);
    const kan::KanSurrogates surrogates(std::vector<kan::KanModel>(models.begin(), models.begin() + static_cast<std::ptrdiff_t>(k)));
    for (Method m : methods) {
      std::vector<double> costs;
      for (std::uint64_t seed : seeds) {
        RunTrace t = m == Method::kGbo ? run_gbo(sub, gbo, seed)
                     : m == Method::kGaOnly ? run_ga_only(sub, surrogates, hybrid, seed)
                                            : run_inslicing(sub, surrogates, hybrid, seed);
        validate_on_ground_truth(t, sub, m == Method::kGbo ? nullptr : &surrogates);
        costs.push_back(t.final_cost);
        if (runs) runs->push_back(std::move(t));
      }
      rows.push_back({k, m, median(costs), costs.size()});
    }
  }
  return rows;
}

}  // namespace inslicing::harness
