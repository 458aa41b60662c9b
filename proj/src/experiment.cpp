#include "inslicing/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "inslicing/error.hpp"
#include "inslicing/json_util.hpp"
#include "inslicing/rng.hpp"

namespace inslicing::experiment {

using nlohmann::json;
using json_util::get_or;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

std::vector<std::uint64_t> parse_seeds(const json& j, const std::string& where) {
  std::vector<std::uint64_t> seeds;
  if (j.is_array()) {
    for (const auto& s : j) {
      if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
        throw ConfigError(where + ": seeds must be non-negative integers");
      seeds.push_back(s.get<std::uint64_t>());
    }
  } else if (j.is_object()) {
    check_keys(j, {"start", "count"}, where);
    const auto start = get_or<std::uint64_t>(j, "start", 0);
    const auto count = get_or<std::uint64_t>(j, "count", 1);
    for (std::uint64_t k = 0; k < count; ++k) seeds.push_back(start + k);
  } else {
    throw ConfigError(where + ": expected an array or {start, count}");
  }
  if (seeds.empty()) throw ConfigError(where + ": at least one seed is required");
  return seeds;
}

}  // namespace

int ExperimentConfig::effective_gbo_budget() const {
  return gbo_budget_explicit ? gbo.gbo.budget : static_cast<int>(surrogate.samples);
}

ExperimentConfig parse_config(const json& j) {
  check_keys(j, {"scenario", "surrogate", "methods", "seeds", "budget", "ga", "trm", "gbo", "penalty", "trm_interval",
                 "scalability", "output_dir"},
             "config");
  ExperimentConfig c;
  try {
    if (j.contains("scenario")) {
      const json& s = j["scenario"];
      check_keys(s, {"type", "slices", "resources", "seed", "file", "noise_sigma", "class_minimums", "thresholds",
                     "probe_points", "lower_bound", "upper_bound"},
                 "scenario");
      const std::string type = get_or<std::string>(s, "type", s.contains("file") ? "file" : "generate");
      if (type == "generate")
        c.scenario.kind = ScenarioSource::Kind::kGenerate;
      else if (type == "file")
        c.scenario.kind = ScenarioSource::Kind::kFile;
      else if (type == "toy")
        c.scenario.kind = ScenarioSource::Kind::kToy;
      else
        throw ConfigError("scenario.type must be generate, file or toy");
      c.scenario.slices = get_or<std::size_t>(s, "slices", 9);
      c.scenario.resources = get_or<std::size_t>(s, "resources", 6);
      c.scenario.seed = get_or<std::uint64_t>(s, "seed", 0);
      if (c.scenario.kind == ScenarioSource::Kind::kFile) {
        if (!s.contains("file")) throw ConfigError("scenario.file is required for type 'file'");
        c.scenario.file = s["file"].get<std::string>();
      }
      auto& o = c.scenario.options;
      o.noise_sigma = get_or<double>(s, "noise_sigma", o.noise_sigma);
      o.class_minimums = get_or<bool>(s, "class_minimums", o.class_minimums);
      o.threshold_pattern = get_or<std::vector<double>>(s, "thresholds", o.threshold_pattern);
      o.probe_points = get_or<std::size_t>(s, "probe_points", o.probe_points);
      o.lower_bound = get_or<double>(s, "lower_bound", o.lower_bound);
      o.upper_bound = get_or<double>(s, "upper_bound", o.upper_bound);
    }
    if (j.contains("surrogate")) {
      const json& s = j["surrogate"];
      check_keys(s, {"samples", "sampling", "steps", "learning_rate", "hidden", "grid", "degree", "test_fraction",
                     "seed", "domain_fraction", "models_dir", "dataset_dir"},
                 "surrogate");
      c.surrogate.samples = get_or<std::size_t>(s, "samples", c.surrogate.samples);
      if (s.contains("sampling")) c.surrogate.sampling = sim::sampling_from_string(s["sampling"].get<std::string>());
      c.surrogate.train.steps = get_or<int>(s, "steps", c.surrogate.train.steps);
      c.surrogate.train.learning_rate = get_or<double>(s, "learning_rate", c.surrogate.train.learning_rate);
      c.surrogate.train.test_fraction = get_or<double>(s, "test_fraction", c.surrogate.train.test_fraction);
      c.surrogate.kan.hidden = get_or<std::vector<int>>(s, "hidden", c.surrogate.kan.hidden);
      c.surrogate.kan.grid_count = get_or<int>(s, "grid", c.surrogate.kan.grid_count);
      c.surrogate.kan.degree = get_or<int>(s, "degree", c.surrogate.kan.degree);
      c.surrogate.seed = get_or<std::uint64_t>(s, "seed", c.surrogate.seed);
      c.surrogate.domain_fraction = get_or<double>(s, "domain_fraction", c.surrogate.domain_fraction);
      if (s.contains("models_dir")) c.models_dir = s["models_dir"].get<std::string>();
      if (s.contains("dataset_dir")) c.dataset_dir = s["dataset_dir"].get<std::string>();
      if (c.surrogate.samples < 1) throw ConfigError("surrogate.samples must be >= 1");
      if (c.surrogate.train.steps < 1) throw ConfigError("surrogate.steps must be >= 1");
    }
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j["methods"]) c.methods.push_back(harness::method_from_string(m.get<std::string>()));
      if (c.methods.empty()) throw ConfigError("methods must list at least one method");
    }
    if (j.contains("seeds")) c.seeds = parse_seeds(j["seeds"], "seeds");
    if (j.contains("budget")) {
      const json& b = j["budget"];
      check_keys(b, {"evals", "secs", "gbo_evals"}, "budget");
      c.hybrid.budget_evals = get_or<std::size_t>(b, "evals", c.hybrid.budget_evals);
      c.hybrid.budget_secs = get_or<double>(b, "secs", c.hybrid.budget_secs);
      if (b.contains("gbo_evals")) {
        c.gbo.gbo.budget = b["gbo_evals"].get<int>();
        c.gbo_budget_explicit = true;
      }
    }
    if (j.contains("ga")) {
      const json& g = j["ga"];
      check_keys(g, {"population_size", "crossover_prob", "base_mutation_rate", "tournament_size", "mutation_sigma",
                     "total_generations"},
                 "ga");
      auto& p = c.hybrid.ga;
      p.population_size = get_or<int>(g, "population_size", p.population_size);
      p.crossover_prob = get_or<double>(g, "crossover_prob", p.crossover_prob);
      p.base_mutation_rate = get_or<double>(g, "base_mutation_rate", p.base_mutation_rate);
      p.tournament_size = get_or<int>(g, "tournament_size", p.tournament_size);
      p.mutation_sigma = get_or<double>(g, "mutation_sigma", p.mutation_sigma);
      p.total_generations = get_or<int>(g, "total_generations", p.total_generations);
    }
    if (j.contains("trm")) {
      const json& t = j["trm"];
      check_keys(t, {"initial_radius", "max_radius", "max_iterations", "shrink", "expand", "eta", "fd_step",
                     "restore_bisections"},
                 "trm");
      auto& p = c.hybrid.trm;
      p.initial_radius = get_or<double>(t, "initial_radius", p.initial_radius);
      p.max_radius = get_or<double>(t, "max_radius", p.max_radius);
      p.max_iterations = get_or<int>(t, "max_iterations", p.max_iterations);
      p.shrink = get_or<double>(t, "shrink", p.shrink);
      p.expand = get_or<double>(t, "expand", p.expand);
      p.eta = get_or<double>(t, "eta", p.eta);
      p.fd_step = get_or<double>(t, "fd_step", p.fd_step);
      c.hybrid.restore_bisections = get_or<int>(t, "restore_bisections", c.hybrid.restore_bisections);
    }
    if (j.contains("gbo")) {
      const json& g = j["gbo"];
      check_keys(g, {"initial_samples", "candidates", "length_scale", "signal_variance", "noise_variance",
                     "local_fraction", "local_sigma", "polish_steps", "log_transform", "standardize", "domain_fraction"},
                 "gbo");
      auto& p = c.gbo.gbo;
      p.initial_samples = get_or<int>(g, "initial_samples", p.initial_samples);
      p.candidates = get_or<int>(g, "candidates", p.candidates);
      p.kernel.length_scale = get_or<double>(g, "length_scale", p.kernel.length_scale);
      p.kernel.signal_variance = get_or<double>(g, "signal_variance", p.kernel.signal_variance);
      p.kernel.noise_variance = get_or<double>(g, "noise_variance", p.kernel.noise_variance);
      p.local_fraction = get_or<double>(g, "local_fraction", p.local_fraction);
      p.local_sigma = get_or<double>(g, "local_sigma", p.local_sigma);
      p.polish_steps = get_or<int>(g, "polish_steps", p.polish_steps);
      p.log_transform = get_or<bool>(g, "log_transform", p.log_transform);
      p.standardize = get_or<bool>(g, "standardize", p.standardize);
      c.gbo.domain_fraction = get_or<double>(g, "domain_fraction", c.gbo.domain_fraction);
    }
    if (j.contains("penalty")) {
      const json& p = j["penalty"];
      check_keys(p, {"c1", "c2", "c3"}, "penalty");
      c.hybrid.penalty.c1 = get_or<double>(p, "c1", c.hybrid.penalty.c1);
      c.hybrid.penalty.c2 = get_or<double>(p, "c2", c.hybrid.penalty.c2);
      c.hybrid.penalty.c3 = get_or<double>(p, "c3", c.hybrid.penalty.c3);
      if (c.hybrid.penalty.c1 < 0 || c.hybrid.penalty.c2 < 0 || c.hybrid.penalty.c3 < 0)
        throw ConfigError("penalty weights must be >= 0");
    }
    c.gbo.penalty = c.hybrid.penalty;
    c.hybrid.trm_interval = get_or<int>(j, "trm_interval", c.hybrid.trm_interval);
    if (j.contains("scalability")) {
      const json& s = j["scalability"];
      check_keys(s, {"slice_counts", "seeds"}, "scalability");
      c.scalability_counts = get_or<std::vector<std::size_t>>(s, "slice_counts", {});
      c.scalability_seeds = s.contains("seeds") ? parse_seeds(s["seeds"], "scalability.seeds") : c.seeds;
    }
    c.output_dir = get_or<std::string>(j, "output_dir", c.output_dir.string());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.scalability_seeds.empty()) c.scalability_seeds = c.seeds;
  c.hybrid.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

sim::Scenario build_scenario(const ExperimentConfig& c) {
  switch (c.scenario.kind) {
    case ScenarioSource::Kind::kToy:
      return sim::toy_scenario();
    case ScenarioSource::Kind::kFile:
      return sim::load_scenario(c.scenario.file);
    case ScenarioSource::Kind::kGenerate:
      break;
  }
  return sim::generate_scenario(c.scenario.slices, c.scenario.resources, c.scenario.seed, c.scenario.options);
}

harness::TrainedSurrogates build_surrogates(const sim::Scenario& sc, const ExperimentConfig& c) {
  if (!c.dataset_dir) return harness::train_surrogates(sc, c.surrogate);
  const auto& dir = *c.dataset_dir;
  if (!std::filesystem::is_directory(dir)) throw ConfigError("dataset directory not found: " + dir.string());
  harness::TrainedSurrogates out;
  const auto& spec = sc.spec;
  const auto R = static_cast<Eigen::Index>(spec.num_resources());
  for (std::size_t i = 0; i < spec.num_slices(); ++i) {
    const auto path = dir / ("slice_" + std::to_string(i) + ".csv");
    if (!std::filesystem::exists(path)) throw ConfigError("dataset file not found: " + path.string());
    kan::Dataset data = kan::read_dataset_csv(path);
    if (data.inputs.cols() != R) throw ConfigError(path.string() + ": expected one column per resource");
    const Box dom = harness::surrogate_domain(spec, i, c.surrogate.domain_fraction);
    kan::KanOptions ko = c.surrogate.kan;
    ko.seed = derive_seed(c.surrogate.seed, {0x68790005, i});
    kan::KanModel model = kan::KanModel::create(dom.lower, dom.upper, ko);
    kan::TrainOptions to = c.surrogate.train;
    to.shuffle_seed = derive_seed(c.surrogate.seed, {0x68790006, i});
    out.traces.push_back(kan::train(model, data, to));
    out.models.push_back(std::move(model));
    out.ground_truth_queries += data.size();
    out.datasets.push_back(std::move(data));
  }
  return out;
}

std::vector<kan::KanModel> load_models(const std::filesystem::path& dir, std::size_t num_slices) {
  std::vector<kan::KanModel> models;
  for (std::size_t i = 0; i < num_slices; ++i) models.push_back(kan::load_model(dir / ("slice_" + std::to_string(i) + ".json")));
  return models;
}

void save_models(const std::vector<kan::KanModel>& models, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < models.size(); ++i) kan::save_model(models[i], dir / ("slice_" + std::to_string(i) + ".json"));
}

harness::RunTrace run_method(const sim::Scenario& sc, const std::vector<kan::KanModel>& models, harness::Method method,
                             std::uint64_t seed, const ExperimentConfig& c, std::size_t queries_per_slice) {
  try {
    if (method == harness::Method::kGbo) {
      harness::GboRunParams gp = c.gbo;
      gp.gbo.budget = c.effective_gbo_budget();
      harness::RunTrace t = harness::run_gbo(sc, gp, seed);
      harness::validate_on_ground_truth(t, sc, nullptr);
      return t;
    }
    if (models.size() != sc.spec.num_slices()) throw ShapeError("one surrogate model per slice is required");
    const kan::KanSurrogates surrogates(models);
    harness::RunTrace t = method == harness::Method::kGaOnly ? harness::run_ga_only(sc, surrogates, c.hybrid, seed)
                                                             : harness::run_inslicing(sc, surrogates, c.hybrid, seed);
    t.ground_truth_queries = queries_per_slice * sc.spec.num_slices();
    harness::validate_on_ground_truth(t, sc, &surrogates);
    return t;
  } catch (const std::exception& e) {
    harness::RunTrace t;
    t.method = method;
    t.seed = seed;
    t.num_slices = sc.spec.num_slices();
    t.status = std::string("error: ") + e.what();
    t.final_cost = std::numeric_limits<double>::quiet_NaN();
    return t;
  }
}

ExperimentResult run_experiment(const ExperimentConfig& c, std::ostream* log) {
  ExperimentResult res;
  res.scenario = build_scenario(c);
  if (log) *log << "scenario " << res.scenario.name << ": " << res.scenario.spec.num_slices() << " slices x "
                << res.scenario.spec.num_resources() << " resources\n";
  const bool needs_models = std::any_of(c.methods.begin(), c.methods.end(),
                                        [](harness::Method m) { return m != harness::Method::kGbo; });
  if (c.models_dir) {
    res.models = load_models(*c.models_dir, res.scenario.spec.num_slices());
    res.training_queries_per_slice = c.surrogate.samples;
  } else if (needs_models || !c.scalability_counts.empty()) {
    harness::TrainedSurrogates ts = build_surrogates(res.scenario, c);
    res.models = std::move(ts.models);
    res.training = std::move(ts.traces);
    res.training_queries_per_slice = ts.ground_truth_queries / std::max<std::size_t>(1, res.scenario.spec.num_slices());
    if (log) *log << "trained " << res.models.size() << " surrogate models\n";
  }
  for (std::uint64_t seed : c.seeds) {
    for (harness::Method m : c.methods) {
      res.runs.push_back(run_method(res.scenario, res.models, m, seed, c, res.training_queries_per_slice));
      if (log) {
        const auto& t = res.runs.back();
        *log << harness::to_string(m) << " seed " << seed << ": cost " << format_number(t.final_cost)
             << (t.truth_feasible ? " (feasible on ground truth)" : " (NOT feasible on ground truth)") << '\n';
      }
    }
  }
  if (!c.scalability_counts.empty()) {
    for (std::size_t k : c.scalability_counts) {
      if (k < 1 || k > res.scenario.spec.num_slices())
        throw ConfigError("scalability slice count " + std::to_string(k) + " exceeds the scenario");
      const sim::Scenario sub = res.scenario.prefix(k);
      const std::vector<kan::KanModel> sub_models(res.models.begin(), res.models.begin() + static_cast<std::ptrdiff_t>(k));
      for (harness::Method m : c.methods) {
        std::vector<double> costs;
        for (std::uint64_t seed : c.scalability_seeds) {
          // The full-size prefix is the main scenario; runs are deterministic, so reuse them.
          const auto same = std::find_if(res.runs.begin(), res.runs.end(), [&](const harness::RunTrace& r) {
            return k == res.scenario.spec.num_slices() && r.method == m && r.seed == seed;
          });
          if (same != res.runs.end())
            res.scalability_runs.push_back(*same);
          else
            res.scalability_runs.push_back(run_method(sub, sub_models, m, seed, c, res.training_queries_per_slice));
          if (res.scalability_runs.back().status == "ok") costs.push_back(res.scalability_runs.back().final_cost);
        }
        res.scalability.push_back({k, m, harness::median(costs), costs.size()});
        if (log) *log << "scalability " << k << " slices " << harness::to_string(m) << ": median cost "
                      << format_number(res.scalability.back().median_cost) << '\n';
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Output

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double reference_optimum(const std::vector<harness::RunTrace>& runs, std::size_t slices, std::uint64_t seed) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : runs)
    if (r.status == "ok" && r.num_slices == slices && r.seed == seed && std::isfinite(r.final_cost))
      best = std::min(best, r.final_cost);
  return best;
}

void write_traces_csv(std::ostream& out, const std::vector<harness::RunTrace>& runs) {
  out << "method,slices,seed,iteration,evaluations,phase,best_cost,reported_cost,feasible\n";
  for (const auto& r : runs)
    for (const auto& row : r.rows)
      out << harness::to_string(r.method) << ',' << r.num_slices << ',' << r.seed << ',' << row.iteration << ','
          << row.evaluations << ',' << row.phase << ',' << format_number(row.best_cost) << ','
          << format_number(row.reported_cost) << ',' << (row.feasible ? 1 : 0) << '\n';
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + "\"";
}

}  // namespace

void write_summary_csv(std::ostream& out, const std::vector<harness::RunTrace>& runs) {
  out << "method,slices,seed,status,final_cost,surrogate_feasible,truth_feasible,c1_violations,max_c1_shortfall,"
         "c3_excess,max_surrogate_error,evaluations,ground_truth_queries,trm_invocations,trm_improvements,regret,"
         "mean_normalized_performance\n";
  for (const auto& r : runs) {
    const double opt = reference_optimum(runs, r.num_slices, r.seed);
    const bool ok = r.status == "ok" && !r.rows.empty() && std::isfinite(opt);
    const double regret = ok ? harness::compute_regret(r, opt) : std::numeric_limits<double>::quiet_NaN();
    const double mean_np = r.normalized_performance.size() ? r.normalized_performance.mean()
                                                            : std::numeric_limits<double>::quiet_NaN();
    out << harness::to_string(r.method) << ',' << r.num_slices << ',' << r.seed << ',' << csv_escape(r.status) << ','
        << format_number(r.final_cost) << ',' << (r.feasible ? 1 : 0) << ',' << (r.truth_feasible ? 1 : 0) << ','
        << r.c1_violations << ',' << format_number(r.max_c1_shortfall) << ',' << format_number(r.c3_excess) << ','
        << (r.surrogate_latency.size() ? format_number(r.max_surrogate_error) : std::string("nan")) << ','
        << r.evaluations << ',' << r.ground_truth_queries << ',' << r.trm_invocations << ',' << r.trm_improvements
        << ',' << format_number(regret) << ',' << format_number(mean_np) << '\n';
  }
}

void write_regret_csv(std::ostream& out, const std::vector<harness::RunTrace>& runs) {
  out << "method,slices,seed,reference_optimum,regret\n";
  for (const auto& r : runs) {
    if (r.status != "ok" || r.rows.empty()) continue;
    const double opt = reference_optimum(runs, r.num_slices, r.seed);
    out << harness::to_string(r.method) << ',' << r.num_slices << ',' << r.seed << ',' << format_number(opt) << ','
        << format_number(harness::compute_regret(r, opt)) << '\n';
  }
}

void write_cdf_csv(std::ostream& out, const std::vector<harness::RunTrace>& runs) {
  out << "method,value,cdf\n";
  std::vector<harness::Method> order;
  for (const auto& r : runs)
    if (std::find(order.begin(), order.end(), r.method) == order.end()) order.push_back(r.method);
  for (harness::Method m : order) {
    std::vector<const harness::RunTrace*> sel;
    for (const auto& r : runs)
      if (r.method == m) sel.push_back(&r);
    for (const auto& p : harness::normalized_performance_cdf(sel))
      out << harness::to_string(m) << ',' << format_number(p.value) << ',' << format_number(p.cdf) << '\n';
  }
}

void write_training_csv(std::ostream& out, const std::vector<kan::TrainingTrace>& traces) {
  out << "slice,step,train_rmse,test_rmse\n";
  for (std::size_t i = 0; i < traces.size(); ++i)
    for (const auto& row : traces[i].rows)
      out << i << ',' << row.step << ',' << format_number(row.train_rmse) << ',' << format_number(row.test_rmse) << '\n';
}

void write_outputs(const ExperimentResult& res, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw ConfigError("cannot write " + (dir / name).string());
    return f;
  };
  std::vector<harness::RunTrace> all = res.runs;
  all.insert(all.end(), res.scalability_runs.begin(), res.scalability_runs.end());
  {
    auto f = open("traces.csv");
    write_traces_csv(f, all);
  }
  {
    auto f = open("summary.csv");
    write_summary_csv(f, all);
  }
  {
    auto f = open("regret.csv");
    write_regret_csv(f, all);
  }
  {
    auto f = open("cdf.csv");
    write_cdf_csv(f, res.runs);
  }
  if (!res.training.empty()) {
    auto f = open("training.csv");
    write_training_csv(f, res.training);
  }
  if (!res.scalability.empty()) {
    auto f = open("scalability.csv");
    f << "slices,method,median_cost,runs\n";
    for (const auto& row : res.scalability)
      f << row.slices << ',' << harness::to_string(row.method) << ',' << format_number(row.median_cost) << ','
        << row.runs << '\n';
  }
  {
    auto f = open("timing.csv");
    f << "method,slices,seed,wall_seconds\n";
    for (const auto& r : all)
      f << harness::to_string(r.method) << ',' << r.num_slices << ',' << r.seed << ',' << format_number(r.wall_seconds)
        << '\n';
  }
  sim::save_scenario(res.scenario, dir / "scenario.json");
  if (!res.models.empty()) save_models(res.models, dir / "models");
}

json solution_json(const harness::RunTrace& run, const sim::Scenario& sc, const PerformanceModel* surrogates) {
  json j;
  j["method"] = harness::to_string(run.method);
  j["seed"] = run.seed;
  j["status"] = run.status;
  j["cost"] = run.final_cost;
  j["feasible"] = run.feasible;
  j["slices"] = sc.spec.slice_names;
  j["resources"] = sc.spec.resource_names;
  j["evaluations"] = run.evaluations;
  j["ground_truth_queries"] = run.ground_truth_queries;
  if (run.best_genome.size() == static_cast<Eigen::Index>(sc.spec.dimension())) {
    const ConfigMatrix X = unflatten(sc.spec, run.best_genome);
    j["configuration"] = json_util::matrix_to_json(X);
    if (surrogates) {
      const FeasibilityReport rep = check_feasibility(sc.spec, X, *surrogates);
      j["surrogate"] = {{"feasible", rep.feasible},
                        {"performance", json_util::vector_to_json(rep.performance)},
                        {"c1_violations", json_util::vector_to_json(rep.c1_violations)},
                        {"c3_violations", json_util::vector_to_json(rep.c3_violations)}};
    }
  }
  j["ground_truth"] = {{"validated", run.validated},
                       {"feasible", run.truth_feasible},
                       {"latency", json_util::vector_to_json(run.truth_latency)},
                       {"c1_violations", run.c1_violations},
                       {"max_c1_shortfall", run.max_c1_shortfall},
                       {"c3_excess", run.c3_excess},
                       {"normalized_performance", json_util::vector_to_json(run.normalized_performance)}};
  if (run.surrogate_latency.size()) j["max_surrogate_error"] = run.max_surrogate_error;
  return j;
}

}  // namespace inslicing::experiment
