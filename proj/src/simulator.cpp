#include "inslicing/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "inslicing/error.hpp"
#include "inslicing/json_util.hpp"
#include "inslicing/rng.hpp"

namespace inslicing::sim {

namespace {

enum Stream : std::uint64_t { kSliceStream = 1, kWeightStream, kNoiseStream, kProbeStream, kSampleStream };

constexpr double kReferenceShare = 0.1;
constexpr double kMaxAmplitude = 160.0;
constexpr double kMaxSlope = 900.0;
constexpr double kMaxOffset = 900.0;

}  // namespace

double SliceGroundTruth::raw(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != linear.size()) throw ShapeError("configuration row has wrong length");
  double v = offset + linear.dot(x);
  for (const auto& s : sines) v += s.amplitude * std::sin(s.frequency * x[static_cast<Eigen::Index>(s.resource)] + s.phase);
  return v;
}

double SliceGroundTruth::mean_latency(const Eigen::Ref<const Vector>& x) const {
  return std::max(kLatencyFloor, raw(x));
}

Vector SliceGroundTruth::raw_gradient(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != linear.size()) throw ShapeError("configuration row has wrong length");
  Vector g = linear;
  for (const auto& s : sines) {
    const auto r = static_cast<Eigen::Index>(s.resource);
    g[r] += s.amplitude * s.frequency * std::cos(s.frequency * x[r] + s.phase);
  }
  return g;
}

bool SliceGroundTruth::is_monotone() const {
  Vector wiggle = Vector::Zero(linear.size());
  for (const auto& s : sines) wiggle[static_cast<Eigen::Index>(s.resource)] += std::abs(s.amplitude * s.frequency);
  for (Eigen::Index r = 0; r < linear.size(); ++r)
    if (linear[r] > 0.0 || wiggle[r] > -linear[r]) return false;
  return true;
}

double query(const SliceGroundTruth& truth, const Eigen::Ref<const Vector>& x, std::uint64_t noise_seed) {
  double v = truth.raw(x);
  if (truth.noise_sigma > 0.0) {
    Rng rng(noise_seed);
    std::normal_distribution<double> noise(0.0, truth.noise_sigma);
    v += noise(rng);
  }
  return std::max(kLatencyFloor, v);
}

Scenario Scenario::prefix(std::size_t k) const {
  if (k < 1 || k > truths.size()) throw ShapeError("prefix length out of range");
  Scenario s;
  s.name = name + "_" + std::to_string(k);
  s.seed = seed;
  s.spec = spec.prefix(k);
  s.truths.assign(truths.begin(), truths.begin() + static_cast<std::ptrdiff_t>(k));
  return s;
}

namespace {

std::string resource_name(std::size_t r) {
  const auto& names = canonical_resource_names();
  return r < names.size() ? names[r] : "resource_" + std::to_string(r);
}

bool gets_class_minimum(const std::string& resource) {
  return resource == "bandwidth_ul" || resource == "bandwidth_dl" || resource == "backhaul_bw" ||
         resource == "cpu_ratio";
}

/// One draw of slice parameters such that latency at `reference` equals
/// Q (1 - m) and latency at zero allocation is about Q (1 + g).
SliceGroundTruth draw_slice(Rng& rng, double Q, const Vector& reference, double noise_sigma) {
  const auto R = reference.size();
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * U(rng); };
  const double gap = uni(0.3, 0.5);
  const double margin = uni(0.005, 0.015);
  Vector share(R);
  std::vector<SineTerm> sines;
  for (Eigen::Index r = 0; r < R; ++r) share[r] = uni(0.5, 1.0);
  share /= share.sum();
  // Linear drop per unit of every resource; the reference allocation removes
  // (gap + margin) Q of it.
  const double drop = (gap + margin) * Q / reference.mean();
  SliceGroundTruth t;
  t.noise_sigma = noise_sigma;
  t.linear = (-drop * share).cwiseMax(-kMaxSlope);
  for (Eigen::Index r = 0; r < R; ++r) {
    const double kappa = uni(0.1, 0.4);  // wiggle relative to slope, < 1 keeps monotone
    SineTerm s;
    s.resource = static_cast<std::size_t>(r);
    s.frequency = uni(0.5, 2.5);
    s.phase = uni(-std::numbers::pi, std::numbers::pi);
    s.amplitude = std::min(kappa * -t.linear[r] / s.frequency, kMaxAmplitude);
    sines.push_back(s);
  }
  t.sines = std::move(sines);
  t.offset = 0.0;
  t.offset = Q * (1.0 - margin) - t.raw(reference);
  return t;
}

}  // namespace

Scenario generate_scenario(std::size_t num_slices, std::size_t num_resources, std::uint64_t seed,
                           const ScenarioOptions& opt) {
  if (num_slices < 1 || num_resources < 1) throw ConfigError("scenario needs at least one slice and resource");
  if (opt.threshold_pattern.empty() || opt.class_pattern.empty())
    throw ConfigError("threshold and class patterns must be non-empty");
  if (!(opt.lower_bound >= 0.0 && opt.upper_bound > opt.lower_bound))
    throw ConfigError("scenario bounds must satisfy 0 <= lower < upper");
  const double ref_share = std::max(kReferenceShare, opt.lower_bound);
  if (static_cast<double>(num_slices) * ref_share > opt.upper_bound + 1e-12)
    throw ScenarioGenerationError("too many slices for the reference allocation to respect capacity");

  Scenario sc;
  sc.seed = seed;
  sc.name = "generated_" + std::to_string(num_slices) + "x" + std::to_string(num_resources) + "_s" +
            std::to_string(seed);
  ProblemSpec& spec = sc.spec;
  const auto R = static_cast<Eigen::Index>(num_resources);
  for (std::size_t r = 0; r < num_resources; ++r) spec.resource_names.push_back(resource_name(r));
  spec.cost_weights.resize(R);
  for (Eigen::Index r = 0; r < R; ++r) {
    Rng rng = make_rng(seed, {kWeightStream, static_cast<std::uint64_t>(r)});
    spec.cost_weights[r] = std::uniform_real_distribution<double>(opt.weight_lo, opt.weight_hi)(rng);
  }
  spec.lower_bounds = Vector::Constant(R, opt.lower_bound);
  spec.upper_bounds = Vector::Constant(R, opt.upper_bound);
  spec.thresholds.resize(static_cast<Eigen::Index>(num_slices));
  if (opt.class_minimums) spec.slice_lower = Matrix::Constant(static_cast<Eigen::Index>(num_slices), R, opt.lower_bound);

  const Vector reference = Vector::Constant(R, ref_share);
  for (std::size_t i = 0; i < num_slices; ++i) {
    const double Q = opt.threshold_pattern[i % opt.threshold_pattern.size()];
    const std::string cls = opt.class_pattern[i % opt.class_pattern.size()];
    spec.slice_names.push_back("slice_" + std::to_string(i));
    spec.thresholds[static_cast<Eigen::Index>(i)] = Q;
    spec.threshold_sense.push_back(ThresholdSense::kLatency);
    if (opt.class_minimums && (cls == "MAR" || cls == "HVS"))
      for (Eigen::Index r = 0; r < R; ++r)
        if (gets_class_minimum(spec.resource_names[static_cast<std::size_t>(r)]))
          (*spec.slice_lower)(static_cast<Eigen::Index>(i), r) = std::max(opt.lower_bound, kReferenceShare);

    bool ok = false;
    for (int attempt = 0; attempt < opt.max_attempts && !ok; ++attempt) {
      Rng rng = make_rng(seed, {kSliceStream, i, static_cast<std::uint64_t>(attempt)});
      SliceGroundTruth t = draw_slice(rng, Q, reference, opt.noise_sigma);
      t.slice_class = cls;
      if (!(t.mean_latency(reference) <= Q) || !t.is_monotone() || t.offset > kMaxOffset) continue;
      sc.truths.push_back(std::move(t));
      if (opt.probe_points > 0 &&
          feasible_fraction(sc, i, opt.probe_points, derive_seed(seed, {kProbeStream, i})) < opt.min_feasible_fraction) {
        sc.truths.pop_back();
        continue;
      }
      ok = true;
    }
    if (!ok)
      throw ScenarioGenerationError("slice " + std::to_string(i) + " failed feasibility checks after " +
                                    std::to_string(opt.max_attempts) + " attempts");
  }
  spec.validate();
  return sc;
}

double feasible_fraction(const Scenario& sc, std::size_t slice, std::size_t points, std::uint64_t seed) {
  if (slice >= sc.truths.size()) throw ShapeError("slice index out of range");
  if (points == 0) return 0.0;
  const auto R = static_cast<Eigen::Index>(sc.spec.num_resources());
  Rng rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Vector lo(R), hi(R), x(R);
  for (Eigen::Index r = 0; r < R; ++r) {
    lo[r] = sc.spec.lower(slice, static_cast<std::size_t>(r));
    hi[r] = sc.spec.upper(slice, static_cast<std::size_t>(r));
  }
  const auto& truth = sc.truths[slice];
  std::size_t hits = 0;
  for (std::size_t k = 0; k < points; ++k) {
    for (Eigen::Index r = 0; r < R; ++r) x[r] = lo[r] + (hi[r] - lo[r]) * U(rng);
    if (sc.spec.score(slice, truth.mean_latency(x)) >= -kFeasibilityTolerance) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(points);
}

Scenario toy_scenario() {
  Scenario sc;
  sc.name = "toy_2x2";
  sc.seed = 0;
  ProblemSpec& spec = sc.spec;
  spec.slice_names = {"slice_0", "slice_1"};
  spec.resource_names = {"bandwidth_ul", "bandwidth_dl"};
  spec.cost_weights = Vector{{1.0, 1.3}};
  spec.lower_bounds = Vector{{0.0, 0.0}};
  spec.upper_bounds = Vector{{1.0, 1.0}};
  spec.thresholds = Vector{{400.0, 60.0}};
  spec.threshold_sense = {ThresholdSense::kLatency, ThresholdSense::kLatency};

  SliceGroundTruth a;
  a.slice_class = "MAR";
  a.offset = 780.0;
  a.linear = Vector{{-420.0, -300.0}};
  a.sines = {{0, 20.0, 2.0, 0.4}, {1, 15.0, 1.5, 1.2}};
  SliceGroundTruth b;
  b.slice_class = "RDC";
  b.offset = 130.0;
  b.linear = Vector{{-80.0, -110.0}};
  b.sines = {{0, 6.0, 2.5, 0.3}, {1, 8.0, 2.0, 2.0}};
  sc.truths = {a, b};
  spec.validate();
  return sc;
}

SliceGroundTruth paper_form_truth(double noise_sigma) {
  SliceGroundTruth t;
  t.slice_class = "MAR";
  t.offset = 836.0928;
  t.linear = Vector{{-788.9124, 11.1672}};
  t.sines = {{0, 65.9526, 0.6438, -4.1988},
             {1, -154.8258, 0.5912, 5.1804},
             {1, 45.7148, 0.6943, 5.2315},
             {1, 15.8861, 1.9874, 7.6146}};
  t.noise_sigma = noise_sigma;
  return t;
}

Sampling sampling_from_string(const std::string& s) {
  if (s == "uniform") return Sampling::kUniform;
  if (s == "lhs" || s == "latin-hypercube") return Sampling::kLatinHypercube;
  throw ConfigError("unknown sampling '" + s + "' (expected uniform or latin-hypercube)");
}

kan::Dataset collect_training_set(const SliceGroundTruth& truth, const Vector& lower, const Vector& upper,
                                  std::size_t n, Sampling sampling, std::uint64_t seed,
                                  const std::vector<std::string>& input_names) {
  if (n < 1) throw ConfigError("training set needs at least one sample");
  const auto d = lower.size();
  if (upper.size() != d || static_cast<std::size_t>(d) != truth.num_resources())
    throw ShapeError("sampling box does not match the slice's resources");
  kan::Dataset data;
  if (input_names.empty()) {
    for (Eigen::Index r = 0; r < d; ++r) data.input_names.push_back(resource_name(static_cast<std::size_t>(r)));
  } else {
    if (input_names.size() != static_cast<std::size_t>(d)) throw ShapeError("input name count mismatch");
    data.input_names = input_names;
  }
  const auto N = static_cast<Eigen::Index>(n);
  data.inputs.resize(N, d);
  data.targets.resize(N);
  Rng rng = make_rng(seed, {kSampleStream});
  std::uniform_real_distribution<double> U(0.0, 1.0);
  if (sampling == Sampling::kUniform) {
    for (Eigen::Index s = 0; s < N; ++s)
      for (Eigen::Index r = 0; r < d; ++r) data.inputs(s, r) = lower[r] + (upper[r] - lower[r]) * U(rng);
  } else {
    std::vector<Eigen::Index> perm(n);
    for (Eigen::Index r = 0; r < d; ++r) {
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      for (Eigen::Index s = 0; s < N; ++s) {
        const double u = (static_cast<double>(perm[static_cast<std::size_t>(s)]) + U(rng)) / static_cast<double>(n);
        data.inputs(s, r) = lower[r] + (upper[r] - lower[r]) * u;
      }
    }
  }
  for (Eigen::Index s = 0; s < N; ++s)
    data.targets[s] = query(truth, data.inputs.row(s).transpose(), derive_seed(seed, {kNoiseStream, static_cast<std::uint64_t>(s)}));
  return data;
}

double GroundTruthModel::evaluate(std::size_t slice, const Eigen::Ref<const Vector>& x) const {
  return truths_.at(slice).mean_latency(x);
}

double GroundTruthModel::evaluate_with_gradient(std::size_t slice, const Eigen::Ref<const Vector>& x,
                                                Eigen::Ref<Vector> gradient) const {
  const auto& t = truths_.at(slice);
  const double raw = t.raw(x);
  if (raw > kLatencyFloor)
    gradient = t.raw_gradient(x);
  else
    gradient.setZero();
  return std::max(kLatencyFloor, raw);
}

double NoisyGroundTruth::evaluate(std::size_t slice, const Eigen::Ref<const Vector>& x) const {
  return query(truths_.at(slice), x, derive_seed(seed_, {kNoiseStream, index_, slice}));
}

// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const SliceGroundTruth& t) {
  nlohmann::json sines = nlohmann::json::array();
  for (const auto& s : t.sines)
    sines.push_back({{"resource", s.resource}, {"amplitude", s.amplitude}, {"frequency", s.frequency}, {"phase", s.phase}});
  j = {{"class", t.slice_class},
       {"offset", t.offset},
       {"linear", json_util::vector_to_json(t.linear)},
       {"sines", std::move(sines)},
       {"noise_sigma", t.noise_sigma}};
}

void from_json(const nlohmann::json& j, SliceGroundTruth& t) {
  try {
    t.slice_class = j.value("class", std::string{});
    t.offset = j.at("offset").get<double>();
    t.linear = json_util::vector_from_json(j.at("linear"), "linear");
    t.sines.clear();
    for (const auto& s : j.at("sines")) {
      SineTerm st{s.at("resource").get<std::size_t>(), s.at("amplitude").get<double>(),
                  s.at("frequency").get<double>(), s.at("phase").get<double>()};
      if (st.resource >= static_cast<std::size_t>(t.linear.size())) throw ConfigError("sine resource index out of range");
      t.sines.push_back(st);
    }
    t.noise_sigma = j.value("noise_sigma", 5.0);
    if (t.noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("slice ground truth: ") + e.what());
  }
}

void to_json(nlohmann::json& j, const Scenario& s) {
  j = {{"name", s.name}, {"seed", s.seed}, {"problem", s.spec}, {"slices", s.truths}};
}

void from_json(const nlohmann::json& j, Scenario& s) {
  try {
    s.name = j.value("name", std::string("scenario"));
    s.seed = j.value("seed", std::uint64_t{0});
    s.spec = j.at("problem").get<ProblemSpec>();
    s.truths = j.at("slices").get<std::vector<SliceGroundTruth>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  if (s.truths.size() != s.spec.num_slices()) throw ConfigError("scenario slice count mismatch");
  for (const auto& t : s.truths)
    if (t.num_resources() != s.spec.num_resources()) throw ConfigError("scenario resource count mismatch");
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("scenario file " + path.string() + ": " + e.what());
  }
  return j.get<Scenario>();
}

void save_scenario(const Scenario& scenario, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write scenario file " + path.string());
  out << nlohmann::json(scenario).dump(1) << '\n';
}

}  // namespace inslicing::sim
