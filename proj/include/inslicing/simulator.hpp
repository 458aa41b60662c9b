#pragma once

// Synthetic per-slice latency environment standing in for a live testbed.
// Each slice's latency is
//   max(1, offset + sum_r [a_r x_r + A_r sin(f_r x_r + phi_r)] + noise).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "inslicing/kan.hpp"
#include "inslicing/problem.hpp"

namespace inslicing::sim {

inline constexpr double kLatencyFloor = 1.0;

struct SineTerm {
  std::size_t resource = 0;
  double amplitude = 0.0;
  double frequency = 0.0;
  double phase = 0.0;
};

struct SliceGroundTruth {
  std::string slice_class;    // "MAR", "HVS", "RDC", or free text
  double offset = 0.0;        // ms
  Vector linear;              // ms per unit, one per resource
  std::vector<SineTerm> sines;
  double noise_sigma = 5.0;   // ms

  std::size_t num_resources() const { return static_cast<std::size_t>(linear.size()); }

  /// Noiseless latency before the floor is applied.
  double raw(const Eigen::Ref<const Vector>& x) const;
  /// Noiseless, floored latency.
  double mean_latency(const Eigen::Ref<const Vector>& x) const;
  /// d raw / dx; equals the latency gradient wherever the floor is inactive.
  Vector raw_gradient(const Eigen::Ref<const Vector>& x) const;
  /// Every resource satisfies a_r <= 0 and sum of A f over its sines <= |a_r|,
  /// so adding resources never increases latency.
  bool is_monotone() const;
};

/// One observation: the noiseless latency plus N(0, noise_sigma^2) drawn from
/// noise_seed, floored at 1 ms.
double query(const SliceGroundTruth& truth, const Eigen::Ref<const Vector>& x, std::uint64_t noise_seed);

struct Scenario {
  std::string name;
  std::uint64_t seed = 0;
  ProblemSpec spec;
  std::vector<SliceGroundTruth> truths;

  /// First k slices; generated scenarios are nested, so this equals
  /// generate_scenario(k, ...) for the same seed and options.
  Scenario prefix(std::size_t k) const;
};

struct ScenarioOptions {
  std::vector<double> threshold_pattern = {400.0, 500.0, 60.0};
  std::vector<std::string> class_pattern = {"MAR", "HVS", "RDC"};
  double noise_sigma = 5.0;
  double weight_lo = 0.5;
  double weight_hi = 1.5;
  double lower_bound = 0.0;
  double upper_bound = 1.0;
  // Minimum share 0.1 on bandwidth_ul, bandwidth_dl, backhaul_bw and cpu_ratio
  // for MAR and HVS slices.
  bool class_minimums = false;
  std::size_t probe_points = 1'000'000;
  double min_feasible_fraction = 0.10;
  int max_attempts = 50;
};

/// Draws every slice's function from the documented family and verifies that
/// the uniform reference allocation (0.1, or L_r if larger) meets every
/// threshold. At most floor(H_r / 0.1) slices are supported so that the
/// reference allocation also respects capacity.
/// Throws ScenarioGenerationError when a slice cannot be generated.
Scenario generate_scenario(std::size_t num_slices, std::size_t num_resources, std::uint64_t seed,
                           const ScenarioOptions& options = {});

/// Fraction of `points` uniform box samples meeting slice i's threshold (noiseless).
double feasible_fraction(const Scenario& scenario, std::size_t slice, std::size_t points, std::uint64_t seed);

/// Hand-built 2-slice x 2-resource instance for brute-force oracle checks.
Scenario toy_scenario();

/// Two-input latency function in the shape of a published closed-form fit
/// (one strong linear input, several sines), on [0, 1]^2.
SliceGroundTruth paper_form_truth(double noise_sigma = 5.0);

enum class Sampling { kUniform, kLatinHypercube };

Sampling sampling_from_string(const std::string& s);

/// n noisy observations over slice i's box; deterministic in seed.
kan::Dataset collect_training_set(const SliceGroundTruth& truth, const Vector& lower, const Vector& upper,
                                  std::size_t n_samples, Sampling sampling, std::uint64_t seed,
                                  const std::vector<std::string>& input_names = {});

/// Noiseless ground truth behind the PerformanceModel interface.
class GroundTruthModel : public PerformanceModel {
 public:
  explicit GroundTruthModel(std::vector<SliceGroundTruth> truths) : truths_(std::move(truths)) {}

  std::size_t num_slices() const override { return truths_.size(); }
  double evaluate(std::size_t slice, const Eigen::Ref<const Vector>& x) const override;
  double evaluate_with_gradient(std::size_t slice, const Eigen::Ref<const Vector>& x,
                                Eigen::Ref<Vector> gradient) const override;
  bool has_analytic_gradient() const override { return true; }

 private:
  std::vector<SliceGroundTruth> truths_;
};

/// Noisy ground truth: every call draws fresh noise from (seed, slice, counter)
/// where the counter is supplied per evaluation by the caller.
class NoisyGroundTruth : public PerformanceModel {
 public:
  NoisyGroundTruth(std::vector<SliceGroundTruth> truths, std::uint64_t seed)
      : truths_(std::move(truths)), seed_(seed) {}

  void set_evaluation_index(std::uint64_t index) { index_ = index; }

  std::size_t num_slices() const override { return truths_.size(); }
  double evaluate(std::size_t slice, const Eigen::Ref<const Vector>& x) const override;

 private:
  std::vector<SliceGroundTruth> truths_;
  std::uint64_t seed_;
  std::uint64_t index_ = 0;
};

void to_json(nlohmann::json& j, const SliceGroundTruth& t);
void from_json(const nlohmann::json& j, SliceGroundTruth& t);
void to_json(nlohmann::json& j, const Scenario& s);
void from_json(const nlohmann::json& j, Scenario& s);

Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& scenario, const std::filesystem::path& path);

}  // namespace inslicing::sim
