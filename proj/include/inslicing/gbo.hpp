#pragma once

// Bayesian-optimization baseline: squared-exponential Gaussian process over the
// flattened configuration and expected-improvement acquisition (minimization).

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "inslicing/problem.hpp"

namespace inslicing::gbo {

using Dense = Eigen::MatrixXd;

struct KernelParams {
  double length_scale = 0.2;
  double signal_variance = 1.0;
  double noise_variance = 1e-4;
};

/// k(a, b) = s^2 exp(-||a - b||^2 / (2 l^2)).
double kernel(const KernelParams& k, const Vector& a, const Vector& b);

class GpModel {
 public:
  /// Fits to the columns of X (dim x n) and values y. With `standardize`, y is
  /// shifted and scaled to zero mean, unit variance internally; predictions are
  /// returned in the original units. Throws ConditioningError when the kernel
  /// matrix stays indefinite after jitter escalation.
  static GpModel fit(const Dense& X, const Vector& y, const KernelParams& params, bool standardize = false);

  /// Adds one observation with an O(n^2) Cholesky extension.
  void append(const Vector& x, double y);

  std::size_t size() const { return static_cast<std::size_t>(y_.size()); }
  Eigen::Index dim() const { return X_.rows(); }
  double jitter() const { return jitter_; }
  const KernelParams& params() const { return params_; }

  /// Posterior mean and variance of the latent function at x.
  std::pair<double, double> predict(const Vector& x) const;
  /// Column-wise predict for candidates (dim x m).
  void predict_batch(const Dense& C, Vector& mean, Vector& variance) const;

 private:
  void factorize();
  void refresh_weights();

  KernelParams params_;
  bool standardize_ = false;
  double jitter_ = 0.0;
  Dense X_;  // dim x n
  Vector y_;
  Dense L_;  // lower Cholesky factor of K + (noise + jitter) I
  Vector alpha_;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;
};

/// (best - mu) Phi(z) + sigma phi(z), z = (best - mu) / sigma; max(best - mu, 0)
/// when sigma = 0.
double expected_improvement(double mean, double sigma, double best);
double expected_improvement(const GpModel& model, const Vector& x, double best);

struct GboParams {
  int initial_samples = 10;
  int budget = 100;  // total objective evaluations, initial design included
  int candidates = 2048;
  double local_fraction = 0.5;  // share of candidates drawn around the incumbent
  double local_sigma = 0.1;     // relative to box width
  // Initial design and global candidates use [lower, lower + f (upper - lower)].
  double design_fraction = 1.0;
  int polish_steps = 32;
  KernelParams kernel;
  bool standardize = true;
  bool log_transform = true;  // model sign(d) log(1 + |d|), d = y - min of the initial design
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct Observation {
  double penalized = 0.0;
  double cost = 0.0;
  bool feasible = false;
};

/// Blackbox objective; eval_index is 0-based and unique per call.
using BlackBox = std::function<Observation(const Vector& x, std::size_t eval_index)>;

struct TraceRow {
  std::size_t evaluation = 0;
  double penalized = 0.0;
  double cost = 0.0;
  bool feasible = false;
  double best_cost = 0.0;       // +inf until a feasible point is seen
  double best_penalized = 0.0;  // running minimum
};

struct GboResult {
  Vector best_x;
  double best_cost = 0.0;
  double best_penalized = 0.0;
  bool feasible = false;  // false: best_x is the best penalized point
  std::vector<TraceRow> trace;
};

GboResult gbo_optimize(const Box& box, const BlackBox& objective, const GboParams& params);

}  // namespace inslicing::gbo
