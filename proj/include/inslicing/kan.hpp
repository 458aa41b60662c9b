#pragma once

// Kolmogorov-Arnold network with B-spline edge activations
//   phi(x) = w * (b(x) + sum_j c_j B_j(x)),
// layers Phi(x)_j = sum_p phi_{j,p}(x_p), and KAN(x) = Phi_{L-1} o ... o Phi_0 (x).

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "inslicing/problem.hpp"

namespace inslicing::kan {

/// Residual basis b(x). kSilu is x * sigmoid(x); the others exist for tests and
/// hand-built networks.
enum class BaseFunction { kSilu, kZero, kIdentity };

double base_value(BaseFunction base, double x);
double base_derivative(BaseFunction base, double x);

struct SplineActivation {
  std::vector<double> knots;
  std::vector<double> coefficients;
  double weight = 1.0;
  BaseFunction base = BaseFunction::kSilu;
  int degree = 3;

  static SplineActivation uniform(double lo, double hi, int grid_count, int degree,
                                  BaseFunction base = BaseFunction::kSilu);

  double lo() const { return knots[static_cast<std::size_t>(degree)]; }
  double hi() const { return knots[knots.size() - 1 - static_cast<std::size_t>(degree)]; }

  /// sum_j c_j B_j(x) with x clamped into [lo, hi].
  double spline(double x) const;
  /// d phi / dx; the spline part is flat outside [lo, hi].
  double derivative(double x) const;
};

/// w * (b(x) + spline(clamp(x))). The residual b is evaluated at the raw x.
double spline_eval(const SplineActivation& act, double x);

class KanLayer {
 public:
  KanLayer() = default;
  /// `activations` is row-major: entry j * n_in + p is phi_{j,p}.
  KanLayer(int n_in, int n_out, std::vector<SplineActivation> activations);

  int n_in() const { return n_in_; }
  int n_out() const { return n_out_; }
  SplineActivation& at(int j, int p) { return acts_[static_cast<std::size_t>(j * n_in_ + p)]; }
  const SplineActivation& at(int j, int p) const {
    return acts_[static_cast<std::size_t>(j * n_in_ + p)];
  }
  const std::vector<SplineActivation>& activations() const { return acts_; }

  void forward(std::span<const double> in, std::span<double> out) const;

 private:
  void validate() const;

  int n_in_ = 0;
  int n_out_ = 0;
  std::vector<SplineActivation> acts_;
};

struct KanOptions {
  std::vector<int> hidden = {4, 4, 4};
  int grid_count = 5;
  int degree = 3;
  double grid_lo = -1.0;
  double grid_hi = 1.0;
  BaseFunction base = BaseFunction::kSilu;
  double init_noise = 0.1;  // std of initial spline coefficients
  std::uint64_t seed = 0;
};

class KanModel {
 public:
  KanModel() = default;

  /// Fresh network whose inputs are normalized from [lower, upper] onto the grid range.
  static KanModel create(const Vector& input_lower, const Vector& input_upper,
                         const KanOptions& options = {});
  /// Assembles a model from explicit layers; normalization and output map are identity.
  static KanModel from_layers(std::vector<KanLayer> layers);

  std::size_t input_dim() const { return input_scale.size(); }
  const std::vector<KanLayer>& layers() const { return layers_; }
  std::vector<KanLayer>& layers() { return layers_; }
  int depth() const { return static_cast<int>(layers_.size()); }

  double forward(std::span<const double> x) const;
  double forward(const Eigen::Ref<const Vector>& x) const { return forward(std::span(x.data(), static_cast<std::size_t>(x.size()))); }

  /// forward(x) and d forward / d x.
  double value_and_gradient(std::span<const double> x, std::span<double> gradient) const;
  Vector grad(const Eigen::Ref<const Vector>& x) const;

  /// Physical input interval that maps onto the first layer's grid range.
  std::pair<Vector, Vector> input_domain() const;

  std::size_t parameter_count() const;
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> params);

  // Affine maps: u = input_scale * x + input_offset feeds the first layer;
  // performance = output_scale * network + output_offset.
  std::vector<double> input_scale;
  std::vector<double> input_offset;
  double output_scale = 1.0;
  double output_offset = 0.0;

  /// Throws ShapeError when layer widths or normalization sizes disagree.
  void check_chain() const;

 private:

  std::vector<KanLayer> layers_;
};

void to_json(nlohmann::json& j, const KanModel& model);
void from_json(const nlohmann::json& j, KanModel& model);

KanModel load_model(const std::filesystem::path& path);
void save_model(const KanModel& model, const std::filesystem::path& path);

/// (configuration sample, observed performance) pairs.
struct Dataset {
  std::vector<std::string> input_names;
  Matrix inputs;
  Vector targets;

  std::size_t size() const { return static_cast<std::size_t>(targets.size()); }
};

/// CSV with one column per input name plus a `performance` column.
void write_dataset_csv(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset_csv(const std::filesystem::path& path);

struct TrainOptions {
  int steps = 1000;
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double test_fraction = 0.2;
  double weight_decay = 0.0;  // decoupled, per step: p -= learning_rate * weight_decay * p
  std::uint64_t shuffle_seed = 0;
  int log_interval = 1;
};

struct TrainingTrace {
  struct Row {
    int step = 0;
    double train_rmse = 0.0;  // performance units
    double test_rmse = 0.0;
  };
  std::vector<Row> rows;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
};

/// Full-batch Adam on the mean-squared error. Output normalization is fitted to
/// the training targets first. Throws TrainingDivergedError (model restored to
/// the last finite state) on a non-finite loss.
TrainingTrace train(KanModel& model, const Dataset& data, const TrainOptions& options = {});

/// Mean squared error in normalized output units, i.e. the training loss.
double normalized_mse(const KanModel& model, const Matrix& inputs, const Vector& targets);
/// Gradient of normalized_mse with respect to parameters() (same layout).
std::vector<double> normalized_mse_gradient(const KanModel& model, const Matrix& inputs,
                                            const Vector& targets);

double rmse(const KanModel& model, const Matrix& inputs, const Vector& targets);

/// One model per slice behind the PerformanceModel interface.
class KanSurrogates : public PerformanceModel {
 public:
  explicit KanSurrogates(std::vector<KanModel> models) : models_(std::move(models)) {}

  std::size_t num_slices() const override { return models_.size(); }
  double evaluate(std::size_t slice, const Eigen::Ref<const Vector>& x) const override;
  double evaluate_with_gradient(std::size_t slice, const Eigen::Ref<const Vector>& x,
                                Eigen::Ref<Vector> gradient) const override;
  bool has_analytic_gradient() const override { return true; }

  const std::vector<KanModel>& models() const { return models_; }

 private:
  std::vector<KanModel> models_;
};

}  // namespace inslicing::kan
