#include "inslicing/gbo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Dense>

#include "inslicing/error.hpp"
#include "inslicing/rng.hpp"

namespace inslicing::gbo {

namespace {

constexpr double kJitterLadder[] = {0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2};

Dense cross_kernel(const KernelParams& k, const Dense& A, const Dense& B) {
  const Vector an = A.colwise().squaredNorm().transpose();
  const Vector bn = B.colwise().squaredNorm().transpose();
  Dense D = -2.0 * A.transpose() * B;
  D.colwise() += an;
  D.rowwise() += bn.transpose();
  const double inv = -0.5 / (k.length_scale * k.length_scale);
  return k.signal_variance * (D.cwiseMax(0.0) * inv).array().exp().matrix();
}

}  // namespace

double kernel(const KernelParams& k, const Vector& a, const Vector& b) {
  return k.signal_variance * std::exp(-(a - b).squaredNorm() / (2.0 * k.length_scale * k.length_scale));
}

GpModel GpModel::fit(const Dense& X, const Vector& y, const KernelParams& params, bool standardize) {
  if (X.cols() != y.size() || y.size() < 1) throw ShapeError("GP needs at least one observation with matching inputs");
  if (!(params.length_scale > 0.0 && params.signal_variance > 0.0 && params.noise_variance >= 0.0))
    throw ConfigError("GP kernel parameters must be positive");
  GpModel m;
  m.params_ = params;
  m.standardize_ = standardize;
  m.X_ = X;
  m.y_ = y;
  m.factorize();
  m.refresh_weights();
  return m;
}

void GpModel::factorize() {
  const Dense K = cross_kernel(params_, X_, X_);
  const auto n = K.rows();
  for (double j : kJitterLadder) {
    const double jitter = j * params_.signal_variance;
    if (jitter < jitter_) continue;
    Dense A = K;
    A.diagonal().array() += params_.noise_variance + jitter;
    Eigen::LLT<Dense> llt(A);
    if (llt.info() == Eigen::Success) {
      jitter_ = jitter;
      L_ = llt.matrixL();
      return;
    }
  }
  throw ConditioningError("kernel matrix is not positive definite for " + std::to_string(n) +
                          " points even with jitter");
}

void GpModel::refresh_weights() {
  if (standardize_) {
    y_mean_ = y_.mean();
    const double sd = std::sqrt((y_.array() - y_mean_).square().mean());
    y_scale_ = sd > 1e-12 ? sd : 1.0;
  } else {
    y_mean_ = 0.0;
    y_scale_ = 1.0;
  }
  const Vector z = (y_.array() - y_mean_) / y_scale_;
  alpha_ = L_.triangularView<Eigen::Lower>().solve(z);
  L_.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha_);
}

void GpModel::append(const Vector& x, double y) {
  if (x.size() != X_.rows()) throw ShapeError("GP input has wrong dimension");
  const auto n = X_.cols();
  Vector k(n);
  for (Eigen::Index i = 0; i < n; ++i) k[i] = kernel(params_, X_.col(i), x);
  X_.conservativeResize(Eigen::NoChange, n + 1);
  X_.col(n) = x;
  y_.conservativeResize(n + 1);
  y_[n] = y;
  const Vector l = L_.triangularView<Eigen::Lower>().solve(k);
  const double d2 = params_.signal_variance + params_.noise_variance + jitter_ - l.squaredNorm();
  if (d2 > 1e-14 * params_.signal_variance) {
    L_.conservativeResize(n + 1, n + 1);
    L_.row(n).head(n) = l.transpose();
    L_.col(n).setZero();
    L_(n, n) = std::sqrt(d2);
  } else {
    factorize();
  }
  refresh_weights();
}

std::pair<double, double> GpModel::predict(const Vector& x) const {
  Vector mean, var;
  Dense C = x;
  predict_batch(C, mean, var);
  return {mean[0], var[0]};
}

void GpModel::predict_batch(const Dense& C, Vector& mean, Vector& variance) const {
  if (C.rows() != X_.rows()) throw ShapeError("GP candidates have wrong dimension");
  const Dense Ks = cross_kernel(params_, X_, C);  // n x m
  mean = (Ks.transpose() * alpha_).array() * y_scale_ + y_mean_;
  const Dense V = L_.triangularView<Eigen::Lower>().solve(Ks);
  variance = ((params_.signal_variance - V.colwise().squaredNorm().array()).max(0.0) * y_scale_ * y_scale_).transpose();
}

double expected_improvement(double mean, double sigma, double best) {
  const double diff = best - mean;
  if (!(sigma > 0.0)) return std::max(diff, 0.0);
  const double z = diff / sigma;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return std::max(diff * cdf + sigma * pdf, 0.0);
}

double expected_improvement(const GpModel& model, const Vector& x, double best) {
  const auto [mu, var] = model.predict(x);
  return expected_improvement(mu, std::sqrt(var), best);
}

void GboParams::validate() const {
  if (initial_samples < 1 || budget < initial_samples) throw ConfigError("gbo requires budget >= initial_samples >= 1");
  if (candidates < 1) throw ConfigError("gbo.candidates must be >= 1");
  if (!(local_fraction >= 0.0 && local_fraction <= 1.0)) throw ConfigError("gbo.local_fraction must be in [0, 1]");
  if (!(local_sigma > 0.0)) throw ConfigError("gbo.local_sigma must be > 0");
  if (polish_steps < 0) throw ConfigError("gbo.polish_steps must be >= 0");
  if (!(design_fraction > 0.0 && design_fraction <= 1.0)) throw ConfigError("gbo.design_fraction must be in (0, 1]");
  if (!(kernel.length_scale > 0.0 && kernel.signal_variance > 0.0 && kernel.noise_variance >= 0.0))
    throw ConfigError("gbo.kernel requires length_scale > 0, signal_variance > 0, noise_variance >= 0");
}

GboResult gbo_optimize(const Box& box, const BlackBox& objective, const GboParams& params) {
  params.validate();
  const Eigen::Index d = box.size();
  const Vector width = box.upper - box.lower;
  Rng rng = make_rng(params.rng_seed, {0x67626fULL});
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::normal_distribution<double> N(0.0, 1.0);
  auto uniform_point = [&] {
    Vector x(d);
    for (Eigen::Index k = 0; k < d; ++k) x[k] = box.lower[k] + params.design_fraction * width[k] * U(rng);
    return x;
  };

  GboResult res;
  res.best_cost = std::numeric_limits<double>::infinity();
  res.best_penalized = std::numeric_limits<double>::infinity();
  Dense X(d, 0);
  std::vector<double> values;
  Vector incumbent;  // best penalized input
  std::size_t eval = 0;
  auto record = [&](const Vector& x) {
    const Observation ob = objective(x, eval);
    const double pen = std::isfinite(ob.penalized) ? ob.penalized : std::numeric_limits<double>::max();
    if (pen < res.best_penalized) {
      res.best_penalized = pen;
      incumbent = x;
      if (!res.feasible) res.best_x = x;
    }
    if (ob.feasible && ob.cost < res.best_cost) {
      res.best_cost = ob.cost;
      res.best_x = x;
      res.feasible = true;
    }
    res.trace.push_back({eval, pen, ob.cost, ob.feasible, res.best_cost, res.best_penalized});
    X.conservativeResize(Eigen::NoChange, X.cols() + 1);
    X.col(X.cols() - 1) = x;
    values.push_back(pen);
    ++eval;
  };

  for (int s = 0; s < params.initial_samples; ++s) record(uniform_point());

  // Signed log target transform; the shift is frozen after the initial design
  // so that incremental updates stay consistent.
  const double shift = *std::min_element(values.begin(), values.end());
  auto transform = [&](double v) {
    if (!params.log_transform) return v;
    return v >= shift ? std::log1p(v - shift) : -std::log1p(shift - v);
  };
  Vector yt(static_cast<Eigen::Index>(values.size()));
  for (std::size_t k = 0; k < values.size(); ++k) yt[static_cast<Eigen::Index>(k)] = transform(values[k]);
  GpModel gp = GpModel::fit(X, yt, params.kernel, params.standardize);

  const int n_local = static_cast<int>(std::lround(params.local_fraction * params.candidates));
  Dense C(d, params.candidates);
  Vector mu, var;
  while (static_cast<int>(eval) < params.budget) {
    const double best_t = transform(res.best_penalized);
    for (int c = 0; c < params.candidates; ++c) {
      if (c < n_local) {
        for (Eigen::Index k = 0; k < d; ++k)
          C(k, c) = std::clamp(incumbent[k] + params.local_sigma * width[k] * N(rng), box.lower[k], box.upper[k]);
      } else {
        C.col(c) = uniform_point();
      }
    }
    gp.predict_batch(C, mu, var);
    Eigen::Index best_c = 0;
    double best_ei = -1.0;
    for (Eigen::Index c = 0; c < C.cols(); ++c) {
      const double ei = expected_improvement(mu[c], std::sqrt(var[c]), best_t);
      if (ei > best_ei) {
        best_ei = ei;
        best_c = c;
      }
    }
    // Local polish: shrinking Gaussian perturbations of the EI maximizer.
    Vector x = C.col(best_c);
    double sigma = 0.25 * params.local_sigma;
    for (int p = 0; p < params.polish_steps; ++p) {
      Vector trial(d);
      for (Eigen::Index k = 0; k < d; ++k)
        trial[k] = std::clamp(x[k] + sigma * width[k] * N(rng), box.lower[k], box.upper[k]);
      const double ei = expected_improvement(gp, trial, best_t);
      if (ei > best_ei) {
        best_ei = ei;
        x = trial;
      } else {
        sigma *= 0.85;
      }
    }
    record(x);
    gp.append(x, transform(values.back()));
  }
  return res;
}

}  // namespace inslicing::gbo
