#include "inslicing/trust_region.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

#include "inslicing/error.hpp"

namespace inslicing::trm {

void TrmParams::validate() const {
  if (!(initial_radius > 0.0 && max_radius >= initial_radius)) throw ConfigError("trm radius must satisfy 0 < initial <= max");
  if (max_iterations < 0) throw ConfigError("trm.max_iterations must be >= 0");
  if (!(shrink > 0.0 && shrink < 1.0 && expand > 1.0)) throw ConfigError("trm requires 0 < shrink < 1 < expand");
  if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("trm.eta must be in (0, 1)");
  if (!(fd_step > 0.0)) throw ConfigError("trm.fd_step must be > 0");
}

Vector central_difference_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  Vector g(x.size());
  Vector xp = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double orig = xp[k];
    xp[k] = orig + h;
    const double fp = f(xp);
    xp[k] = orig - h;
    const double fm = f(xp);
    xp[k] = orig;
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

double evaluate_with_gradient(const Objective& f, const Vector& x, double fd_step, Vector& grad) {
  double v;
  if (f.value_and_gradient) {
    grad.resize(x.size());
    v = f.value_and_gradient(x, grad);
  } else {
    v = f.value(x);
    grad = central_difference_gradient(f.value, x, fd_step);
  }
  if (!std::isfinite(v) || !grad.allFinite()) throw EvaluationError("objective is not finite at the model point");
  return v;
}

bool bfgs_update(Dense& B, const Vector& s, const Vector& y, double tol) {
  const double sy = s.dot(y);
  if (!(sy > tol)) return false;
  const Vector Bs = B * s;
  const double sBs = s.dot(Bs);
  if (!(sBs > 0.0)) return false;
  B += (y * y.transpose()) / sy - (Bs * Bs.transpose()) / sBs;
  B = 0.5 * (B + B.transpose());
  return true;
}

double model_change(const Vector& g, const Dense& B, const Vector& s) { return g.dot(s) + 0.5 * s.dot(B * s); }

Vector cauchy_point(const Vector& g, const Dense& B, double radius) {
  const double gn = g.norm();
  if (gn == 0.0) return Vector::Zero(g.size());
  const double gBg = g.dot(B * g);
  double tau = 1.0;
  if (gBg > 0.0) tau = std::min(gn * gn * gn / (radius * gBg), 1.0);
  return -tau * radius / gn * g;
}

Vector solve_subproblem(const Vector& g, const Dense& B, double radius) {
  if (!(radius > 0.0)) throw ConfigError("trust radius must be positive");
  const double gn = g.norm();
  if (gn == 0.0) return Vector::Zero(g.size());
  Eigen::LLT<Dense> llt(B);
  if (llt.info() != Eigen::Success) return cauchy_point(g, B, radius);
  const Vector pB = -llt.solve(g);
  if (!pB.allFinite()) return cauchy_point(g, B, radius);
  if (pB.norm() <= radius) return pB;
  const double gBg = g.dot(B * g);
  const Vector pU = -(gn * gn / gBg) * g;
  const double pUn = pU.norm();
  if (pUn >= radius) return -(radius / gn) * g;
  // pU + tau (pB - pU) on the sphere, tau in [0, 1].
  const Vector d = pB - pU;
  const double a = d.squaredNorm();
  const double b = 2.0 * pU.dot(d);
  const double c = pUn * pUn - radius * radius;
  const double disc = std::max(b * b - 4.0 * a * c, 0.0);
  // Numerically stable larger root.
  const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
  double tau = (q != 0.0) ? std::max(q / a, c / q) : 0.0;
  tau = std::clamp(tau, 0.0, 1.0);
  return pU + tau * d;
}

RadiusUpdate update_radius(double actual, double predicted, double radius, double step_norm,
                           const TrmParams& params) {
  if (!(predicted > 0.0)) throw SubproblemDegenerateError("model predicts no decrease");
  RadiusUpdate u;
  u.rho = std::isfinite(actual) ? actual / predicted : -std::numeric_limits<double>::infinity();
  u.radius = radius;
  if (u.rho < 0.25) {
    u.radius = params.shrink * radius;
  } else if (u.rho > 0.75 && step_norm >= (1.0 - 1e-9) * radius) {
    u.radius = std::min(params.expand * radius, params.max_radius);
  }
  u.accepted = u.rho >= params.eta;
  return u;
}

RefineResult refine(const Objective& f, const Vector& x_start, const TrmParams& params, const std::optional<Box>& box) {
  params.validate();
  const Eigen::Index n = x_start.size();
  if (box && box->size() != n) throw ShapeError("box does not match the start point");
  RefineResult res;
  TrustRegionState st;
  st.x = box ? box->clip(x_start) : x_start;
  st.radius = params.initial_radius;
  st.B = Dense::Identity(n, n);
  st.f = evaluate_with_gradient(f, st.x, params.fd_step, st.grad);
  ++res.value_evaluations;
  ++res.gradient_evaluations;
  Dense C = f.curvature ? f.curvature(st.x, st.radius) : Dense::Zero(n, n);

  std::vector<Eigen::Index> free;
  for (int k = 0; k < params.max_iterations; ++k) {
    // Active set: coordinates pinned to a bound by an outward-pointing gradient.
    free.clear();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (box) {
        const bool at_lo = st.x[j] <= box->lower[j] && st.grad[j] > 0.0;
        const bool at_hi = st.x[j] >= box->upper[j] && st.grad[j] < 0.0;
        if (at_lo || at_hi) continue;
      }
      free.push_back(j);
    }
    const auto m = static_cast<Eigen::Index>(free.size());
    Vector gf(m);
    Dense Bf(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
      gf[a] = st.grad[free[static_cast<std::size_t>(a)]];
      for (Eigen::Index b = 0; b < m; ++b) {
        const auto ia = free[static_cast<std::size_t>(a)];
        const auto ib = free[static_cast<std::size_t>(b)];
        Bf(a, b) = st.B(ia, ib) + C(ia, ib);
      }
    }
    if (m == 0 || gf.norm() <= params.gradient_tol) break;

    const Vector sf = solve_subproblem(gf, Bf, st.radius);
    Vector trial = st.x;
    for (Eigen::Index a = 0; a < m; ++a) trial[free[static_cast<std::size_t>(a)]] += sf[a];
    bool clipped = false;
    if (box) {
      const Vector unclipped = trial;
      trial = box->clip(trial);
      clipped = trial != unclipped;
    }
    const Vector s = trial - st.x;
    const double predicted = -model_change(st.grad, st.B + C, s);
    if (!(predicted > 0.0)) {
      if (!clipped) break;  // degenerate subproblem ends the loop
      // Clipping spoiled the step: retry on a smaller ball without evaluating f.
      st.radius *= params.shrink;
      if (f.curvature) C = f.curvature(st.x, st.radius);
      res.trace.push_back({k, st.f, st.radius, 0.0, false});
      if (st.radius < 1e-14) break;
      continue;
    }

    const double f_trial = f.value(trial);
    ++res.value_evaluations;
    const RadiusUpdate up = update_radius(st.f - f_trial, predicted, st.radius, sf.norm(), params);
    ++res.iterations;
    if (up.accepted) {
      Vector g_new;
      const double f_new = evaluate_with_gradient(f, trial, params.fd_step, g_new);
      ++res.gradient_evaluations;
      Vector y = g_new - st.grad;
      if (f.curvature) {
        C = f.curvature(trial, up.radius);
        y -= C * s;
      }
      bfgs_update(st.B, s, y, params.curvature_tol);
      st.x = trial;
      st.f = f_new;
      st.grad = std::move(g_new);
    }
    if (f.curvature && !up.accepted) C = f.curvature(st.x, up.radius);
    st.radius = up.radius;
    res.trace.push_back({k, st.f, st.radius, up.rho, up.accepted});
    if (st.radius < 1e-14) break;
  }
  res.x = st.x;
  res.f = st.f;
  return res;
}

}  // namespace inslicing::trm
