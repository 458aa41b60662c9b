#include "inslicing/symbolic.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>

#include "inslicing/error.hpp"
#include "inslicing/rng.hpp"

namespace inslicing::symbolic {

double SymbolicExpression::evaluate(std::span<const double> x) const {
  double v = 0.0;
  for (const auto& t : terms) {
    switch (t.kind) {
      case TermKind::kLinear:
        v += t.a * x[t.input];
        break;
      case TermKind::kSine:
        v += t.a * std::sin(t.b * x[t.input] + t.c);
        break;
      case TermKind::kConstant:
        v += t.a;
        break;
    }
  }
  return v;
}

std::vector<Term> SymbolicExpression::terms_of(TermKind kind) const {
  std::vector<Term> out;
  std::copy_if(terms.begin(), terms.end(), std::back_inserter(out),
               [kind](const Term& t) { return t.kind == kind; });
  return out;
}

namespace {

std::string fmt(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

/// "a" with its sign folded into the joining operator.
void append_signed(std::string& s, double v, int precision, bool first) {
  if (first) {
    s += fmt(v, precision);
  } else {
    s += v < 0 ? " - " : " + ";
    s += fmt(std::abs(v), precision);
  }
}

double wrap_phase(double c) {
  constexpr double pi = std::numbers::pi;
  c = std::fmod(c, 2.0 * pi);
  if (c <= -pi) c += 2.0 * pi;
  if (c > pi) c -= 2.0 * pi;
  return c;
}

/// Canonical a > 0, b > 0, c in (-pi, pi] for a*sin(b t + c).
void canonicalize(Term& t) {
  if (t.b < 0) {
    t.b = -t.b;
    t.c = -t.c;
    t.a = -t.a;
  }
  if (t.a < 0) {
    t.a = -t.a;
    t.c += std::numbers::pi;
  }
  t.c = wrap_phase(t.c);
}

class Parser {
 public:
  explicit Parser(const std::string& s) : s_(s) {}

  SymbolicExpression run() {
    SymbolicExpression e;
    skip_ws();
    // Optional "P(x) =" prefix; any other left-hand side is rejected.
    const auto eq = s_.find('=');
    if (eq != std::string::npos) {
      std::string lhs;
      for (std::size_t k = 0; k < eq; ++k)
        if (!std::isspace(static_cast<unsigned char>(s_[k]))) lhs += s_[k];
      if (lhs != "P(x)") fail("expected 'P(x) =' prefix");
      pos_ = eq + 1;
    }
    bool first = true;
    while (true) {
      skip_ws();
      if (pos_ >= s_.size()) break;
      double sign = 1.0;
      if (!first) {
        if (s_[pos_] == '+') {
          ++pos_;
        } else if (s_[pos_] == '-') {
          sign = -1.0;
          ++pos_;
        } else {
          fail("expected '+' or '-'");
        }
      }
      first = false;
      Term t = term();
      t.a *= sign;
      e.terms.push_back(t);
      e.input_dim = std::max(e.input_dim, t.kind == TermKind::kConstant ? 0 : t.input + 1);
    }
    if (e.terms.empty()) fail("empty expression");
    return e;
  }

 private:
  Term term() {
    Term t;
    t.a = number();
    skip_ws();
    if (!consume('*')) {
      t.kind = TermKind::kConstant;
      return t;
    }
    skip_ws();
    if (s_.compare(pos_, 4, "sin(") == 0) {
      pos_ += 4;
      t.kind = TermKind::kSine;
      t.b = number();
      expect('*');
      t.input = variable();
      skip_ws();
      double sign = 1.0;
      if (consume('-'))
        sign = -1.0;
      else
        expect('+');
      t.c = sign * number();
      expect(')');
      return t;
    }
    t.kind = TermKind::kLinear;
    t.input = variable();
    return t;
  }

  std::size_t variable() {
    skip_ws();
    expect('x');
    const char* begin = s_.c_str() + pos_;
    char* end = nullptr;
    const long k = std::strtol(begin, &end, 10);
    if (end == begin || k < 1) fail("expected variable index");
    pos_ += static_cast<std::size_t>(end - begin);
    return static_cast<std::size_t>(k - 1);
  }

  double number() {
    skip_ws();
    const char* begin = s_.c_str() + pos_;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) fail("expected number");
    pos_ += static_cast<std::size_t>(end - begin);
    return v;
  }

  bool consume(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!consume(c)) fail(std::string("expected '") + c + "'");
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError("formula parse error at column " + std::to_string(pos_ + 1) + ": " + what);
  }

  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string SymbolicExpression::to_string(int precision) const {
  std::string s = "P(x) = ";
  bool first = true;
  auto emit = [&](TermKind kind) {
    for (const auto& t : terms) {
      if (t.kind != kind) continue;
      append_signed(s, t.a, precision, first);
      first = false;
      const std::string var = "x" + std::to_string(t.input + 1);
      if (kind == TermKind::kLinear) {
        s += "*" + var;
      } else if (kind == TermKind::kSine) {
        s += "*sin(" + fmt(t.b, precision) + "*" + var + (t.c < 0 ? " - " : " + ") +
             fmt(std::abs(t.c), precision) + ")";
      }
    }
  };
  emit(TermKind::kLinear);
  emit(TermKind::kSine);
  emit(TermKind::kConstant);
  if (first) s += fmt(0.0, precision);
  return s;
}

SymbolicExpression SymbolicExpression::parse(const std::string& text) { return Parser(text).run(); }

// ---------------------------------------------------------------------------
// 1-D curve fitting

namespace {

struct SineParams {
  double a, b, c;
};

double model_value(double t, double slope, double intercept, const std::vector<SineParams>& sines) {
  double v = slope * t + intercept;
  for (const auto& s : sines) v += s.a * std::sin(s.b * t + s.c);
  return v;
}

double rms_residual(std::span<const double> t, std::span<const double> y, double slope, double intercept,
                    const std::vector<SineParams>& sines) {
  double sse = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double e = y[k] - model_value(t[k], slope, intercept, sines);
    sse += e * e;
  }
  return std::sqrt(sse / static_cast<double>(t.size()));
}

/// Least squares on a fixed design; returns coefficients.
Vector solve_ls(const Eigen::MatrixXd& A, const Vector& y) {
  return A.colPivHouseholderQr().solve(y);
}

/// Joint Levenberg-Marquardt refinement of slope, intercept and all sines.
void levenberg_marquardt(std::span<const double> t, std::span<const double> y, double& slope,
                         double& intercept, std::vector<SineParams>& sines) {
  const auto n = static_cast<Eigen::Index>(t.size());
  const Eigen::Index np = 2 + 3 * static_cast<Eigen::Index>(sines.size());
  auto pack = [&] {
    Vector th(np);
    th[0] = slope;
    th[1] = intercept;
    for (std::size_t k = 0; k < sines.size(); ++k) {
      const auto o = 2 + 3 * static_cast<Eigen::Index>(k);
      th[o] = sines[k].a;
      th[o + 1] = sines[k].b;
      th[o + 2] = sines[k].c;
    }
    return th;
  };
  auto unpack = [&](const Vector& th) {
    slope = th[0];
    intercept = th[1];
    for (std::size_t k = 0; k < sines.size(); ++k) {
      const auto o = 2 + 3 * static_cast<Eigen::Index>(k);
      sines[k] = {th[o], th[o + 1], th[o + 2]};
    }
  };
  auto residuals = [&](const Vector& th, Vector& r, Eigen::MatrixXd* J) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ti = t[static_cast<std::size_t>(i)];
      double v = th[0] * ti + th[1];
      if (J) {
        (*J)(i, 0) = ti;
        (*J)(i, 1) = 1.0;
      }
      for (std::size_t k = 0; k < sines.size(); ++k) {
        const auto o = 2 + 3 * static_cast<Eigen::Index>(k);
        const double arg = th[o + 1] * ti + th[o + 2];
        const double s = std::sin(arg), c = std::cos(arg);
        v += th[o] * s;
        if (J) {
          (*J)(i, o) = s;
          (*J)(i, o + 1) = th[o] * ti * c;
          (*J)(i, o + 2) = th[o] * c;
        }
      }
      r[i] = v - y[static_cast<std::size_t>(i)];
    }
  };

  Vector th = pack();
  Vector r(n), r_new(n);
  Eigen::MatrixXd J(n, np);
  residuals(th, r, &J);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  for (int it = 0; it < 200; ++it) {
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Vector g = J.transpose() * r;
    Eigen::MatrixXd H = JtJ;
    H.diagonal() += lambda * JtJ.diagonal().cwiseMax(1e-12);
    const Vector step = H.ldlt().solve(-g);
    if (!step.allFinite()) break;
    const Vector trial = th + step;
    residuals(trial, r_new, nullptr);
    const double c_new = r_new.squaredNorm();
    if (c_new < cost) {
      const double rel = (cost - c_new) / std::max(cost, 1e-300);
      th = trial;
      cost = c_new;
      residuals(th, r, &J);
      lambda = std::max(lambda * 0.3, 1e-12);
      if (rel < 1e-14) break;
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
  }
  unpack(th);
}

/// Best single frequency for the residual by a scan of [1, t, sin, cos] fits.
SineParams scan_frequency(std::span<const double> t, std::span<const double> resid) {
  const auto n = static_cast<Eigen::Index>(t.size());
  const auto [tmin, tmax] = std::minmax_element(t.begin(), t.end());
  const double span = std::max(*tmax - *tmin, 1e-12);
  const double spacing = span / static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
  const double b_lo = 0.25 * std::numbers::pi / span;
  const double b_hi = std::numbers::pi / (4.0 * spacing);
  constexpr int kScan = 600;
  Vector yv(n);
  for (Eigen::Index i = 0; i < n; ++i) yv[i] = resid[static_cast<std::size_t>(i)];
  Eigen::MatrixXd A(n, 4);
  double best_sse = std::numeric_limits<double>::infinity();
  SineParams best{0.0, b_lo, 0.0};
  for (int s = 0; s < kScan; ++s) {
    // Log-spaced so low frequencies get the same relative resolution.
    const double b = b_lo * std::pow(b_hi / b_lo, static_cast<double>(s) / (kScan - 1));
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ti = t[static_cast<std::size_t>(i)];
      A(i, 0) = 1.0;
      A(i, 1) = ti;
      A(i, 2) = std::sin(b * ti);
      A(i, 3) = std::cos(b * ti);
    }
    const Vector coef = solve_ls(A, yv);
    const double sse = (A * coef - yv).squaredNorm();
    if (sse < best_sse) {
      best_sse = sse;
      best = {std::hypot(coef[2], coef[3]), b, std::atan2(coef[3], coef[2])};
    }
  }
  return best;
}

}  // namespace

CurveFit fit_curve(std::span<const double> t, std::span<const double> y, double output_range,
                   const SymbolicOptions& opt) {
  if (t.size() != y.size() || t.size() < 2) throw ShapeError("curve fit needs matching samples");
  const auto n = static_cast<Eigen::Index>(t.size());
  Eigen::MatrixXd A(n, 2);
  Vector yv(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    A(i, 0) = t[static_cast<std::size_t>(i)];
    A(i, 1) = 1.0;
    yv[i] = y[static_cast<std::size_t>(i)];
  }
  const Vector lin = solve_ls(A, yv);
  double slope = lin[0], intercept = lin[1];
  std::vector<SineParams> sines;
  double rmse = rms_residual(t, y, slope, intercept, sines);

  std::vector<double> resid(t.size());
  for (int k = 0; k < opt.max_sines_per_input; ++k) {
    if (rmse <= opt.min_residual_fraction * output_range) break;
    for (std::size_t i = 0; i < t.size(); ++i) resid[i] = y[i] - model_value(t[i], slope, intercept, sines);
    auto trial_sines = sines;
    trial_sines.push_back(scan_frequency(t, resid));
    double trial_slope = slope, trial_intercept = intercept;
    levenberg_marquardt(t, y, trial_slope, trial_intercept, trial_sines);
    const double trial_rmse = rms_residual(t, y, trial_slope, trial_intercept, trial_sines);
    if (!(trial_rmse <= opt.min_improvement * rmse)) break;
    slope = trial_slope;
    intercept = trial_intercept;
    sines = std::move(trial_sines);
    rmse = trial_rmse;
  }

  CurveFit fit;
  fit.intercept = intercept;
  fit.rmse = rmse;
  fit.terms.push_back({TermKind::kLinear, 0, slope, 0.0, 0.0});
  for (const auto& s : sines) {
    Term term{TermKind::kSine, 0, s.a, s.b, s.c};
    canonicalize(term);
    fit.terms.push_back(term);
  }
  return fit;
}

// ---------------------------------------------------------------------------

SymbolicExpression extract_symbolic(const kan::KanModel& model, const SymbolicOptions& opt) {
  const std::size_t d = model.input_dim();
  if (d == 0) throw ShapeError("model has no inputs");
  if (opt.background_samples < 1 || opt.grid_points < 2 || opt.fidelity_samples < 1)
    throw ConfigError("symbolic extraction sample counts too small");
  const auto [lo, hi] = model.input_domain();
  Rng rng = make_rng(opt.seed, {0x73796dULL});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto draw = [&](Matrix& pts, int count) {
    pts.resize(count, static_cast<Eigen::Index>(d));
    for (Eigen::Index s = 0; s < count; ++s)
      for (Eigen::Index p = 0; p < static_cast<Eigen::Index>(d); ++p)
        pts(s, p) = lo[p] + (hi[p] - lo[p]) * unit(rng);
  };
  Matrix background, fidelity;
  draw(background, opt.background_samples);
  draw(fidelity, opt.fidelity_samples);

  auto f = [&](const double* x) { return model.forward(std::span(x, d)); };

  std::vector<double> fvals(static_cast<std::size_t>(opt.fidelity_samples));
  for (Eigen::Index s = 0; s < fidelity.rows(); ++s) fvals[static_cast<std::size_t>(s)] = f(fidelity.row(s).data());
  const auto [fmin, fmax] = std::minmax_element(fvals.begin(), fvals.end());
  const double range = std::max(*fmax - *fmin, 1e-12);

  SymbolicExpression expr;
  expr.input_dim = d;
  expr.output_range = range;

  // Main effect of input p: average over the background with x_p pinned.
  std::vector<double> tgrid(static_cast<std::size_t>(opt.grid_points));
  std::vector<double> effect(tgrid.size());
  std::vector<double> x(d);
  for (std::size_t p = 0; p < d; ++p) {
    if (hi[static_cast<Eigen::Index>(p)] <= lo[static_cast<Eigen::Index>(p)]) continue;
    for (std::size_t k = 0; k < tgrid.size(); ++k) {
      const double t = lo[static_cast<Eigen::Index>(p)] + (hi[static_cast<Eigen::Index>(p)] - lo[static_cast<Eigen::Index>(p)]) *
                                                               static_cast<double>(k) / static_cast<double>(tgrid.size() - 1);
      tgrid[k] = t;
      double sum = 0.0;
      for (Eigen::Index s = 0; s < background.rows(); ++s) {
        std::copy_n(background.row(s).data(), d, x.begin());
        x[p] = t;
        sum += f(x.data());
      }
      effect[k] = sum / static_cast<double>(background.rows());
    }
    CurveFit fit = fit_curve(tgrid, effect, range, opt);
    for (auto term : fit.terms) {
      term.input = p;
      expr.terms.push_back(term);
    }
  }

  // Constant that centres the additive part on the network over the fidelity sample.
  double offset = 0.0;
  for (Eigen::Index s = 0; s < fidelity.rows(); ++s)
    offset += fvals[static_cast<std::size_t>(s)] -
              expr.evaluate(std::span(fidelity.row(s).data(), d));
  offset /= static_cast<double>(fidelity.rows());
  expr.terms.push_back({TermKind::kConstant, 0, offset, 0.0, 0.0});

  double sse = 0.0;
  for (Eigen::Index s = 0; s < fidelity.rows(); ++s) {
    const double e = fvals[static_cast<std::size_t>(s)] - expr.evaluate(std::span(fidelity.row(s).data(), d));
    sse += e * e;
  }
  expr.fit_rmse = std::sqrt(sse / static_cast<double>(fidelity.rows()));
  expr.low_fidelity = expr.fit_rmse > opt.low_fidelity_fraction * range;
  return expr;
}

}  // namespace inslicing::symbolic
