#include "inslicing/kan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "inslicing/bspline.hpp"
#include "inslicing/error.hpp"
#include "inslicing/json_util.hpp"
#include "inslicing/rng.hpp"

namespace inslicing::kan {

double base_value(BaseFunction base, double x) {
  switch (base) {
    case BaseFunction::kSilu:
      return x / (1.0 + std::exp(-x));
    case BaseFunction::kIdentity:
      return x;
    case BaseFunction::kZero:
      return 0.0;
  }
  return 0.0;
}

double base_derivative(BaseFunction base, double x) {
  switch (base) {
    case BaseFunction::kSilu: {
      const double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 + x * (1.0 - s));
    }
    case BaseFunction::kIdentity:
      return 1.0;
    case BaseFunction::kZero:
      return 0.0;
  }
  return 0.0;
}

namespace {

constexpr int kMaxBasis = 9;

const char* base_name(BaseFunction b) {
  switch (b) {
    case BaseFunction::kSilu:
      return "silu";
    case BaseFunction::kIdentity:
      return "identity";
    case BaseFunction::kZero:
      return "zero";
  }
  return "silu";
}

BaseFunction base_from_name(const std::string& s) {
  if (s == "silu") return BaseFunction::kSilu;
  if (s == "identity") return BaseFunction::kIdentity;
  if (s == "zero") return BaseFunction::kZero;
  throw ConfigError("unknown base function '" + s + "'");
}

}  // namespace

SplineActivation SplineActivation::uniform(double lo, double hi, int grid_count, int degree,
                                           BaseFunction base) {
  SplineActivation a;
  a.degree = degree;
  a.base = base;
  a.knots = bspline::uniform_knots(lo, hi, grid_count, degree);
  a.coefficients.assign(static_cast<std::size_t>(grid_count + degree), 0.0);
  return a;
}

double SplineActivation::spline(double x) const {
  const double xc = std::clamp(x, lo(), hi());
  const int s = bspline::find_span(knots, degree, xc);
  double N[kMaxBasis];
  bspline::basis_functions(knots, degree, s, xc, std::span<double>(N, static_cast<std::size_t>(degree + 1)));
  double sum = 0.0;
  for (int m = 0; m <= degree; ++m) sum += coefficients[static_cast<std::size_t>(s - degree + m)] * N[m];
  return sum;
}

double SplineActivation::derivative(double x) const {
  double d = base_derivative(base, x);
  if (x >= lo() && x <= hi()) {
    const int s = bspline::find_span(knots, degree, x);
    double N[kMaxBasis], dN[kMaxBasis];
    const auto n = static_cast<std::size_t>(degree + 1);
    bspline::basis_functions_and_derivatives(knots, degree, s, x, std::span<double>(N, n),
                                             std::span<double>(dN, n));
    for (int m = 0; m <= degree; ++m) d += coefficients[static_cast<std::size_t>(s - degree + m)] * dN[m];
  }
  return weight * d;
}

double spline_eval(const SplineActivation& act, double x) {
  return act.weight * (base_value(act.base, x) + act.spline(x));
}

// ---------------------------------------------------------------------------
// KanLayer

KanLayer::KanLayer(int n_in, int n_out, std::vector<SplineActivation> activations)
    : n_in_(n_in), n_out_(n_out), acts_(std::move(activations)) {
  validate();
}

void KanLayer::validate() const {
  if (n_in_ < 1 || n_out_ < 1 || acts_.size() != static_cast<std::size_t>(n_in_ * n_out_))
    throw ShapeError("KAN layer needs n_out x n_in activations");
  for (int p = 0; p < n_in_; ++p) {
    const auto& ref = at(0, p);
    if (ref.degree < 0 || ref.degree + 1 > kMaxBasis) throw ConfigError("unsupported spline degree");
    if (!std::is_sorted(ref.knots.begin(), ref.knots.end()))
      throw ConfigError("knot vector must be non-decreasing");
    for (int j = 0; j < n_out_; ++j) {
      const auto& a = at(j, p);
      if (a.degree != ref.degree || a.knots != ref.knots)
        throw ConfigError("activations fed by the same input must share their knot vector");
      if (static_cast<int>(a.coefficients.size()) != bspline::basis_count(a.knots.size(), a.degree))
        throw ConfigError("coefficient count does not match knot vector");
    }
  }
}

void KanLayer::forward(std::span<const double> in, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  double N[kMaxBasis];
  for (int p = 0; p < n_in_; ++p) {
    const auto& ref = at(0, p);
    const int k = ref.degree;
    const double x = in[static_cast<std::size_t>(p)];
    const double xc = std::clamp(x, ref.lo(), ref.hi());
    const int s = bspline::find_span(ref.knots, k, xc);
    bspline::basis_functions(ref.knots, k, s, xc, std::span<double>(N, static_cast<std::size_t>(k + 1)));
    for (int j = 0; j < n_out_; ++j) {
      const auto& a = at(j, p);
      double spl = 0.0;
      const double* c = a.coefficients.data() + (s - k);
      for (int m = 0; m <= k; ++m) spl += c[m] * N[m];
      out[static_cast<std::size_t>(j)] += a.weight * (base_value(a.base, x) + spl);
    }
  }
}

// ---------------------------------------------------------------------------
// Forward/backward engine shared by gradient queries and training.

namespace {

struct LayerCache {
  std::vector<double> in;
  std::vector<int> span;
  std::vector<char> inside;
  std::vector<double> basis;   // n_in * (k+1)
  std::vector<double> dbasis;  // n_in * (k+1)
  std::vector<double> bval;
  std::vector<double> bder;
  std::vector<double> spl;  // n_out * n_in
  std::vector<double> out;
  std::vector<double> dout;
  std::vector<double> din;
  int stride = 0;
};

class Engine {
 public:
  explicit Engine(const KanModel& model) : model_(model) {
    const auto& layers = model.layers();
    caches_.resize(layers.size());
    std::size_t offset = 0;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& L = layers[l];
      auto& c = caches_[l];
      int maxk = 0;
      for (int p = 0; p < L.n_in(); ++p) maxk = std::max(maxk, L.at(0, p).degree);
      c.stride = maxk + 1;
      const auto nin = static_cast<std::size_t>(L.n_in());
      const auto nout = static_cast<std::size_t>(L.n_out());
      c.in.resize(nin);
      c.span.resize(nin);
      c.inside.resize(nin);
      c.basis.resize(nin * static_cast<std::size_t>(c.stride));
      c.dbasis.resize(nin * static_cast<std::size_t>(c.stride));
      c.bval.resize(nin);
      c.bder.resize(nin);
      c.spl.resize(nin * nout);
      c.out.resize(nout);
      c.dout.resize(nout);
      c.din.resize(nin);
      std::vector<std::size_t> offs;
      for (const auto& a : L.activations()) {
        offs.push_back(offset);
        offset += a.coefficients.size() + 1;
      }
      edge_offset_.push_back(std::move(offs));
    }
    parameter_count_ = offset;
  }

  std::size_t parameter_count() const { return parameter_count_; }

  /// Raw network output for normalized input u; caches intermediates.
  double forward_normalized(std::span<const double> u, bool need_derivatives) {
    const auto& layers = model_.layers();
    std::copy(u.begin(), u.end(), caches_[0].in.begin());
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& L = layers[l];
      auto& c = caches_[l];
      std::fill(c.out.begin(), c.out.end(), 0.0);
      for (int p = 0; p < L.n_in(); ++p) {
        const auto pi = static_cast<std::size_t>(p);
        const auto& ref = L.at(0, p);
        const int k = ref.degree;
        const double x = c.in[pi];
        const double xc = std::clamp(x, ref.lo(), ref.hi());
        c.inside[pi] = (x >= ref.lo() && x <= ref.hi()) ? 1 : 0;
        const int s = bspline::find_span(ref.knots, k, xc);
        c.span[pi] = s;
        double* N = c.basis.data() + pi * static_cast<std::size_t>(c.stride);
        const auto n = static_cast<std::size_t>(k + 1);
        if (need_derivatives) {
          bspline::basis_functions_and_derivatives(
              ref.knots, k, s, xc, std::span<double>(N, n),
              std::span<double>(c.dbasis.data() + pi * static_cast<std::size_t>(c.stride), n));
        } else {
          bspline::basis_functions(ref.knots, k, s, xc, std::span<double>(N, n));
        }
        for (int j = 0; j < L.n_out(); ++j) {
          const auto& a = L.at(j, p);
          const double* coef = a.coefficients.data() + (s - k);
          double spl = 0.0;
          for (int m = 0; m <= k; ++m) spl += coef[m] * N[m];
          const double b = base_value(a.base, x);
          c.spl[static_cast<std::size_t>(j * L.n_in() + p)] = spl;
          c.out[static_cast<std::size_t>(j)] += a.weight * (b + spl);
        }
        c.bval[pi] = base_value(ref.base, x);
        c.bder[pi] = base_derivative(ref.base, x);
      }
      if (l + 1 < layers.size()) std::copy(c.out.begin(), c.out.end(), caches_[l + 1].in.begin());
    }
    return caches_.back().out[0];
  }

  /// Backpropagates d(output)/d(output) = seed. Accumulates parameter gradients
  /// into `param_grad` when non-empty; returns d output / d u in `input_grad`.
  void backward(double seed, std::span<double> param_grad, std::span<double> input_grad) {
    const auto& layers = model_.layers();
    caches_.back().dout[0] = seed;
    for (std::size_t l = layers.size(); l-- > 0;) {
      const auto& L = layers[l];
      auto& c = caches_[l];
      std::fill(c.din.begin(), c.din.end(), 0.0);
      for (int j = 0; j < L.n_out(); ++j) {
        const double g = c.dout[static_cast<std::size_t>(j)];
        if (g == 0.0) continue;
        for (int p = 0; p < L.n_in(); ++p) {
          const auto pi = static_cast<std::size_t>(p);
          const auto e = static_cast<std::size_t>(j * L.n_in() + p);
          const auto& a = L.at(j, p);
          const int k = a.degree;
          const int s = c.span[pi];
          const double* N = c.basis.data() + pi * static_cast<std::size_t>(c.stride);
          const double* dN = c.dbasis.data() + pi * static_cast<std::size_t>(c.stride);
          const double b = a.base == L.at(0, p).base ? c.bval[pi] : base_value(a.base, c.in[pi]);
          const double db = a.base == L.at(0, p).base ? c.bder[pi] : base_derivative(a.base, c.in[pi]);
          if (!param_grad.empty()) {
            const std::size_t off = edge_offset_[l][e];
            for (int m = 0; m <= k; ++m)
              param_grad[off + static_cast<std::size_t>(s - k + m)] += g * a.weight * N[m];
            param_grad[off + a.coefficients.size()] += g * (b + c.spl[e]);
          }
          double dspl = 0.0;
          if (c.inside[pi]) {
            const double* coef = a.coefficients.data() + (s - k);
            for (int m = 0; m <= k; ++m) dspl += coef[m] * dN[m];
          }
          c.din[pi] += g * a.weight * (db + dspl);
        }
      }
      if (l > 0) std::copy(c.din.begin(), c.din.end(), caches_[l - 1].dout.begin());
    }
    std::copy(caches_[0].din.begin(), caches_[0].din.end(), input_grad.begin());
  }

 private:
  const KanModel& model_;
  std::vector<LayerCache> caches_;
  std::vector<std::vector<std::size_t>> edge_offset_;
  std::size_t parameter_count_ = 0;
};

void normalize_input(const KanModel& m, std::span<const double> x, std::span<double> u) {
  for (std::size_t p = 0; p < m.input_dim(); ++p) u[p] = m.input_scale[p] * x[p] + m.input_offset[p];
}

}  // namespace

// ---------------------------------------------------------------------------
// KanModel

KanModel KanModel::create(const Vector& lower, const Vector& upper, const KanOptions& opt) {
  if (lower.size() != upper.size() || lower.size() < 1) throw ShapeError("input bounds mismatch");
  if (opt.grid_count < 1 || opt.degree < 0 || opt.degree + 1 > kMaxBasis)
    throw ConfigError("invalid spline grid options");
  KanModel m;
  const auto d = static_cast<std::size_t>(lower.size());
  m.input_scale.resize(d);
  m.input_offset.resize(d);
  for (std::size_t p = 0; p < d; ++p) {
    const double lo = lower[static_cast<Eigen::Index>(p)];
    const double hi = upper[static_cast<Eigen::Index>(p)];
    if (hi > lo) {
      m.input_scale[p] = (opt.grid_hi - opt.grid_lo) / (hi - lo);
      m.input_offset[p] = opt.grid_lo - m.input_scale[p] * lo;
    } else {
      m.input_scale[p] = 0.0;
      m.input_offset[p] = 0.5 * (opt.grid_lo + opt.grid_hi);
    }
  }
  std::vector<int> widths;
  widths.push_back(static_cast<int>(d));
  for (int h : opt.hidden) {
    if (h < 1) throw ConfigError("hidden widths must be >= 1");
    widths.push_back(h);
  }
  widths.push_back(1);

  Rng rng = make_rng(opt.seed, {0x6b616eULL});
  std::normal_distribution<double> coef_dist(0.0, opt.init_noise);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int n_in = widths[l];
    const int n_out = widths[l + 1];
    const double limit = std::sqrt(3.0 / n_in);
    std::uniform_real_distribution<double> w_dist(-limit, limit);
    std::vector<SplineActivation> acts;
    acts.reserve(static_cast<std::size_t>(n_in * n_out));
    for (int e = 0; e < n_in * n_out; ++e) {
      auto a = SplineActivation::uniform(opt.grid_lo, opt.grid_hi, opt.grid_count, opt.degree, opt.base);
      for (auto& c : a.coefficients) c = coef_dist(rng);
      a.weight = w_dist(rng);
      acts.push_back(std::move(a));
    }
    m.layers_.emplace_back(n_in, n_out, std::move(acts));
  }
  return m;
}

KanModel KanModel::from_layers(std::vector<KanLayer> layers) {
  KanModel m;
  m.layers_ = std::move(layers);
  if (m.layers_.empty()) throw ShapeError("model needs at least one layer");
  const auto d = static_cast<std::size_t>(m.layers_.front().n_in());
  m.input_scale.assign(d, 1.0);
  m.input_offset.assign(d, 0.0);
  m.check_chain();
  return m;
}

void KanModel::check_chain() const {
  if (layers_.empty()) throw ShapeError("model needs at least one layer");
  for (std::size_t l = 1; l < layers_.size(); ++l)
    if (layers_[l].n_in() != layers_[l - 1].n_out()) throw ShapeError("layer widths do not chain");
  if (layers_.back().n_out() != 1) throw ShapeError("last layer must have a single output");
  if (static_cast<std::size_t>(layers_.front().n_in()) != input_scale.size() ||
      input_offset.size() != input_scale.size())
    throw ShapeError("normalization does not match input width");
}

double KanModel::forward(std::span<const double> x) const {
  if (x.size() != input_dim()) throw ShapeError("input has wrong dimension");
  std::vector<double> a(x.size());
  normalize_input(*this, x, a);
  std::vector<double> b;
  for (const auto& L : layers_) {
    b.assign(static_cast<std::size_t>(L.n_out()), 0.0);
    L.forward(a, b);
    a.swap(b);
  }
  return output_scale * a[0] + output_offset;
}

double KanModel::value_and_gradient(std::span<const double> x, std::span<double> gradient) const {
  if (x.size() != input_dim() || gradient.size() != input_dim())
    throw ShapeError("input has wrong dimension");
  Engine eng(*this);
  std::vector<double> u(x.size());
  normalize_input(*this, x, u);
  const double raw = eng.forward_normalized(u, true);
  eng.backward(1.0, {}, gradient);
  for (std::size_t p = 0; p < x.size(); ++p) gradient[p] *= output_scale * input_scale[p];
  return output_scale * raw + output_offset;
}

Vector KanModel::grad(const Eigen::Ref<const Vector>& x) const {
  Vector g(x.size());
  value_and_gradient(std::span(x.data(), static_cast<std::size_t>(x.size())),
                     std::span(g.data(), static_cast<std::size_t>(g.size())));
  return g;
}

std::pair<Vector, Vector> KanModel::input_domain() const {
  const auto d = static_cast<Eigen::Index>(input_dim());
  Vector lo(d), hi(d);
  for (Eigen::Index p = 0; p < d; ++p) {
    const auto& a = layers_.front().at(0, static_cast<int>(p));
    const double s = input_scale[static_cast<std::size_t>(p)];
    const double o = input_offset[static_cast<std::size_t>(p)];
    if (s == 0.0) {
      lo[p] = hi[p] = 0.0;
    } else {
      const double x0 = (a.lo() - o) / s;
      const double x1 = (a.hi() - o) / s;
      lo[p] = std::min(x0, x1);
      hi[p] = std::max(x0, x1);
    }
  }
  return {lo, hi};
}

std::size_t KanModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& L : layers_)
    for (const auto& a : L.activations()) n += a.coefficients.size() + 1;
  return n;
}

std::vector<double> KanModel::parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& L : layers_)
    for (const auto& a : L.activations()) {
      out.insert(out.end(), a.coefficients.begin(), a.coefficients.end());
      out.push_back(a.weight);
    }
  return out;
}

void KanModel::set_parameters(std::span<const double> params) {
  if (params.size() != parameter_count()) throw ShapeError("parameter vector has wrong length");
  std::size_t k = 0;
  for (auto& L : layers_)
    for (int j = 0; j < L.n_out(); ++j)
      for (int p = 0; p < L.n_in(); ++p) {
        auto& a = L.at(j, p);
        for (auto& c : a.coefficients) c = params[k++];
        a.weight = params[k++];
      }
}

// ---------------------------------------------------------------------------
// Serialization

void to_json(nlohmann::json& j, const KanModel& m) {
  using nlohmann::json;
  json layers = json::array();
  for (const auto& L : m.layers()) {
    json acts = json::array();
    for (const auto& a : L.activations())
      acts.push_back({{"knots", a.knots},
                      {"coefficients", a.coefficients},
                      {"weight", a.weight},
                      {"base", base_name(a.base)},
                      {"degree", a.degree}});
    layers.push_back({{"n_in", L.n_in()}, {"n_out", L.n_out()}, {"activations", std::move(acts)}});
  }
  j = {{"format", "inslicing-kan"},
       {"version", 1},
       {"input_scale", m.input_scale},
       {"input_offset", m.input_offset},
       {"output_scale", m.output_scale},
       {"output_offset", m.output_offset},
       {"layers", std::move(layers)}};
}

void from_json(const nlohmann::json& j, KanModel& m) {
  try {
    if (j.at("format").get<std::string>() != "inslicing-kan") throw ConfigError("not a KAN model document");
    std::vector<KanLayer> layers;
    for (const auto& lj : j.at("layers")) {
      std::vector<SplineActivation> acts;
      for (const auto& aj : lj.at("activations")) {
        SplineActivation a;
        a.knots = aj.at("knots").get<std::vector<double>>();
        a.coefficients = aj.at("coefficients").get<std::vector<double>>();
        a.weight = aj.at("weight").get<double>();
        a.base = base_from_name(aj.at("base").get<std::string>());
        a.degree = aj.at("degree").get<int>();
        if (a.knots.size() < static_cast<std::size_t>(2 * a.degree + 2))
          throw ConfigError("knot vector too short");
        acts.push_back(std::move(a));
      }
      layers.emplace_back(lj.at("n_in").get<int>(), lj.at("n_out").get<int>(), std::move(acts));
    }
    KanModel out = KanModel::from_layers(std::move(layers));
    out.input_scale = j.at("input_scale").get<std::vector<double>>();
    out.input_offset = j.at("input_offset").get<std::vector<double>>();
    out.output_scale = j.at("output_scale").get<double>();
    out.output_offset = j.at("output_offset").get<double>();
    out.check_chain();
    m = std::move(out);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("KAN model: ") + e.what());
  }
}

KanModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("model file " + path.string() + ": " + e.what());
  }
  return j.get<KanModel>();
}

void save_model(const KanModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write model file " + path.string());
  out << nlohmann::json(model).dump(1) << '\n';
}

// ---------------------------------------------------------------------------
// Datasets

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write dataset " + path.string());
  for (const auto& n : data.input_names) out << n << ',';
  out << "performance\n";
  out.precision(17);
  for (Eigen::Index s = 0; s < data.inputs.rows(); ++s) {
    for (Eigen::Index p = 0; p < data.inputs.cols(); ++p) out << data.inputs(s, p) << ',';
    out << data.targets[s] << '\n';
  }
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty dataset " + path.string());
  auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) parts.push_back(cell);
    return parts;
  };
  auto header = split(line);
  const auto perf = std::find(header.begin(), header.end(), "performance");
  if (perf == header.end()) throw ConfigError(path.string() + ": missing 'performance' column");
  const auto target_col = static_cast<std::size_t>(perf - header.begin());
  Dataset d;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (c != target_col) d.input_names.push_back(header[c]);
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != header.size())
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
    std::vector<double> v;
    try {
      for (const auto& c : cells) v.push_back(std::stod(c));
    } catch (const std::exception&) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": non-numeric cell");
    }
    rows.push_back(std::move(v));
  }
  if (rows.empty()) throw ConfigError(path.string() + ": no samples");
  d.inputs.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d.input_names.size()));
  d.targets.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t s = 0; s < rows.size(); ++s) {
    Eigen::Index p = 0;
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == target_col)
        d.targets[static_cast<Eigen::Index>(s)] = rows[s][c];
      else
        d.inputs(static_cast<Eigen::Index>(s), p++) = rows[s][c];
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Training

double rmse(const KanModel& model, const Matrix& inputs, const Vector& targets) {
  if (targets.size() == 0) return 0.0;
  double sse = 0.0;
  for (Eigen::Index s = 0; s < inputs.rows(); ++s) {
    const double e = model.forward(std::span(inputs.row(s).data(), static_cast<std::size_t>(inputs.cols()))) - targets[s];
    sse += e * e;
  }
  return std::sqrt(sse / static_cast<double>(targets.size()));
}

namespace {

/// Loss in normalized output units and (optionally) its parameter gradient.
double loss_and_gradient(Engine& eng, const KanModel& m, const Matrix& inputs, const Vector& targets,
                         std::vector<double>* grad) {
  const auto n = static_cast<double>(targets.size());
  std::vector<double> u(m.input_dim());
  std::vector<double> din(m.input_dim());
  if (grad) std::fill(grad->begin(), grad->end(), 0.0);
  double sse = 0.0;
  for (Eigen::Index s = 0; s < inputs.rows(); ++s) {
    normalize_input(m, std::span(inputs.row(s).data(), static_cast<std::size_t>(inputs.cols())), u);
    const double z = (targets[s] - m.output_offset) / m.output_scale;
    const double e = eng.forward_normalized(u, grad != nullptr) - z;
    sse += e * e;
    if (grad) eng.backward(2.0 * e / n, *grad, din);
  }
  return sse / n;
}

}  // namespace

double normalized_mse(const KanModel& model, const Matrix& inputs, const Vector& targets) {
  Engine eng(model);
  return loss_and_gradient(eng, model, inputs, targets, nullptr);
}

std::vector<double> normalized_mse_gradient(const KanModel& model, const Matrix& inputs,
                                            const Vector& targets) {
  Engine eng(model);
  std::vector<double> g(eng.parameter_count());
  loss_and_gradient(eng, model, inputs, targets, &g);
  return g;
}

TrainingTrace train(KanModel& model, const Dataset& data, const TrainOptions& opt) {
  if (data.size() == 0) throw ConfigError("training set is empty");
  if (opt.steps < 1) throw ConfigError("training needs at least one step");
  if (static_cast<std::size_t>(data.inputs.cols()) != model.input_dim())
    throw ShapeError("dataset width does not match model input dimension");

  // 80/20 split with a fixed shuffle; tiny sets train and test on everything.
  const std::size_t n = data.size();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(opt.shuffle_seed, {0x73706c6974ULL});
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_test = n >= 5 ? static_cast<std::size_t>(std::floor(static_cast<double>(n) * opt.test_fraction)) : 0;
  const std::size_t n_train = n - n_test;
  auto gather = [&](std::size_t from, std::size_t count, Matrix& X, Vector& y) {
    X.resize(static_cast<Eigen::Index>(count), data.inputs.cols());
    y.resize(static_cast<Eigen::Index>(count));
    for (std::size_t k = 0; k < count; ++k) {
      X.row(static_cast<Eigen::Index>(k)) = data.inputs.row(order[from + k]);
      y[static_cast<Eigen::Index>(k)] = data.targets[order[from + k]];
    }
  };
  Matrix Xtr, Xte;
  Vector ytr, yte;
  gather(0, n_train, Xtr, ytr);
  if (n_test > 0) {
    gather(n_train, n_test, Xte, yte);
  } else {
    Xte = Xtr;
    yte = ytr;
  }

  const double mean = ytr.mean();
  const double sd = std::sqrt((ytr.array() - mean).square().mean());
  model.output_offset = mean;
  model.output_scale = sd > 1e-12 ? sd : 1.0;

  TrainingTrace trace;
  trace.train_size = n_train;
  trace.test_size = n_test;

  Engine eng(model);
  const std::size_t np = eng.parameter_count();
  std::vector<double> params = model.parameters();
  std::vector<double> last_good = params;
  std::vector<double> grad(np), m1(np, 0.0), m2(np, 0.0);
  int last_good_step = 0;

  auto log_row = [&](int step, double loss) {
    trace.rows.push_back({step, std::sqrt(loss) * model.output_scale, rmse(model, Xte, yte)});
  };

  for (int step = 0; step <= opt.steps; ++step) {
    const double loss = loss_and_gradient(eng, model, Xtr, ytr, step < opt.steps ? &grad : nullptr);
    const bool finite = std::isfinite(loss) &&
                        std::all_of(grad.begin(), grad.end(), [](double g) { return std::isfinite(g); });
    if (!finite) {
      model.set_parameters(last_good);
      throw TrainingDivergedError("KAN training diverged at step " + std::to_string(step), last_good_step);
    }
    last_good = params;
    last_good_step = step;
    if (step % opt.log_interval == 0 || step == opt.steps) log_row(step, loss);
    if (step == opt.steps) break;

    const double t = step + 1;
    const double c1 = 1.0 - std::pow(opt.beta1, t);
    const double c2 = 1.0 - std::pow(opt.beta2, t);
    for (std::size_t k = 0; k < np; ++k) {
      m1[k] = opt.beta1 * m1[k] + (1.0 - opt.beta1) * grad[k];
      m2[k] = opt.beta2 * m2[k] + (1.0 - opt.beta2) * grad[k] * grad[k];
      params[k] -= opt.learning_rate * ((m1[k] / c1) / (std::sqrt(m2[k] / c2) + opt.epsilon) + opt.weight_decay * params[k]);
    }
    model.set_parameters(params);
  }
  return trace;
}

// ---------------------------------------------------------------------------

double KanSurrogates::evaluate(std::size_t slice, const Eigen::Ref<const Vector>& x) const {
  return models_.at(slice).forward(std::span(x.data(), static_cast<std::size_t>(x.size())));
}

double KanSurrogates::evaluate_with_gradient(std::size_t slice, const Eigen::Ref<const Vector>& x,
                                             Eigen::Ref<Vector> gradient) const {
  return models_.at(slice).value_and_gradient(
      std::span(x.data(), static_cast<std::size_t>(x.size())),
      std::span(gradient.data(), static_cast<std::size_t>(gradient.size())));
}

}  // namespace inslicing::kan
