#include "homog/fields.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "homog/error.hpp"

namespace homog {

namespace detail {

struct FieldModel {
  int dim = 1;
  Bounds bounds{};
  FieldKind kind = FieldKind::constant;
  std::uint64_t seed = 0;
  std::array<double, 3> shift{};

  virtual ~FieldModel() = default;
  virtual CoefficientSample sample(const SpacePoint& y, double s) const = 0;
  virtual bool a_time_invariant() const = 0;
  virtual bool time_invariant() const = 0;
  virtual std::optional<double> spatial_period() const = 0;
  virtual std::optional<double> time_period() const = 0;
  virtual double max_b_norm() const = 0;
  virtual std::string describe() const = 0;
};

}  // namespace detail

namespace {

constexpr double kBoundSlack = 1e-12;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

double vec_norm2(const Vec2& b, int dim) { return dim == 2 ? b[0] * b[0] + b[1] * b[1] : b[0] * b[0]; }

struct ConstantModel final : detail::FieldModel {
  CoefficientSample value;
  CoefficientSample sample(const SpacePoint&, double) const override { return value; }
  bool a_time_invariant() const override { return true; }
  bool time_invariant() const override { return true; }
  std::optional<double> spatial_period() const override { return 1.0; }
  std::optional<double> time_period() const override { return 1.0; }
  double max_b_norm() const override { return std::sqrt(vec_norm2(value.b, dim)); }
  std::string describe() const override { return "constant"; }
};

struct PeriodicModel final : detail::FieldModel {
  PeriodicParams p;
  CoefficientSample sample(const SpacePoint& y, double s) const override {
    const double sy = std::sin(kTwoPi * y[0]);
    const double cy = std::cos(kTwoPi * y[0]);
    const double cs = std::cos(kTwoPi * s);
    CoefficientSample out;
    const double w = p.alpha * sy * cs;
    for (int k = 0; k < 4; ++k) out.a.v[k] = p.a0.v[k] + w * p.M.v[k];
    out.b = p.b0;
    out.b[0] += p.b_amp * cy;
    out.d = p.d0 + p.d_amp * sy * cs;
    return out;
  }
  bool a_time_invariant() const override { return p.alpha == 0.0; }
  bool time_invariant() const override { return p.alpha == 0.0 && p.d_amp == 0.0; }
  std::optional<double> spatial_period() const override { return 1.0; }
  std::optional<double> time_period() const override { return 1.0; }
  double max_b_norm() const override {
    Vec2 hi = p.b0;
    hi[0] = std::abs(hi[0]) + std::abs(p.b_amp);
    return std::sqrt(vec_norm2(hi, dim));
  }
  std::string describe() const override {
    std::ostringstream os;
    os << "periodic(alpha=" << p.alpha << ", b_amp=" << p.b_amp << ", d0=" << p.d0
       << ", d_amp=" << p.d_amp << ")";
    return os.str();
  }
};

std::int64_t floor_index(double v) { return static_cast<std::int64_t>(std::floor(v)); }

std::int64_t wrap(std::int64_t k, std::int64_t period) {
  const std::int64_t r = k % period;
  return r < 0 ? r + period : r;
}

std::size_t pick(std::uint64_t bits, std::size_t n) {
  __extension__ using u128 = unsigned __int128;
  return static_cast<std::size_t>((static_cast<u128>(bits) * n) >> 64);
}

struct CheckerboardModel final : detail::FieldModel {
  CheckerboardParams p;

  std::uint64_t cell_hash(const SpacePoint& y, double s) const {
    std::int64_t cx = floor_index(y[0] + shift[0]);
    std::int64_t cy = dim == 2 ? floor_index(y[1] + shift[1]) : 0;
    std::int64_t ct = p.time_dependent ? floor_index(s + shift[2]) : 0;
    if (p.torus_cells > 0) {
      const std::int64_t L = p.torus_cells;
      cx = wrap(cx, L);
      cy = wrap(cy, L);
      ct = wrap(ct, L * L);
    }
    std::uint64_t h = mix64(seed ^ 0xD1B54A32D192ED03ull);
    h = mix64(h ^ static_cast<std::uint64_t>(cx));
    h = mix64(h ^ (static_cast<std::uint64_t>(cy) * 0x9E3779B97F4A7C15ull));
    h = mix64(h ^ (static_cast<std::uint64_t>(ct) * 0xC2B2AE3D27D4EB4Full));
    return h;
  }

  CoefficientSample sample(const SpacePoint& y, double s) const override {
    const std::uint64_t h = cell_hash(y, s);
    CoefficientSample out;
    out.a = p.a_values[pick(mix64(h ^ 0x1ull), p.a_values.size())];
    out.b = p.b_values[pick(mix64(h ^ 0x2ull), p.b_values.size())];
    out.d = p.d_values[pick(mix64(h ^ 0x3ull), p.d_values.size())];
    return out;
  }
  bool a_time_invariant() const override { return !p.time_dependent || p.a_values.size() == 1; }
  bool time_invariant() const override {
    return !p.time_dependent ||
           (p.a_values.size() == 1 && p.b_values.size() == 1 && p.d_values.size() == 1);
  }
  std::optional<double> spatial_period() const override {
    if (p.torus_cells > 0) return static_cast<double>(p.torus_cells);
    if (time_invariant() && p.a_values.size() == 1 && p.b_values.size() == 1) return 1.0;
    return std::nullopt;
  }
  std::optional<double> time_period() const override {
    if (!p.time_dependent) return 1.0;
    if (p.torus_cells > 0) return static_cast<double>(p.torus_cells) * p.torus_cells;
    return std::nullopt;
  }
  double max_b_norm() const override {
    double m = 0.0;
    for (const auto& b : p.b_values) m = std::max(m, std::sqrt(vec_norm2(b, dim)));
    return m;
  }
  std::string describe() const override {
    std::ostringstream os;
    os << "checkerboard(seed=" << seed << ", palette=" << p.a_values.size() << "x"
       << p.b_values.size() << "x" << p.d_values.size() << ", L=" << p.torus_cells << ")";
    return os.str();
  }
};

struct LaminateModel final : detail::FieldModel {
  LaminateParams p;
  CoefficientSample sample(const SpacePoint& y, double) const override {
    const double frac = y[0] - std::floor(y[0]);
    auto k = static_cast<std::size_t>(frac * static_cast<double>(p.a_values.size()));
    k = std::min(k, p.a_values.size() - 1);
    return {p.a_values[k], p.b, p.d};
  }
  bool a_time_invariant() const override { return true; }
  bool time_invariant() const override { return true; }
  std::optional<double> spatial_period() const override { return 1.0; }
  std::optional<double> time_period() const override { return 1.0; }
  double max_b_norm() const override { return std::sqrt(vec_norm2(p.b, dim)); }
  std::string describe() const override { return "laminate"; }
};

void check_dim(int dim) {
  if (dim != 1 && dim != 2) throw ConstraintError("dim", "field dimension must be 1 or 2");
}

void check_bounds_struct(const Bounds& b) {
  if (!(b.lambda > 1.0)) throw ConstraintError("lambda", "ellipticity constant lambda must exceed 1");
  if (!(b.Lambda > 0.0)) throw ConstraintError("Lambda", "lower-order bound Lambda must be positive");
}

void check_matrix(const Mat2& a, int dim, const Bounds& bounds, const std::string& where) {
  CoefficientSample s;
  s.a = a;
  s.b = {0.0, 0.0};
  s.d = 0.0;
  check_sample_bounds(s, dim, bounds, where);
}

}  // namespace

const char* to_string(FieldKind kind) {
  switch (kind) {
    case FieldKind::constant: return "constant";
    case FieldKind::periodic: return "periodic";
    case FieldKind::checkerboard: return "checkerboard";
    case FieldKind::laminate: return "laminate";
  }
  return "unknown";
}

std::array<double, 2> symmetric_spectrum(const Mat2& a, int dim) {
  if (dim == 1) return {a(0, 0), a(0, 0)};
  const double p = a(0, 0);
  const double q = a(1, 1);
  const double r = 0.5 * (a(0, 1) + a(1, 0));
  const double mean = 0.5 * (p + q);
  const double rad = std::hypot(0.5 * (p - q), r);
  return {mean - rad, mean + rad};
}

void check_sample_bounds(const CoefficientSample& s, int dim, const Bounds& bounds,
                         const std::string& where) {
  if (dim == 2 && std::abs(s.a(0, 1) - s.a(1, 0)) > kBoundSlack)
    throw ConstraintError("symmetry", where + ": coefficient matrix a must be symmetric");
  const auto spec = symmetric_spectrum(s.a, dim);
  if (spec[0] < 1.0 - kBoundSlack) {
    std::ostringstream os;
    os << where << ": ellipticity violated, smallest eigenvalue " << spec[0] << " < 1";
    throw ConstraintError("ellipticity", os.str());
  }
  if (spec[1] > bounds.lambda + kBoundSlack) {
    std::ostringstream os;
    os << where << ": ellipticity violated, largest eigenvalue " << spec[1] << " > lambda=" << bounds.lambda;
    throw ConstraintError("ellipticity", os.str());
  }
  const double b2 = vec_norm2(s.b, dim);
  if (b2 > bounds.Lambda + kBoundSlack) {
    std::ostringstream os;
    os << where << ": |b|^2 = " << b2 << " exceeds Lambda=" << bounds.Lambda;
    throw ConstraintError("b_bound", os.str());
  }
  if (s.d > kBoundSlack) {
    std::ostringstream os;
    os << where << ": d = " << s.d << " violates d <= 0";
    throw ConstraintError("d_nonpositive", os.str());
  }
  if (s.d * s.d > bounds.Lambda + kBoundSlack) {
    std::ostringstream os;
    os << where << ": d^2 = " << s.d * s.d << " exceeds Lambda=" << bounds.Lambda;
    throw ConstraintError("d_bound", os.str());
  }
}

CoefficientField::CoefficientField(std::shared_ptr<const detail::FieldModel> model)
    : model_(std::move(model)) {}

CoefficientSample CoefficientField::sample(const SpacePoint& y, double s) const {
  return model_->sample(y, s);
}
int CoefficientField::dim() const { return model_->dim; }
const Bounds& CoefficientField::bounds() const { return model_->bounds; }
FieldKind CoefficientField::kind() const { return model_->kind; }
std::uint64_t CoefficientField::seed() const { return model_->seed; }
std::array<double, 3> CoefficientField::shift() const { return model_->shift; }
bool CoefficientField::a_time_invariant() const { return model_->a_time_invariant(); }
bool CoefficientField::time_invariant() const { return model_->time_invariant(); }
std::optional<double> CoefficientField::spatial_period() const { return model_->spatial_period(); }
std::optional<double> CoefficientField::time_period() const { return model_->time_period(); }
double CoefficientField::max_b_norm() const { return model_->max_b_norm(); }
std::string CoefficientField::describe() const { return model_->describe(); }

Sampler CoefficientField::sampler() const {
  auto model = model_;
  return [model](const SpacePoint& y, double s) { return model->sample(y, s); };
}

CoefficientField make_constant(int dim, const Mat2& a0, const Vec2& b0, double d0, Bounds bounds,
                               bool enforce_bounds) {
  check_dim(dim);
  check_bounds_struct(bounds);
  auto m = std::make_shared<ConstantModel>();
  m->dim = dim;
  m->bounds = bounds;
  m->kind = FieldKind::constant;
  m->value = {a0, b0, d0};
  if (dim == 1) {
    m->value.a = Mat2::diag(a0(0, 0), 1.0);
    m->value.b[1] = 0.0;
  }
  if (enforce_bounds) check_sample_bounds(m->value, dim, bounds, "constant field");
  return CoefficientField(std::move(m));
}

CoefficientField make_periodic(const PeriodicParams& p) {
  check_dim(p.dim);
  check_bounds_struct(p.bounds);
  auto m = std::make_shared<PeriodicModel>();
  m->dim = p.dim;
  m->bounds = p.bounds;
  m->kind = FieldKind::periodic;
  m->p = p;
  if (p.dim == 1) {
    m->p.a0 = Mat2::diag(p.a0(0, 0), 1.0);
    m->p.M = Mat2::diag(p.M(0, 0), 0.0);
    m->p.b0[1] = 0.0;
  }
  if (p.enforce_bounds) {
    // Spectrum extremes of a0 + c M over c in [-alpha, alpha] sit at the endpoints.
    for (double c : {-p.alpha, p.alpha}) {
      Mat2 a;
      for (int k = 0; k < 4; ++k) a.v[k] = m->p.a0.v[k] + c * m->p.M.v[k];
      check_matrix(a, p.dim, p.bounds, "periodic field");
    }
    CoefficientSample worst;
    worst.a = Mat2::identity();
    worst.b = m->p.b0;
    worst.b[0] = std::abs(worst.b[0]) + std::abs(p.b_amp);
    worst.d = p.d0 + std::abs(p.d_amp);
    check_sample_bounds(worst, p.dim, p.bounds, "periodic field");
    worst.d = -(std::abs(p.d0) + std::abs(p.d_amp));
    check_sample_bounds(worst, p.dim, p.bounds, "periodic field");
  }
  return CoefficientField(std::move(m));
}

CoefficientField make_checkerboard(const CheckerboardParams& p) {
  check_dim(p.dim);
  check_bounds_struct(p.bounds);
  if (p.a_values.empty() || p.b_values.empty() || p.d_values.empty())
    throw ConstraintError("palette", "checkerboard palettes must be non-empty");
  if (p.torus_cells < 0) throw ConstraintError("torus_cells", "torus size must be non-negative");
  auto m = std::make_shared<CheckerboardModel>();
  m->dim = p.dim;
  m->bounds = p.bounds;
  m->kind = FieldKind::checkerboard;
  m->seed = p.seed;
  m->p = p;
  if (p.dim == 1) {
    for (auto& a : m->p.a_values) a = Mat2::diag(a(0, 0), 1.0);
    for (auto& b : m->p.b_values) b[1] = 0.0;
  }
  if (p.shift_override) {
    m->shift = *p.shift_override;
  } else {
    for (int k = 0; k < 3; ++k) m->shift[k] = unit_from_bits(mix64(p.seed ^ (0xA24BAED4963EE407ull * (k + 1))));
  }
  if (p.dim == 1) m->shift[1] = 0.0;
  if (p.enforce_bounds) {
    for (const auto& a : m->p.a_values) check_matrix(a, p.dim, p.bounds, "checkerboard palette");
    for (const auto& b : m->p.b_values) {
      CoefficientSample s{Mat2::identity(), b, 0.0};
      check_sample_bounds(s, p.dim, p.bounds, "checkerboard palette");
    }
    for (double d : m->p.d_values) {
      CoefficientSample s{Mat2::identity(), {0.0, 0.0}, d};
      check_sample_bounds(s, p.dim, p.bounds, "checkerboard palette");
    }
  }
  return CoefficientField(std::move(m));
}

CoefficientField make_laminate(const LaminateParams& p) {
  check_dim(p.dim);
  check_bounds_struct(p.bounds);
  if (p.a_values.empty()) throw ConstraintError("palette", "laminate needs at least one layer");
  auto m = std::make_shared<LaminateModel>();
  m->dim = p.dim;
  m->bounds = p.bounds;
  m->kind = FieldKind::laminate;
  m->p = p;
  if (p.dim == 1) {
    for (auto& a : m->p.a_values) a = Mat2::diag(a(0, 0), 1.0);
    m->p.b[1] = 0.0;
  }
  if (p.enforce_bounds) {
    for (const auto& a : m->p.a_values) {
      CoefficientSample s{a, m->p.b, m->p.d};
      check_sample_bounds(s, p.dim, p.bounds, "laminate layer");
    }
  }
  return CoefficientField(std::move(m));
}

RescaledField::RescaledField(CoefficientField base, double epsilon)
    : base_(std::move(base)), epsilon_(epsilon) {
  if (!(epsilon > 0.0) || epsilon > 1.0)
    throw ConstraintError("epsilon", "scale epsilon must lie in (0, 1]");
}

Sampler RescaledField::sampler() const {
  RescaledField copy = *this;
  return [copy](const SpacePoint& x, double t) { return copy.sample(x, t); };
}

RescaledField rescale(const CoefficientField& field, double epsilon) { return {field, epsilon}; }

RescaledField rescale(const RescaledField& field, double epsilon) {
  return {field.base(), field.epsilon() * epsilon};
}

ValidationReport validate(const CoefficientField& field, std::size_t n_samples,
                          std::uint64_t rng_seed) {
  if (n_samples == 0) throw ConstraintError("n_samples", "validation needs at least one sample");
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> coord(-10.0, 10.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int dim = field.dim();
  const Bounds& bounds = field.bounds();

  ValidationReport rep;
  rep.samples = n_samples;
  rep.rayleigh_min = std::numeric_limits<double>::infinity();
  rep.rayleigh_max = -std::numeric_limits<double>::infinity();
  rep.d_max = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n_samples; ++k) {
    SpacePoint y{coord(rng), dim == 2 ? coord(rng) : 0.0};
    const double s = coord(rng);
    const auto c = field.sample(y, s);
    Vec2 xi{1.0, 0.0};
    if (dim == 2) {
      xi = {gauss(rng), gauss(rng)};
      const double n = std::hypot(xi[0], xi[1]);
      xi = n > 0 ? Vec2{xi[0] / n, xi[1] / n} : Vec2{1.0, 0.0};
    }
    double ray = c.a(0, 0) * xi[0] * xi[0];
    if (dim == 2) ray += (c.a(0, 1) + c.a(1, 0)) * xi[0] * xi[1] + c.a(1, 1) * xi[1] * xi[1];
    rep.rayleigh_min = std::min(rep.rayleigh_min, ray);
    rep.rayleigh_max = std::max(rep.rayleigh_max, ray);
    if (dim == 2) rep.asymmetry_max = std::max(rep.asymmetry_max, std::abs(c.a(0, 1) - c.a(1, 0)));
    rep.b_norm2_max = std::max(rep.b_norm2_max, vec_norm2(c.b, dim));
    rep.d_max = std::max(rep.d_max, c.d);
    rep.d2_max = std::max(rep.d2_max, c.d * c.d);
  }
  if (rep.rayleigh_min < 1.0 - kBoundSlack) rep.violations.emplace_back("ellipticity_lower");
  if (rep.rayleigh_max > bounds.lambda + kBoundSlack) rep.violations.emplace_back("ellipticity_upper");
  if (rep.asymmetry_max > kBoundSlack) rep.violations.emplace_back("symmetry");
  if (rep.b_norm2_max > bounds.Lambda + kBoundSlack) rep.violations.emplace_back("b_bound");
  if (rep.d_max > kBoundSlack) rep.violations.emplace_back("d_nonpositive");
  if (rep.d2_max > bounds.Lambda + kBoundSlack) rep.violations.emplace_back("d_bound");
  return rep;
}

Sampler HomogenizedCoefficients::sampler() const {
  CoefficientSample c;
  c.a = a_bar;
  if (dim == 2) {
    const double off = 0.5 * (a_bar(0, 1) + a_bar(1, 0));
    c.a(0, 1) = off;
    c.a(1, 0) = off;
  } else {
    c.a = Mat2::diag(a_bar(0, 0), 1.0);
  }
  c.b = b_bar;
  c.d = d_bar;
  return [c](const SpacePoint&, double) { return c; };
}

}  // namespace homog
