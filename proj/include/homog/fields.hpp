#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "homog/mesh.hpp"

namespace homog {

/// 2x2 row-major matrix; 1D fields use only the (0,0) entry.
struct Mat2 {
  std::array<double, 4> v{};
  double operator()(int i, int j) const { return v[2 * i + j]; }
  double& operator()(int i, int j) { return v[2 * i + j]; }
  static Mat2 identity() { return {{1.0, 0.0, 0.0, 1.0}}; }
  static Mat2 diag(double a, double b) { return {{a, 0.0, 0.0, b}}; }
  static Mat2 scalar(double a) { return diag(a, a); }
  bool operator==(const Mat2&) const = default;
};

using Vec2 = std::array<double, 2>;

struct CoefficientSample {
  Mat2 a;
  Vec2 b{};
  double d = 0.0;
};

/// lambda bounds the spectrum of a from above (the lower bound is 1);
/// Lambda bounds |b|^2 and d^2.
struct Bounds {
  double lambda = 4.0;
  double Lambda = 1.0;
};

enum class FieldKind { constant, periodic, checkerboard, laminate };
const char* to_string(FieldKind kind);

using Sampler = std::function<CoefficientSample(const SpacePoint&, double)>;

namespace detail {
struct FieldModel;
}

/// Spectrum of the symmetric part of a (first dim entries, ascending).
std::array<double, 2> symmetric_spectrum(const Mat2& a, int dim);

/// Throws ConstraintError naming the violated bound.
void check_sample_bounds(const CoefficientSample& s, int dim, const Bounds& bounds,
                         const std::string& where);

/// Stationary space-time coefficient triple (a, b, d). Immutable; sampling is
/// a pure function of (y, s) and the construction parameters.
class CoefficientField {
 public:
  CoefficientField() = default;
  explicit CoefficientField(std::shared_ptr<const detail::FieldModel> model);

  CoefficientSample sample(const SpacePoint& y, double s) const;
  int dim() const;
  const Bounds& bounds() const;
  double lambda() const { return bounds().lambda; }
  double Lambda() const { return bounds().Lambda; }
  FieldKind kind() const;
  std::uint64_t seed() const;
  std::array<double, 3> shift() const;

  /// True when a does not depend on s (b and d may still vary in time).
  bool a_time_invariant() const;
  /// True when the whole triple is independent of s.
  bool time_invariant() const;
  /// Spatial and temporal periods when the field is periodic on a torus.
  std::optional<double> spatial_period() const;
  std::optional<double> time_period() const;
  /// Upper bound of sup |b| over the field (used for the Peclet check).
  double max_b_norm() const;

  Sampler sampler() const;
  std::string describe() const;

 private:
  std::shared_ptr<const detail::FieldModel> model_;
};

CoefficientField make_constant(int dim, const Mat2& a0, const Vec2& b0, double d0, Bounds bounds,
                               bool enforce_bounds = true);

/// a(y,s) = a0 + alpha sin(2 pi y1) cos(2 pi s) M,
/// b(y,s) = b0 + b_amp cos(2 pi y1) e1,
/// d(y,s) = d0 + d_amp sin(2 pi y1) cos(2 pi s). Period 1 in every coordinate.
struct PeriodicParams {
  int dim = 1;
  Mat2 a0 = Mat2::scalar(2.0);
  double alpha = 0.5;
  Mat2 M = Mat2::identity();
  Vec2 b0{};
  double b_amp = 0.0;
  double d0 = 0.0;
  double d_amp = 0.0;
  Bounds bounds{};
  bool enforce_bounds = true;
};
CoefficientField make_periodic(const PeriodicParams& p);

/// Piecewise-constant field on unit space-time cells. Each cell draws its a,
/// b and d independently and uniformly from the palettes through a
/// counter-based hash of (cell index, seed). A uniform shift in [0,1)^{d+1}
/// drawn from the seed is applied before cell lookup unless overridden.
struct CheckerboardParams {
  int dim = 1;
  std::vector<Mat2> a_values{Mat2::identity()};
  std::vector<Vec2> b_values{Vec2{0.0, 0.0}};
  std::vector<double> d_values{0.0};
  std::uint64_t seed = 0;
  bool time_dependent = true;
  /// When positive, cell indices wrap modulo L in space and L^2 in time.
  int torus_cells = 0;
  std::optional<std::array<double, 3>> shift_override;
  Bounds bounds{};
  bool enforce_bounds = true;
};
CoefficientField make_checkerboard(const CheckerboardParams& p);

/// Layered medium: a depends on y1 only, taking values[k] on
/// [k/n, (k+1)/n) of each unit period. b and d constant.
struct LaminateParams {
  int dim = 1;
  std::vector<Mat2> a_values{Mat2::scalar(1.0), Mat2::scalar(4.0)};
  Vec2 b{};
  double d = 0.0;
  Bounds bounds{};
  bool enforce_bounds = true;
};
CoefficientField make_laminate(const LaminateParams& p);

/// Parabolic rescaling x -> x/eps, t -> t/eps^2.
class RescaledField {
 public:
  RescaledField(CoefficientField base, double epsilon);
  CoefficientSample sample(const SpacePoint& x, double t) const {
    return base_.sample({x[0] / epsilon_, x[1] / epsilon_}, t / (epsilon_ * epsilon_));
  }
  const CoefficientField& base() const { return base_; }
  double epsilon() const { return epsilon_; }
  Sampler sampler() const;

 private:
  CoefficientField base_;
  double epsilon_;
};

RescaledField rescale(const CoefficientField& field, double epsilon);
RescaledField rescale(const RescaledField& field, double epsilon);

struct ValidationReport {
  std::size_t samples = 0;
  double rayleigh_min = 0.0;
  double rayleigh_max = 0.0;
  double asymmetry_max = 0.0;
  double b_norm2_max = 0.0;
  double d_max = 0.0;
  double d2_max = 0.0;
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Spot-checks the ellipticity and boundedness conditions at random points.
ValidationReport validate(const CoefficientField& field, std::size_t n_samples,
                          std::uint64_t rng_seed);

/// Effective coefficient record (a_bar, b_bar, d_bar) with Monte-Carlo
/// standard errors (zero for periodic fields).
struct HomogenizedCoefficients {
  int dim = 1;
  Mat2 a_bar;
  Vec2 b_bar{};
  double d_bar = 0.0;
  Mat2 a_stderr;
  Vec2 b_stderr{};
  double d_stderr = 0.0;
  std::size_t samples = 1;

  /// Constant field (a_bar symmetric part, b_bar, d_bar).
  Sampler sampler() const;
  /// Spectrum of the symmetric part of a_bar.
  std::array<double, 2> spectrum() const { return symmetric_spectrum(a_bar, dim); }
  double antisymmetric_part() const { return dim == 2 ? 0.5 * (a_bar(0, 1) - a_bar(1, 0)) : 0.0; }
};

/// SplitMix64 finalizer; the counter-based hash behind every seeded draw.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline double unit_from_bits(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

/// Deterministic per-index seed derivation (order independent).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return mix64(mix64(base) ^ mix64(index + 0x632BE59BD9B4E019ull));
}

}  // namespace homog
