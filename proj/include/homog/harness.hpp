#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "homog/corrector.hpp"
#include "homog/fields.hpp"
#include "homog/parabolic.hpp"
#include "homog/twoscale.hpp"

namespace homog {

/// Declarative coefficient field. Checkerboards are periodized on
/// `torus_cells` unit cells so that every realization has exact correctors.
struct FieldSpec {
  FieldKind kind = FieldKind::constant;
  int dim = 1;
  Bounds bounds{};
  Mat2 a0 = Mat2::identity();  // constant
  Vec2 b0{};
  double d0 = 0.0;
  PeriodicParams periodic{};
  CheckerboardParams checkerboard{};
  LaminateParams laminate{};
  int torus_cells = 4;
  bool enforce_bounds = true;

  bool random() const { return kind == FieldKind::checkerboard; }
  CoefficientField build(std::uint64_t seed = 0) const;
};

/// Named analytic profiles for boundary and source data.
///   affine:        offset + gradient.x + time_slope t
///   gaussian_bump: offset + amplitude exp(-|x - center|^2 / width^2)
///   sine_sheet:    offset + amplitude sin(pi k x1) [sin(pi k x2)] exp(-decay t)
struct Profile {
  enum class Kind { zero, affine, gaussian_bump, sine_sheet };
  Kind kind = Kind::zero;
  double offset = 0.0;
  double amplitude = 1.0;
  Vec2 gradient{};
  double time_slope = 0.0;
  SpacePoint center{0.5, 0.5};
  double width = 0.25;
  double wavenumber = 1.0;
  double decay = 0.0;

  ScalarFunction function(int dim) const;
  DataSource source(int dim) const;
  DataSource shifted_source(int dim, double Lambda) const;  // exp(-Lambda t) times the profile
};
const char* to_string(Profile::Kind kind);

struct StudyConfig {
  FieldSpec field;
  Profile boundary;
  Profile source;
  std::vector<double> epsilons;
  Interval time{0.0, 0.25};
  int cells_per_period = 8;     // fine grid cells per smallest eps
  double c_par = 0.5;           // dt = c_par h^2
  int stored_per_period = 8;    // stored levels per smallest eps^2
  int cell_nx = 32;
  int cell_nt = 16;
  CellSolveOptions cell_options{};
  ErrorFunctionalOptions error_options{};
  std::vector<double> r_list{1.0 / 8, 1.0 / 16, 1.0 / 32};
  double delta = 0.1;
  double tol = 1e-10;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool timing = false;
};

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Least-squares slope of log(error) against log(eps). Needs >= 3 points, all positive.
RateFit fit_rate(const std::vector<double>& errors, const std::vector<double>& epsilons);

struct EpsilonRow {
  double epsilon = 0.0;
  double l2_error = 0.0;         // ||p_eps - p0||_{L2(V)}
  double dual_grad_error = 0.0;  // ||grad p_eps - grad p0||_*
  double l2_norm = 0.0;          // ||p_eps||_{L2(V)}
  ErrorFunctional error;
  double transform_residual = 0.0;  // ||exp(-Lambda t) p_eps - p_hat_eps||_{L2(V)}
  double transform_bound = 0.0;     // 5 dt Lambda ||p_eps||
  RateBoundReport rate_bound;
  double runtime = 0.0;             // seconds, only when timing is on
};

struct ConvergenceReport {
  std::string field;
  std::uint64_t seed = 0;
  HomogenizedCoefficients coefficients;
  double Lambda = 0.0;
  double h = 0.0;
  double dt = 0.0;
  int store_stride = 1;
  double f_norm = 0.0;
  std::vector<EpsilonRow> rows;  // in the order of the configured epsilons
  std::optional<RateFit> l2_rate;
  std::optional<RateFit> dual_rate;
  std::optional<RateFit> e_rate;
  RateBoundSweep rate_bound_sweep;
  bool transform_ok = true;
};

/// Fine grid shared by every eps of a study.
SpaceTimeGrid study_grid(const StudyConfig& config, int* store_stride = nullptr);

ConvergenceReport run_convergence_study(const StudyConfig& config);

struct Quartiles {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr() const { return q3 - q1; }
};
Quartiles quartiles(std::vector<double> values);

struct EnsembleFailure {
  int sample = 0;
  std::uint64_t seed = 0;
  std::string kind;
  std::string message;
};

struct EnsembleRow {
  double epsilon = 0.0;
  Quartiles l2_error;
  Quartiles dual_grad_error;
  Quartiles e_total;
};

struct EnsembleReport {
  std::uint64_t base_seed = 0;
  int n_samples = 0;
  std::vector<ConvergenceReport> samples;  // successful samples, by sample index
  std::vector<int> sample_index;
  std::vector<EnsembleFailure> failures;
  std::vector<EnsembleRow> rows;
};

/// Sample k uses seed derive_seed(config.seed, k). Failed samples are recorded
/// and skipped.
EnsembleReport monte_carlo_ensemble(const StudyConfig& config, int n_samples);

/// Medians and quartiles over already computed samples; independent of order.
std::vector<EnsembleRow> aggregate(const std::vector<ConvergenceReport>& samples);

}  // namespace homog
