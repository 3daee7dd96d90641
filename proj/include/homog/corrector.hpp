#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "homog/fields.hpp"

namespace homog {

/// Space-time cell problem on the torus [0, L)^d with one time period of the
/// field. `direction` is normally a basis vector; the problem is linear in
/// it, so any vector is accepted.
struct CellProblem {
  CoefficientField field;
  Vec2 direction{1.0, 0.0};
  int cell_nx = 64;  // nodes per unit length
  int cell_nt = 16;  // stored time samples per unit time
  int period_L = 1;
};

struct CellSolveOptions {
  double tol = 1e-10;
  int max_periods = 200;
};

/// Converged corrector over one time period. Nodes sit at y = i h on the
/// torus; face quantities of axis k live at y + (h/2) e_k. Every array is
/// level-major with `num_nodes()` entries per stored level.
struct CorrectorSolution {
  int dim = 1;
  int period_L = 1;
  int n = 0;  // nodes per axis
  double h = 0.0;
  double period = 1.0;  // time period
  int nt = 1;  // stored levels, at s = m * period / nt
  bool steady = false;
  Vec2 direction{1.0, 0.0};

  std::vector<double> phi;
  std::array<std::vector<double>, 2> grad;  // normal derivative on faces of each axis
  std::array<std::vector<double>, 2> flux;  // normal component of a(e + grad phi)
  std::vector<double> b_term;               // b . (e + grad phi) at nodes
  std::vector<double> d;                    // d at nodes

  double residual = 0.0;          // period-map gap of the accepted period
  int periods = 0;
  double balance_residual = 0.0;  // max |dt phi - div flux| over the last period
  double mean_removed = 0.0;
  double mean = 0.0;              // space-time mean after normalization

  std::size_t num_nodes() const { return dim == 2 ? static_cast<std::size_t>(n) * n : static_cast<std::size_t>(n); }
  std::size_t node(int i, int j = 0) const;
  double at(int level, std::size_t node) const { return phi[static_cast<std::size_t>(level) * num_nodes() + node]; }

  /// Periodic multilinear interpolation in space and linear in time.
  double value(const SpacePoint& y, double s) const;
  /// Interpolated nodal central-difference gradient.
  Vec2 gradient(const SpacePoint& y, double s) const;
  /// Max |phi|.
  double max_abs() const;
  /// Space-time mean of |phi|^2.
  double mean_square() const;

  /// Plain CSV: level,s,i,j,phi.
  void write_csv(std::ostream& os) const;
};

CorrectorSolution solve_cell_problem(const CellProblem& problem, const CellSolveOptions& options = {});

struct CorrectorReport {
  double mean_abs = 0.0;       // |space-time average of phi|
  double grad_mean_abs = 0.0;  // |space-time average of grad phi|
  std::vector<double> radii;
  std::vector<double> sublinearity;  // g(r) = |Q_r|^{-1} r^{-2} int_{Q_r} |phi|^2
  double slope = 0.0;                // log-log slope of g over the radii
};

/// Periodic tiling of phi over Q_r = B_r(0) x (0, r^2].
CorrectorReport corrector_diagnostics(const CorrectorSolution& solution, const std::vector<double>& tile_radii);

/// a_bar e_i, b_bar_i and d_bar from the correctors of e_1..e_d (in order).
/// Throws ConstraintError("ellipticity") when sym(a_bar) leaves
/// [1 - 0.02, lambda + 0.02] and ConstraintError("d_nonpositive") for d_bar > 0.
HomogenizedCoefficients homogenized_coefficients(const CoefficientField& field,
                                                 const std::vector<CorrectorSolution>& correctors);

/// Solve the d canonical cell problems and assemble the coefficients.
HomogenizedCoefficients periodic_coefficients(const CoefficientField& field, int cell_nx, int cell_nt,
                                              const CellSolveOptions& options = {},
                                              std::vector<CorrectorSolution>* correctors = nullptr);

struct RveSpec {
  CheckerboardParams params;  // seed and torus size are set per sample
  int L = 8;
  int n_samples = 8;
  std::uint64_t base_seed = 0;
  int cell_nx = 8;
  int cell_nt = 8;
  CellSolveOptions options{};
};

struct RveEstimate {
  HomogenizedCoefficients mean;  // with standard errors
  std::vector<HomogenizedCoefficients> samples;
};

/// Monte-Carlo over periodized checkerboard samples; sample k uses seed
/// derive_seed(base_seed, k).
RveEstimate rve_estimate(const RveSpec& spec);

}  // namespace homog
