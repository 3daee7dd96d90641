#pragma once

#include <array>
#include <vector>

#include "homog/corrector.hpp"
#include "homog/mesh.hpp"
#include "homog/norms.hpp"

namespace homog {

/// C^2 quintic ramp: 0 for s <= 1, 1 for s >= 2, monotone in between.
double smooth_ramp(double s);

/// eta_r(x,t) = ramp(dist(x, boundary of U) / r) * ramp((t - t_begin) / r^2), with
/// central-difference derivatives and the measured scaling constants
/// c1 = r sup|grad eta| and c2 = r^2 sup|dt eta|.
struct CutoffFunction {
  double r = 0.0;
  DiscreteField eta;
  std::array<DiscreteField, 2> grad;
  DiscreteField dt;
  double c1 = 0.0;
  double c2 = 0.0;
};

/// Requires 0 < r <= min(domain width, sqrt|I|) / 4.
CutoffFunction build_cutoff(const SpaceTimeGrid& grid, double r);

/// w = p0_hat + eta * eps * sum_i (d_i p0_hat) phi_i(x/eps, t/eps^2).
DiscreteField build_w_epsilon(const DiscreteField& p0_hat, const std::vector<CorrectorSolution>& correctors,
                              double epsilon, const CutoffFunction& cutoff);

/// Product-rule assembly of grad w, term by term:
/// grad p0 + eta eps sum (grad d_i p0) phi_i + eta sum (d_i p0) (grad phi_i)(x/eps) + (grad eta) eps sum (d_i p0) phi_i.
std::array<DiscreteField, 2> w_epsilon_gradient(const DiscreteField& p0_hat,
                                                const std::vector<CorrectorSolution>& correctors,
                                                double epsilon, const CutoffFunction& cutoff);

/// sup |f| over U_r x I_r (points at distance >= r from the lateral boundary
/// and time >= t_begin + r^2).
double interior_sup(const DiscreteField& f, double r);

struct ErrorFunctionalOptions {
  int cells_per_period = 8;   // reference-cell grid cells per eps period
  int levels_per_period = 8;  // time levels per eps^2 period
  int coarse_cells = 0;       // dual-norm test lattice per axis; 0 picks 32 (1D) or 16 (2D)
};

struct ErrorFunctional {
  double epsilon = 0.0;
  /// eps||phi||_{L2}, ||grad phi||_*, ||a(e + grad phi) - a_bar e||_*,
  /// ||b.(e + grad phi) - b_bar e||_*, ||d - d_bar||_*; each summed over directions.
  std::array<double, 5> terms{};
  double total = 0.0;
  Coarsening coarsening{};
  int fine_cells = 0;
  int fine_levels = 0;
};

/// E(eps) on the reference cell (-1/2, 1/2)^d x (-1/2, 1/2). Corrector data
/// are box-averaged onto the reference grid, so the quadrature means of the
/// oscillating integrands are exactly the homogenized coefficients of the
/// same correctors.
ErrorFunctional error_functional(const CoefficientField& field, const std::vector<CorrectorSolution>& correctors,
                                 double epsilon, const ErrorFunctionalOptions& options = {});

/// beta = delta / (4 + 2 delta).
double beta_of(double delta);

struct RateBoundRow {
  double r = 0.0;
  double shape = 0.0;     // r^beta + r^(-4-d/2) E
  double implied = 0.0;   // lhs / (||f|| shape)
};

struct RateBoundReport {
  double beta = 0.0;
  double lhs_l2 = 0.0;
  double lhs_dual = 0.0;
  double lhs = 0.0;
  double e_value = 0.0;
  std::vector<RateBoundRow> rows;
  double min_implied = 0.0;
  bool e_underestimated = false;  // E = 0 with a nonzero left side
};

RateBoundReport rate_bound_check(double lhs_l2, double lhs_dual, double e_value, double f_norm, int dim,
                                const std::vector<double>& r_list, double beta);

/// Left side from trajectories: ||p_eps - p0||_{L2} + ||grad(p_eps - p0)||_* with
/// the dual norm taken in `ws`.
RateBoundReport rate_bound_check(const DiscreteField& p_eps_hat, const DiscreteField& p0_hat, double e_value,
                                double f_norm, const std::vector<double>& r_list, double beta,
                                const NormWorkspace& ws);

/// Sweep verdict: the min-over-r implied constants stay within `band`.
struct RateBoundSweep {
  double spread = 0.0;  // max / min of the implied constants
  bool bounded = false;
};
RateBoundSweep rate_bound_sweep(const std::vector<RateBoundReport>& reports, double band = 3.0);

}  // namespace homog
