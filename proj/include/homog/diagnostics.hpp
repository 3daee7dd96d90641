#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "homog/mesh.hpp"
#include "homog/parabolic.hpp"

namespace homog {

struct ProbeContext {
  double r = 0.0;
  SpacePoint center{0.0, 0.0};
  double t_top = 0.0;
  std::string field;
  std::uint64_t seed = 0;
};

struct InequalityReport {
  std::string probe;
  double lhs = 0.0;
  std::vector<std::pair<std::string, double>> rhs_components;
  double rhs = 0.0;               // sum of the components
  double implied_constant = 0.0;  // lhs / rhs; 0 when both vanish, inf when only rhs does
  ProbeContext context;
  double input_residual = 0.0;
  /// Secondary pair of the interior estimate: sup over I_r of ||p(s)||_{L2(B_r)}
  /// against ||grad p||_{L2(Q_2r)} + the dual term. Unused by the other probes.
  double sup_lhs = 0.0;
  double sup_rhs = 0.0;
  double sup_implied = 0.0;
};

/// Nodal source values of a problem, over the whole grid.
DiscreteField sample_source(const CauchyDirichletProblem& problem);

/// Throws ConstraintError("residual") when the trajectory does not solve the
/// problem to 10x its tolerance; returns the measured residual otherwise.
double residual_gate(const CauchyDirichletProblem& problem, const DiscreteField& p);

/// Cylinders share the top time t_top: Q_rho = B_rho(center) x (t_top - rho^2, t_top].
/// h is the problem's source. Requires Q_2r inside the grid domain.
InequalityReport caccioppoli_interior(const CauchyDirichletProblem& problem, const DiscreteField& p, double r,
                                      SpacePoint center, double t_top, std::uint64_t seed = 0);

/// Same cylinders intersected with V, for a solution vanishing on the parabolic
/// boundary. H is the problem's source.
InequalityReport caccioppoli_global(const CauchyDirichletProblem& problem, const DiscreteField& v, double r,
                                    SpacePoint center, double t_top, std::uint64_t seed = 0);

/// ||grad v||_{L2(V)} against ||H||_{L2(H^-1(U); I)}.
InequalityReport global_energy_estimate(const CauchyDirichletProblem& problem, const DiscreteField& v,
                                        std::uint64_t seed = 0);

struct MeyersRow {
  double delta = 0.0;
  double q = 2.0;
  double grad_norm = 0.0;  // ||grad p||_{L^q(V)}
  double f_norm = 0.0;     // ||f||_{W^{1,q}_par(V)}, 2-based time part
  double h_norm = 0.0;     // 2-based surrogate of ||h||_{L^q(W^{-1,q})}
  double implied = 0.0;
  bool finite = true;
};

struct MeyersReport {
  std::vector<MeyersRow> rows;  // rows[0] is the delta = 0 baseline
  bool dual_surrogate = true;
  double input_residual = 0.0;
  std::string field;
  std::uint64_t seed = 0;
};

/// Requires every delta in (0, 2]. The boundary data f is evaluated on the whole grid.
MeyersReport meyers_probe(const CauchyDirichletProblem& problem, const DiscreteField& p,
                          const std::vector<double>& deltas, std::uint64_t seed = 0);

/// Largest tested delta whose implied constant stays within `factor` times the
/// baseline for every ensemble member; 0 when none does.
double meyers_working_delta(const std::vector<MeyersReport>& ensemble, double factor = 10.0);

/// max / min of the implied constants; inf when a constant vanishes.
double implied_spread(const std::vector<InequalityReport>& reports);

}  // namespace homog
