#pragma once

#include <functional>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "homog/fields.hpp"
#include "homog/linalg.hpp"
#include "homog/mesh.hpp"

namespace homog {

using ScalarFunction = std::function<double(const SpacePoint&, double)>;

/// Boundary or source data: nodal values on the problem grid, a function of
/// (x, t), or identically zero. Functions avoid materializing full
/// trajectories for long runs.
class DataSource {
 public:
  DataSource() = default;
  DataSource(ScalarFunction fn) : data_(std::move(fn)) {}  // NOLINT(implicit)
  DataSource(DiscreteField values) : data_(std::move(values)) {}  // NOLINT(implicit)
  template <class Fn>
    requires(std::is_invocable_r_v<double, Fn, const SpacePoint&, double> &&
             !std::is_same_v<std::decay_t<Fn>, ScalarFunction>)
  DataSource(Fn fn) : data_(ScalarFunction(std::move(fn))) {}  // NOLINT(implicit)

  bool is_zero() const { return std::holds_alternative<std::monostate>(data_); }
  double value(const SpaceTimeGrid& grid, int level, std::size_t node) const;
  /// Checks that nodal data matches the grid layout.
  void check_layout(const SpaceTimeGrid& grid, const char* name) const;

 private:
  std::variant<std::monostate, ScalarFunction, DiscreteField> data_;
};

/// The coefficient triple as seen by the solver, with the metadata it needs.
struct OperatorCoefficients {
  int dim = 1;
  Sampler sampler;
  Bounds bounds;
  bool time_invariant = false;
  double max_b_norm = 0.0;
  /// Slack for the defensive face re-check of the spectrum of a.
  double ellipticity_tol = 1e-12;
  std::string description;
};

OperatorCoefficients coefficients_of(const CoefficientField& field);
OperatorCoefficients coefficients_of(const RescaledField& field);
OperatorCoefficients coefficients_of(const HomogenizedCoefficients& coeffs, Bounds bounds);

/// dt p - div(a grad p) - b.grad p - d p + lambda_shift p = h in V,
/// p = f on the parabolic boundary.
struct CauchyDirichletProblem {
  OperatorCoefficients coefficients;
  SpaceTimeGrid grid;
  DataSource boundary;
  DataSource source;
  double lambda_shift = 0.0;
  double tol = 1e-10;
  int max_iter = 20000;
  /// Keep every store_stride-th level in the returned trajectory.
  int store_stride = 1;
};

/// Implicit Euler system for the step t^{n} -> t^{n+1} over interior nodes:
/// matrix * p_int = rhs. `unknowns[k]` is the grid node of unknown k.
struct StepSystem {
  linalg::SparseMatrix matrix;
  std::vector<double> rhs;
  std::vector<std::size_t> unknowns;
};

/// `level` is the new level n+1 (>= 1); `previous` holds all nodal values at
/// level n.
StepSystem assemble_step(const CauchyDirichletProblem& problem, int level,
                         std::span<const double> previous);

struct SolveResult {
  DiscreteField solution;
  std::vector<int> iterations;  // per step; 0 for direct solves
  double max_residual = 0.0;    // relative, over all steps
};

SolveResult solve_problem(const CauchyDirichletProblem& problem);

SolveResult solve_homogenized(const HomogenizedCoefficients& coeffs, Bounds bounds,
                              const SpaceTimeGrid& grid, DataSource boundary,
                              double lambda_shift, DataSource source = {}, int store_stride = 1);

/// Multiplies level n by exp(-Lambda t^n).
DiscreteField exp_transform(const DiscreteField& field, double Lambda);

/// Largest relative step residual of a stored trajectory against the
/// problem's discrete equations. Requires an unstrided trajectory.
double step_residual(const CauchyDirichletProblem& problem, const DiscreteField& solution);

}  // namespace homog
