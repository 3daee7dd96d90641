#include "homog/parabolic.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "homog/error.hpp"

namespace homog {

double DataSource::value(const SpaceTimeGrid& grid, int level, std::size_t node) const {
  if (const auto* fn = std::get_if<ScalarFunction>(&data_)) return (*fn)(grid.coord(node), grid.t(level));
  if (const auto* f = std::get_if<DiscreteField>(&data_)) return f->at(level, node);
  return 0.0;
}

void DataSource::check_layout(const SpaceTimeGrid& grid, const char* name) const {
  if (const auto* f = std::get_if<DiscreteField>(&data_)) {
    if (!f->grid().same_layout(grid))
      throw ConstraintError("layout", std::string(name) + " data does not match the problem grid");
    if (!f->all_finite()) throw ConstraintError("finite", std::string(name) + " data is not finite");
  }
}

OperatorCoefficients coefficients_of(const CoefficientField& field) {
  OperatorCoefficients c;
  c.dim = field.dim();
  c.sampler = field.sampler();
  c.bounds = field.bounds();
  c.time_invariant = field.time_invariant();
  c.max_b_norm = field.max_b_norm();
  c.description = field.describe();
  return c;
}

OperatorCoefficients coefficients_of(const RescaledField& field) {
  OperatorCoefficients c = coefficients_of(field.base());
  c.sampler = field.sampler();
  std::ostringstream os;
  os << c.description << " at eps=" << field.epsilon();
  c.description = os.str();
  return c;
}

OperatorCoefficients coefficients_of(const HomogenizedCoefficients& coeffs, Bounds bounds) {
  OperatorCoefficients c;
  c.dim = coeffs.dim;
  c.sampler = coeffs.sampler();
  c.bounds = bounds;
  c.time_invariant = true;
  c.max_b_norm = std::hypot(coeffs.b_bar[0], coeffs.dim == 2 ? coeffs.b_bar[1] : 0.0);
  c.ellipticity_tol = 0.02;
  c.description = "homogenized";
  return c;
}

namespace {

struct Layout {
  std::vector<std::size_t> unknowns;
  std::vector<std::size_t> boundary;
  std::vector<long> index_of;  // -1 on boundary nodes
};

Layout make_layout(const SpaceTimeGrid& g) {
  Layout l;
  l.index_of.assign(g.num_nodes(), -1);
  for (std::size_t k = 0; k < g.num_nodes(); ++k) {
    if (g.is_boundary(k)) {
      l.boundary.push_back(k);
    } else {
      l.index_of[k] = static_cast<long>(l.unknowns.size());
      l.unknowns.push_back(k);
    }
  }
  return l;
}

struct Coupling {
  std::size_t row;
  std::size_t node;
  double coeff;
};

/// Operator (1/dt + A) restricted to interior unknowns plus the couplings
/// to Dirichlet nodes. 1D keeps band arrays; 2D a CSR matrix on a fixed
/// 9-point pattern.
struct StepOperator {
  std::vector<double> lo, di, up;
  linalg::SparseMatrix matrix;
  bool symmetric = false;
  std::vector<Coupling> coupling;
};

void check_face(const CoefficientSample& s, const OperatorCoefficients& c, const SpacePoint& x, double t) {
  const auto spec = symmetric_spectrum(s.a, c.dim);
  if (spec[0] < 1.0 - c.ellipticity_tol || spec[1] > c.bounds.lambda + c.ellipticity_tol ||
      !std::isfinite(spec[0]) || !std::isfinite(spec[1])) {
    std::ostringstream os;
    os << "face sample at x=(" << x[0] << "," << x[1] << "), t=" << t << " has spectrum ["
       << spec[0] << ", " << spec[1] << "] outside [1, " << c.bounds.lambda << "]";
    throw ConstraintError("ellipticity", os.str());
  }
}

linalg::SparseMatrix nine_point_pattern(const SpaceTimeGrid& g, const Layout& l) {
  std::vector<linalg::Triplet> trip;
  const int nx = g.nx();
  for (std::size_t u = 0; u < l.unknowns.size(); ++u) {
    const auto [i, j] = g.index(l.unknowns[u]);
    for (int dj = -1; dj <= 1; ++dj)
      for (int di = -1; di <= 1; ++di) {
        const int ii = i + di, jj = j + dj;
        if (ii < 0 || jj < 0 || ii >= nx || jj >= nx) continue;
        const long c = l.index_of[g.node(ii, jj)];
        if (c >= 0) trip.push_back({u, static_cast<std::size_t>(c), 0.0});
      }
  }
  auto m = linalg::SparseMatrix::from_triplets(l.unknowns.size(), std::move(trip));
  std::fill(m.values().begin(), m.values().end(), 0.0);
  return m;
}

void build_1d(const CauchyDirichletProblem& p, const Layout& l, double t, StepOperator& op) {
  const auto& g = p.grid;
  const auto& c = p.coefficients;
  const int nx = g.nx();
  const double h = g.h(0);
  const double ih2 = 1.0 / (h * h);
  const double i2h = 0.5 / h;
  const double x0 = g.axis(0).lo;
  std::vector<double> face(static_cast<std::size_t>(nx - 1));
  for (int f = 0; f < nx - 1; ++f) {
    const SpacePoint x{x0 + (f + 0.5) * h, 0.0};
    const auto s = c.sampler(x, t);
    check_face(s, c, x, t);
    face[static_cast<std::size_t>(f)] = s.a(0, 0);
  }
  const std::size_t m = l.unknowns.size();
  op.lo.assign(m, 0.0);
  op.di.assign(m, 0.0);
  op.up.assign(m, 0.0);
  op.coupling.clear();
  const double idt = 1.0 / g.dt();
  for (std::size_t k = 0; k < m; ++k) {
    const int i = static_cast<int>(k) + 1;
    const auto s = c.sampler(g.coord(static_cast<std::size_t>(i)), t);
    const double al = face[static_cast<std::size_t>(i - 1)];
    const double ar = face[static_cast<std::size_t>(i)];
    const double lo = -al * ih2 + s.b[0] * i2h;
    const double up = -ar * ih2 - s.b[0] * i2h;
    op.di[k] = idt + (al + ar) * ih2 - s.d + p.lambda_shift;
    if (i - 1 == 0) op.coupling.push_back({k, 0, lo});
    else op.lo[k] = lo;
    if (i + 1 == nx - 1) op.coupling.push_back({k, static_cast<std::size_t>(nx - 1), up});
    else op.up[k] = up;
  }
}

void build_2d(const CauchyDirichletProblem& p, const Layout& l, double t, StepOperator& op) {
  const auto& g = p.grid;
  const auto& c = p.coefficients;
  const int nx = g.nx();
  const double h0 = g.h(0), h1 = g.h(1);
  auto vals = op.matrix.values();
  std::fill(vals.begin(), vals.end(), 0.0);
  op.coupling.clear();

  auto add = [&](int ri, int rj, int ci, int cj, double v) {
    const long r = l.index_of[g.node(ri, rj)];
    if (r < 0 || v == 0.0) return;
    const std::size_t cn = g.node(ci, cj);
    const long cc = l.index_of[cn];
    if (cc >= 0) vals[op.matrix.find(static_cast<std::size_t>(r), static_cast<std::size_t>(cc))] += v;
    else op.coupling.push_back({static_cast<std::size_t>(r), cn, v});
  };

  // Axis-0 faces between (i,j) and (i+1,j).
  for (int j = 1; j < nx - 1; ++j)
    for (int i = 0; i < nx - 1; ++i) {
      const SpacePoint x{g.axis(0).lo + (i + 0.5) * h0, g.axis(1).lo + j * h1};
      const auto s = c.sampler(x, t);
      check_face(s, c, x, t);
      const double a00 = s.a(0, 0), a01 = s.a(0, 1);
      // F = a00 (p[i+1,j]-p[i,j])/h0 + a01 (p[i,j+1]-p[i,j-1]+p[i+1,j+1]-p[i+1,j-1])/(4 h1)
      const std::array<std::tuple<int, int, double>, 6> terms{{
          {i + 1, j, a00 / h0},
          {i, j, -a00 / h0},
          {i, j + 1, a01 / (4 * h1)},
          {i, j - 1, -a01 / (4 * h1)},
          {i + 1, j + 1, a01 / (4 * h1)},
          {i + 1, j - 1, -a01 / (4 * h1)},
      }};
      for (const auto& [ci, cj, w] : terms) {
        add(i, j, ci, cj, -w / h0);
        add(i + 1, j, ci, cj, w / h0);
      }
    }
  // Axis-1 faces between (i,j) and (i,j+1).
  for (int j = 0; j < nx - 1; ++j)
    for (int i = 1; i < nx - 1; ++i) {
      const SpacePoint x{g.axis(0).lo + i * h0, g.axis(1).lo + (j + 0.5) * h1};
      const auto s = c.sampler(x, t);
      check_face(s, c, x, t);
      const double a11 = s.a(1, 1), a10 = s.a(1, 0);
      const std::array<std::tuple<int, int, double>, 6> terms{{
          {i, j + 1, a11 / h1},
          {i, j, -a11 / h1},
          {i + 1, j, a10 / (4 * h0)},
          {i - 1, j, -a10 / (4 * h0)},
          {i + 1, j + 1, a10 / (4 * h0)},
          {i - 1, j + 1, -a10 / (4 * h0)},
      }};
      for (const auto& [ci, cj, w] : terms) {
        add(i, j, ci, cj, -w / h1);
        add(i, j + 1, ci, cj, w / h1);
      }
    }
  // Node terms.
  const double idt = 1.0 / g.dt();
  for (std::size_t u = 0; u < l.unknowns.size(); ++u) {
    const auto [i, j] = g.index(l.unknowns[u]);
    const auto s = c.sampler(g.coord(l.unknowns[u]), t);
    add(i, j, i, j, idt - s.d + p.lambda_shift);
    add(i, j, i + 1, j, -s.b[0] / (2 * h0));
    add(i, j, i - 1, j, s.b[0] / (2 * h0));
    add(i, j, i, j + 1, -s.b[1] / (2 * h1));
    add(i, j, i, j - 1, s.b[1] / (2 * h1));
  }
  op.symmetric = op.matrix.is_symmetric();
}

void build_operator(const CauchyDirichletProblem& p, const Layout& l, double t, StepOperator& op) {
  if (p.grid.dim() == 1) build_1d(p, l, t, op);
  else build_2d(p, l, t, op);
}

void check_problem(const CauchyDirichletProblem& p) {
  const auto& g = p.grid;
  if (p.coefficients.dim != g.dim())
    throw ConstraintError("dimension", "coefficient and grid dimensions differ");
  if (!p.coefficients.sampler) throw ConstraintError("coefficients", "missing coefficient sampler");
  if (!(p.lambda_shift >= 0.0)) throw ConstraintError("lambda_shift", "lambda_shift must be >= 0");
  if (p.lambda_shift != 0.0 && std::abs(p.lambda_shift - p.coefficients.bounds.Lambda) > 1e-12)
    throw ConstraintError("lambda_shift", "lambda_shift must be 0 or the field's Lambda");
  double hmax = g.h(0);
  if (g.dim() == 2) hmax = std::max(hmax, g.h(1));
  if (!(p.coefficients.max_b_norm * hmax < 2.0)) {
    std::ostringstream os;
    os << "mesh Peclet number " << p.coefficients.max_b_norm * hmax << " >= 2; refine the grid";
    throw ConstraintError("peclet", os.str());
  }
  if (p.store_stride < 1 || (g.nt() - 1) % p.store_stride != 0)
    throw ConstraintError("store_stride", "store_stride must divide nt-1");
  p.boundary.check_layout(g, "boundary");
  p.source.check_layout(g, "source");
}

/// Right-hand side for the step into `level` given nodal values `prev` at the
/// previous level and Dirichlet values already written into `next`.
void step_rhs(const CauchyDirichletProblem& p, const Layout& l, const StepOperator& op, int level,
              std::span<const double> prev, std::span<const double> next, std::vector<double>& rhs) {
  const double idt = 1.0 / p.grid.dt();
  rhs.resize(l.unknowns.size());
  for (std::size_t u = 0; u < l.unknowns.size(); ++u) {
    const std::size_t k = l.unknowns[u];
    rhs[u] = prev[k] * idt + p.source.value(p.grid, level, k);
  }
  for (const auto& cpl : op.coupling) rhs[cpl.row] -= cpl.coeff * next[cpl.node];
}

double apply_residual(const CauchyDirichletProblem& p, const StepOperator& op, std::span<const double> x,
                      std::span<const double> rhs) {
  const std::size_t m = rhs.size();
  std::vector<double> ax(m);
  if (p.grid.dim() == 1) {
    for (std::size_t k = 0; k < m; ++k) {
      double v = op.di[k] * x[k];
      if (k > 0) v += op.lo[k] * x[k - 1];
      if (k + 1 < m) v += op.up[k] * x[k + 1];
      ax[k] = v;
    }
  } else {
    op.matrix.multiply(x, ax);
  }
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    num += (ax[k] - rhs[k]) * (ax[k] - rhs[k]);
    den += rhs[k] * rhs[k];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace

StepSystem assemble_step(const CauchyDirichletProblem& problem, int level,
                         std::span<const double> previous) {
  check_problem(problem);
  const auto& g = problem.grid;
  if (level < 1 || level >= g.nt()) throw ConstraintError("level", "step level out of range");
  if (previous.size() != g.num_nodes()) throw ConstraintError("layout", "previous level has wrong size");
  const Layout l = make_layout(g);
  StepOperator op;
  if (g.dim() == 2) op.matrix = nine_point_pattern(g, l);
  build_operator(problem, l, g.t(level), op);

  StepSystem sys;
  sys.unknowns = l.unknowns;
  if (g.dim() == 1) {
    std::vector<linalg::Triplet> trip;
    const std::size_t m = l.unknowns.size();
    for (std::size_t k = 0; k < m; ++k) {
      trip.push_back({k, k, op.di[k]});
      if (k > 0) trip.push_back({k, k - 1, op.lo[k]});
      if (k + 1 < m) trip.push_back({k, k + 1, op.up[k]});
    }
    sys.matrix = linalg::SparseMatrix::from_triplets(m, std::move(trip));
  } else {
    sys.matrix = op.matrix;
  }
  std::vector<double> next(g.num_nodes(), 0.0);
  for (auto k : l.boundary) next[k] = problem.boundary.value(g, level, k);
  step_rhs(problem, l, op, level, previous, next, sys.rhs);
  return sys;
}

SolveResult solve_problem(const CauchyDirichletProblem& problem) {
  check_problem(problem);
  const auto& g = problem.grid;
  const Layout l = make_layout(g);
  const std::size_t m = l.unknowns.size();
  const int stride = problem.store_stride;

  SolveResult out;
  out.solution = DiscreteField(g.with_time_stride(stride));
  out.iterations.assign(static_cast<std::size_t>(g.nt() - 1), 0);

  std::vector<double> prev(g.num_nodes()), next(g.num_nodes());
  for (std::size_t k = 0; k < g.num_nodes(); ++k) prev[k] = problem.boundary.value(g, 0, k);
  std::copy(prev.begin(), prev.end(), out.solution.level(0).begin());

  StepOperator op;
  if (g.dim() == 2) op.matrix = nine_point_pattern(g, l);
  bool built = false;
  std::vector<double> rhs, x(m), scratch, x0(m);

  for (int lv = 1; lv < g.nt(); ++lv) {
    const double t = g.t(lv);
    if (!built || !problem.coefficients.time_invariant) {
      build_operator(problem, l, t, op);
      built = true;
    }
    for (auto k : l.boundary) next[k] = problem.boundary.value(g, lv, k);
    step_rhs(problem, l, op, lv, prev, next, rhs);
    try {
      if (g.dim() == 1) {
        linalg::solve_tridiagonal(op.lo, op.di, op.up, rhs, x, scratch);
      } else {
        for (std::size_t u = 0; u < m; ++u) x0[u] = prev[l.unknowns[u]];
        const auto method = op.symmetric ? linalg::IterativeMethod::cg : linalg::IterativeMethod::bicgstab;
        auto res = linalg::solve_iterative(op.matrix, rhs, method, problem.tol, problem.max_iter, x0);
        x = std::move(res.x);
        out.iterations[static_cast<std::size_t>(lv - 1)] = res.iterations;
      }
    } catch (const NonConvergenceError& e) {
      std::ostringstream os;
      os << "time level " << lv << " (t=" << t << "): " << e.what();
      throw NonConvergenceError(os.str(), e.last_residual(), e.iterations());
    } catch (const NumericError& e) {
      std::ostringstream os;
      os << "time level " << lv << " (t=" << t << "): " << e.what();
      throw NumericError(os.str());
    }
    out.max_residual = std::max(out.max_residual, apply_residual(problem, op, x, rhs));
    for (std::size_t u = 0; u < m; ++u) next[l.unknowns[u]] = x[u];
    if (lv % stride == 0) std::copy(next.begin(), next.end(), out.solution.level(lv / stride).begin());
    std::swap(prev, next);
  }
  if (!out.solution.all_finite()) throw NumericError("solution contains non-finite values");
  return out;
}

SolveResult solve_homogenized(const HomogenizedCoefficients& coeffs, Bounds bounds,
                              const SpaceTimeGrid& grid, DataSource boundary, double lambda_shift,
                              DataSource source, int store_stride) {
  const auto spec = coeffs.spectrum();
  if (spec[0] < 1.0 - 0.02 || spec[1] > bounds.lambda + 0.02) {
    std::ostringstream os;
    os << "homogenized matrix spectrum [" << spec[0] << ", " << spec[1] << "] outside [1, "
       << bounds.lambda << "]";
    throw ConstraintError("ellipticity", os.str());
  }
  CauchyDirichletProblem p;
  p.coefficients = coefficients_of(coeffs, bounds);
  p.grid = grid;
  p.boundary = std::move(boundary);
  p.source = std::move(source);
  p.lambda_shift = lambda_shift;
  p.store_stride = store_stride;
  return solve_problem(p);
}

DiscreteField exp_transform(const DiscreteField& field, double Lambda) {
  DiscreteField out = field;
  const auto& g = field.grid();
  for (int n = 0; n < g.nt(); ++n) {
    const double s = std::exp(-Lambda * g.t(n));
    for (double& v : out.level(n)) v *= s;
  }
  return out;
}

double step_residual(const CauchyDirichletProblem& problem, const DiscreteField& solution) {
  check_problem(problem);
  const auto& g = problem.grid;
  if (!solution.grid().same_layout(g))
    throw ConstraintError("layout", "trajectory does not match the problem grid");
  const Layout l = make_layout(g);
  StepOperator op;
  if (g.dim() == 2) op.matrix = nine_point_pattern(g, l);
  bool built = false;
  std::vector<double> rhs, x(l.unknowns.size());
  double worst = 0.0;
  for (int lv = 1; lv < g.nt(); ++lv) {
    if (!built || !problem.coefficients.time_invariant) {
      build_operator(problem, l, g.t(lv), op);
      built = true;
    }
    const auto next = solution.level(lv);
    step_rhs(problem, l, op, lv, solution.level(lv - 1), next, rhs);
    for (std::size_t u = 0; u < x.size(); ++u) x[u] = next[l.unknowns[u]];
    worst = std::max(worst, apply_residual(problem, op, x, rhs));
  }
  return worst;
}

}  // namespace homog
