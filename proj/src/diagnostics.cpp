#include "homog/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "homog/error.hpp"
#include "homog/norms.hpp"

namespace homog {

namespace {

double ratio(double lhs, double rhs) {
  if (rhs > 0.0) return lhs / rhs;
  return lhs > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
}

CylinderRegion top_aligned(SpacePoint center, double rho, double t_top) {
  return {center, rho, t_top - rho * rho, CylinderRegion::Kind::interior};
}

/// sqrt(sum_axis ||d_axis f||^2) over the region.
double gradient_l2(const std::vector<DiscreteField>& grad, const RegionMask& region) {
  if (region.empty()) return 0.0;
  double s = 0.0;
  for (const auto& g : grad) {
    const double v = lp_norm(g, region, 2.0);
    s += v * v;
  }
  return std::sqrt(s);
}

std::vector<DiscreteField> gradient_of(const DiscreteField& p) {
  std::vector<DiscreteField> out;
  for (int a = 0; a < p.grid().dim(); ++a) out.push_back(partial(p, a));
  return out;
}

DiscreteField magnitude(const std::vector<DiscreteField>& grad) {
  DiscreteField out(grad.front().grid());
  auto o = out.values();
  for (const auto& g : grad) {
    const auto v = g.values();
    for (std::size_t k = 0; k < o.size(); ++k) o[k] += v[k] * v[k];
  }
  for (double& x : o) x = std::sqrt(x);
  return out;
}

double slice_dual_or_zero(const DiscreteField& h, const RegionMask& region) {
  if (region.empty()) return 0.0;
  return slice_dual_norm(h, region);
}

void finish(InequalityReport& rep) {
  rep.rhs = 0.0;
  for (const auto& [name, v] : rep.rhs_components) rep.rhs += v;
  rep.implied_constant = ratio(rep.lhs, rep.rhs);
}

void check_radius(double r) {
  if (!(r > 0.0) || !std::isfinite(r)) throw ConstraintError("radius", "probe radius must be positive");
}

}  // namespace

DiscreteField sample_source(const CauchyDirichletProblem& problem) {
  const auto& g = problem.grid;
  DiscreteField h(g);
  if (problem.source.is_zero()) return h;
  for (int n = 0; n < g.nt(); ++n)
    for (std::size_t k = 0; k < g.num_nodes(); ++k) h.at(n, k) = problem.source.value(g, n, k);
  return h;
}

double residual_gate(const CauchyDirichletProblem& problem, const DiscreteField& p) {
  if (!p.grid().same_layout(problem.grid))
    throw ConstraintError("layout", "probe input does not live on the problem grid");
  if (!p.all_finite()) throw ConstraintError("finite", "probe input is not finite");
  const double res = step_residual(problem, p);
  const double limit = 10.0 * std::max(problem.tol, 1e-13);
  if (!(res <= limit))
    throw ConstraintError("residual", "probe input residual " + std::to_string(res) + " exceeds " +
                                          std::to_string(limit));
  return res;
}

InequalityReport caccioppoli_interior(const CauchyDirichletProblem& problem, const DiscreteField& p, double r,
                                      SpacePoint center, double t_top, std::uint64_t seed) {
  check_radius(r);
  const auto& g = problem.grid;
  const auto outer = top_aligned(center, 2.0 * r, t_top);
  if (!region_inside_domain(g, outer))
    throw ConstraintError("cylinder", "Q_2r is not contained in the grid domain");

  InequalityReport rep;
  rep.probe = "caccioppoli_interior";
  rep.context = {r, center, t_top, problem.coefficients.description, seed};
  rep.input_residual = residual_gate(problem, p);

  const auto inner_mask = region_mask(g, top_aligned(center, r, t_top));
  const auto outer_mask = region_mask(g, outer);
  const auto grad = gradient_of(p);
  const auto h = sample_source(problem);

  rep.lhs = gradient_l2(grad, inner_mask);
  const double p_term = outer_mask.empty() ? 0.0 : lp_norm(p, outer_mask, 2.0) / r;
  const double h_term = slice_dual_or_zero(h, outer_mask);
  rep.rhs_components = {{"p_l2_over_r", p_term}, {"h_dual", h_term}};
  finish(rep);

  if (!inner_mask.empty()) {
    const auto w = region_weights(g, inner_mask);
    const auto nodes = inner_mask.nodes();
    for (int n = inner_mask.level_begin(); n < inner_mask.level_end(); ++n) {
      const auto lv = p.level(n);
      double s = 0.0;
      for (std::size_t q = 0; q < nodes.size(); ++q) s += w.spatial[q] * lv[nodes[q]] * lv[nodes[q]];
      rep.sup_lhs = std::max(rep.sup_lhs, std::sqrt(s));
    }
  }
  rep.sup_rhs = gradient_l2(grad, outer_mask) + h_term;
  rep.sup_implied = ratio(rep.sup_lhs, rep.sup_rhs);
  return rep;
}

InequalityReport caccioppoli_global(const CauchyDirichletProblem& problem, const DiscreteField& v, double r,
                                    SpacePoint center, double t_top, std::uint64_t seed) {
  check_radius(r);
  const auto& g = problem.grid;
  InequalityReport rep;
  rep.probe = "caccioppoli_global";
  rep.context = {r, center, t_top, problem.coefficients.description, seed};
  rep.input_residual = residual_gate(problem, v);

  double vmax = 0.0, bmax = 0.0;
  for (int n = 0; n < g.nt(); ++n)
    for (std::size_t k = 0; k < g.num_nodes(); ++k) {
      const double x = std::abs(v.at(n, k));
      vmax = std::max(vmax, x);
      if (n == 0 || g.is_boundary(k)) bmax = std::max(bmax, x);
    }
  if (bmax > 1e-12 * std::max(vmax, 1.0))
    throw ConstraintError("zero_boundary", "global estimate needs v = 0 on the parabolic boundary");

  // region_mask keeps only grid points, so these are Q_rho intersected with V.
  const auto inner_mask = region_mask(g, top_aligned(center, r, t_top));
  const auto outer_mask = region_mask(g, top_aligned(center, 2.0 * r, t_top));
  const auto H = sample_source(problem);
  rep.lhs = gradient_l2(gradient_of(v), inner_mask);
  const double v_term = outer_mask.empty() ? 0.0 : lp_norm(v, outer_mask, 2.0) / r;
  rep.rhs_components = {{"v_l2_over_r", v_term}, {"H_dual", slice_dual_or_zero(H, outer_mask)}};
  finish(rep);
  return rep;
}

InequalityReport global_energy_estimate(const CauchyDirichletProblem& problem, const DiscreteField& v,
                                        std::uint64_t seed) {
  const auto& g = problem.grid;
  InequalityReport rep;
  rep.probe = "global_energy";
  rep.context = {0.0, {0.0, 0.0}, g.time().hi, problem.coefficients.description, seed};
  rep.input_residual = residual_gate(problem, v);
  const auto full = RegionMask::full(g);
  rep.lhs = gradient_l2(gradient_of(v), full);
  rep.rhs_components = {{"H_dual", slice_dual_norm(sample_source(problem), full)}};
  finish(rep);
  return rep;
}

MeyersReport meyers_probe(const CauchyDirichletProblem& problem, const DiscreteField& p,
                          const std::vector<double>& deltas, std::uint64_t seed) {
  for (double d : deltas)
    if (!(d > 0.0 && d <= 2.0)) throw ConstraintError("delta", "Meyers exponents need delta in (0, 2]");
  const auto& g = problem.grid;
  MeyersReport rep;
  rep.field = problem.coefficients.description;
  rep.seed = seed;
  rep.input_residual = residual_gate(problem, p);

  DiscreteField f(g);
  for (int n = 0; n < g.nt(); ++n)
    for (std::size_t k = 0; k < g.num_nodes(); ++k) f.at(n, k) = problem.boundary.value(g, n, k);
  const auto full = RegionMask::full(g);
  const auto grad = magnitude(gradient_of(p));
  // The 2-based surrogate does not depend on delta.
  const double h_norm = slice_dual_norm(sample_source(problem), full);

  std::vector<double> all{0.0};
  all.insert(all.end(), deltas.begin(), deltas.end());
  for (double d : all) {
    MeyersRow row;
    row.delta = d;
    row.q = 2.0 + d;
    row.grad_norm = lp_norm(grad, full, row.q);
    row.f_norm = w1q_par_norm(f, full, row.q);
    row.h_norm = h_norm;
    row.finite = std::isfinite(row.grad_norm);
    row.implied = ratio(row.grad_norm, row.f_norm + row.h_norm);
    rep.rows.push_back(row);
  }
  return rep;
}

double meyers_working_delta(const std::vector<MeyersReport>& ensemble, double factor) {
  if (ensemble.empty()) return 0.0;
  const std::size_t nrows = ensemble.front().rows.size();
  double best = 0.0;
  for (std::size_t i = 1; i < nrows; ++i) {
    bool ok = true;
    for (const auto& rep : ensemble) {
      if (rep.rows.size() != nrows) throw ConstraintError("delta", "ensemble reports use different delta lists");
      const auto& row = rep.rows[i];
      if (!row.finite || !(row.implied <= factor * rep.rows[0].implied)) ok = false;
    }
    if (ok) best = std::max(best, ensemble.front().rows[i].delta);
  }
  return best;
}

double implied_spread(const std::vector<InequalityReport>& reports) {
  if (reports.empty()) return 1.0;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& r : reports) {
    lo = std::min(lo, r.implied_constant);
    hi = std::max(hi, r.implied_constant);
  }
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

}  // namespace homog
