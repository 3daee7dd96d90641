#include "homog/twoscale.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "homog/error.hpp"

namespace homog {

double smooth_ramp(double s) {
  if (s <= 1.0) return 0.0;
  if (s >= 2.0) return 1.0;
  const double x = s - 1.0;
  return x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
}

namespace {

double lateral_distance(const SpaceTimeGrid& g, const SpacePoint& x) {
  double d = std::numeric_limits<double>::infinity();
  for (int a = 0; a < g.dim(); ++a) {
    const auto& ax = g.axis(a);
    d = std::min({d, x[static_cast<std::size_t>(a)] - ax.lo, ax.hi - x[static_cast<std::size_t>(a)]});
  }
  return std::max(d, 0.0);
}

DiscreteField time_derivative(const DiscreteField& f) {
  const auto& g = f.grid();
  DiscreteField out(g);
  const int nt = g.nt();
  for (int n = 0; n < nt; ++n) {
    const int lo = std::max(n - 1, 0), hi = std::min(n + 1, nt - 1);
    const auto a = f.level(lo), b = f.level(hi);
    auto o = out.level(n);
    const double span = (hi - lo) * g.dt();
    for (std::size_t k = 0; k < g.num_nodes(); ++k) o[k] = (b[k] - a[k]) / span;
  }
  return out;
}

void check_correctors(const DiscreteField& p0, const std::vector<CorrectorSolution>& correctors) {
  const int dim = p0.grid().dim();
  if (static_cast<int>(correctors.size()) != dim)
    throw ConstraintError("correctors", "need one corrector per spatial direction");
  for (const auto& c : correctors)
    if (c.dim != dim) throw ConstraintError("correctors", "corrector dimension does not match the grid");
}

}  // namespace

CutoffFunction build_cutoff(const SpaceTimeGrid& g, double r) {
  double width = std::numeric_limits<double>::infinity();
  for (int a = 0; a < g.dim(); ++a) width = std::min(width, g.axis(a).width());
  const double limit = std::min(width, std::sqrt(g.time().width())) / 4;
  if (!(r > 0.0) || r > limit * (1 + 1e-12)) {
    std::ostringstream msg;
    msg << "cutoff width r = " << r << " must lie in (0, " << limit << "]";
    throw ConstraintError("cutoff_width", msg.str());
  }
  CutoffFunction c;
  c.r = r;
  const double t0 = g.time().lo;
  c.eta = DiscreteField::from_function(g, [&](const SpacePoint& x, double t) {
    return smooth_ramp(lateral_distance(g, x) / r) * smooth_ramp((t - t0) / (r * r));
  });
  for (int a = 0; a < g.dim(); ++a) c.grad[static_cast<std::size_t>(a)] = partial(c.eta, a);
  c.dt = time_derivative(c.eta);
  double gmax = 0.0, tmax = 0.0;
  for (std::size_t i = 0; i < c.eta.values().size(); ++i) {
    double g2 = 0.0;
    for (int a = 0; a < g.dim(); ++a) g2 += c.grad[static_cast<std::size_t>(a)].values()[i] * c.grad[static_cast<std::size_t>(a)].values()[i];
    gmax = std::max(gmax, std::sqrt(g2));
    tmax = std::max(tmax, std::abs(c.dt.values()[i]));
  }
  c.c1 = gmax * r;
  c.c2 = tmax * r * r;
  return c;
}

DiscreteField build_w_epsilon(const DiscreteField& p0, const std::vector<CorrectorSolution>& correctors,
                              double eps, const CutoffFunction& cutoff) {
  check_correctors(p0, correctors);
  const auto& g = p0.grid();
  if (!cutoff.eta.grid().same_layout(g)) throw ConstraintError("layout", "cutoff and p0 grids differ");
  if (!(eps > 0.0)) throw ConstraintError("epsilon", "epsilon must be positive");
  std::array<DiscreteField, 2> dp;
  for (int a = 0; a < g.dim(); ++a) dp[static_cast<std::size_t>(a)] = partial(p0, a);
  DiscreteField w = p0;
  for (int n = 0; n < g.nt(); ++n) {
    const double s = g.t(n) / (eps * eps);
    for (std::size_t k = 0; k < g.num_nodes(); ++k) {
      const double eta = cutoff.eta.at(n, k);
      if (eta == 0.0) continue;
      const auto x = g.coord(k);
      const SpacePoint y{x[0] / eps, x[1] / eps};
      double sum = 0.0;
      for (int i = 0; i < g.dim(); ++i)
        sum += dp[static_cast<std::size_t>(i)].at(n, k) * correctors[static_cast<std::size_t>(i)].value(y, s);
      w.at(n, k) += eta * eps * sum;
    }
  }
  return w;
}

std::array<DiscreteField, 2> w_epsilon_gradient(const DiscreteField& p0,
                                                const std::vector<CorrectorSolution>& correctors, double eps,
                                                const CutoffFunction& cutoff) {
  check_correctors(p0, correctors);
  const auto& g = p0.grid();
  const int dim = g.dim();
  std::array<DiscreteField, 2> dp;
  std::array<std::array<DiscreteField, 2>, 2> ddp;
  for (int i = 0; i < dim; ++i) {
    dp[static_cast<std::size_t>(i)] = partial(p0, i);
    for (int a = 0; a < dim; ++a) ddp[static_cast<std::size_t>(a)][static_cast<std::size_t>(i)] = partial(dp[static_cast<std::size_t>(i)], a);
  }
  std::array<DiscreteField, 2> out;
  for (int a = 0; a < dim; ++a) out[static_cast<std::size_t>(a)] = dp[static_cast<std::size_t>(a)];
  for (int n = 0; n < g.nt(); ++n) {
    const double s = g.t(n) / (eps * eps);
    for (std::size_t k = 0; k < g.num_nodes(); ++k) {
      const auto x = g.coord(k);
      const SpacePoint y{x[0] / eps, x[1] / eps};
      const double eta = cutoff.eta.at(n, k);
      for (int i = 0; i < dim; ++i) {
        const auto& c = correctors[static_cast<std::size_t>(i)];
        const double phi = c.value(y, s);
        const Vec2 gphi = c.gradient(y, s);
        const double di = dp[static_cast<std::size_t>(i)].at(n, k);
        for (int a = 0; a < dim; ++a) {
          const auto ua = static_cast<std::size_t>(a);
          out[ua].at(n, k) += eta * eps * ddp[ua][static_cast<std::size_t>(i)].at(n, k) * phi +
                              eta * di * gphi[ua] + cutoff.grad[ua].at(n, k) * eps * di * phi;
        }
      }
    }
  }
  return out;
}

double interior_sup(const DiscreteField& f, double r) {
  const auto& g = f.grid();
  double m = 0.0;
  for (int n = 0; n < g.nt(); ++n) {
    if (g.t(n) - g.time().lo < r * r - 1e-12) continue;
    for (std::size_t k = 0; k < g.num_nodes(); ++k)
      if (lateral_distance(g, g.coord(k)) >= r - 1e-12) m = std::max(m, std::abs(f.at(n, k)));
  }
  return m;
}

namespace {

/// Box filter of a torus array (n nodes per axis, nt levels) onto a coarser
/// lattice (M per axis, K levels). The weights form a partition of unity, so
/// the filtered mean equals the original mean.
std::vector<double> box_filter(std::span<const double> v, int dim, int n, int nt, int M, int K) {
  const int q = n / M, qt = nt / K;
  auto offsets = [](int width) {
    std::vector<std::pair<int, double>> o;
    if (width == 1) return std::vector<std::pair<int, double>>{{0, 1.0}};
    if (width % 2 == 1) {
      for (int d = -(width - 1) / 2; d <= (width - 1) / 2; ++d) o.push_back({d, 1.0 / width});
    } else {
      for (int d = -width / 2; d <= width / 2; ++d) o.push_back({d, (std::abs(d) == width / 2 ? 0.5 : 1.0) / width});
    }
    return o;
  };
  const auto ox = offsets(q), ot = offsets(qt);
  const std::size_t nodes = dim == 2 ? static_cast<std::size_t>(n) * n : static_cast<std::size_t>(n);
  const std::size_t cells = dim == 2 ? static_cast<std::size_t>(M) * M : static_cast<std::size_t>(M);
  auto wrap = [](int i, int p) { return ((i % p) + p) % p; };
  std::vector<double> out(cells * static_cast<std::size_t>(K), 0.0);
  for (int m = 0; m < K; ++m)
    for (int J = 0; J < (dim == 2 ? M : 1); ++J)
      for (int I = 0; I < M; ++I) {
        double s = 0.0;
        for (const auto& [dtau, wt] : ot) {
          const std::size_t lv = static_cast<std::size_t>(wrap(m * qt + dtau, nt)) * nodes;
          for (const auto& [dx, wx] : ox) {
            const std::size_t ix = static_cast<std::size_t>(wrap(I * q + dx, n));
            if (dim == 1) {
              s += wt * wx * v[lv + ix];
            } else {
              for (const auto& [dy, wy] : ox)
                s += wt * wx * wy * v[lv + ix + static_cast<std::size_t>(n) * static_cast<std::size_t>(wrap(J * q + dy, n))];
            }
          }
        }
        out[static_cast<std::size_t>(m) * cells + static_cast<std::size_t>(I) + static_cast<std::size_t>(M) * static_cast<std::size_t>(J)] = s;
      }
  return out;
}

struct FilteredCorrector {
  int M = 0, K = 0;
  std::vector<double> phi;
  std::array<std::vector<double>, 2> grad;  // nodal central gradient
  std::array<std::vector<double>, 2> flux;  // nodal flux vector
  std::vector<double> b_term;
  std::vector<double> d;
};

FilteredCorrector filter(const CorrectorSolution& c, int m, int k) {
  FilteredCorrector f;
  f.M = m * c.period_L;
  const double P = c.period;
  f.K = static_cast<int>(std::lround(k * P));
  if (c.n % f.M != 0 || f.K < 1 || c.nt % f.K != 0)
    throw ConstraintError("resolution", "corrector lattice is not a multiple of the reference-cell lattice");
  const std::size_t N = c.num_nodes();
  // Nodal vectors: average of the two faces along each axis.
  std::array<std::vector<double>, 2> g, fl;
  for (int a = 0; a < c.dim; ++a) {
    const auto ua = static_cast<std::size_t>(a);
    g[ua].resize(c.phi.size());
    fl[ua].resize(c.phi.size());
    for (int lv = 0; lv < c.nt; ++lv)
      for (std::size_t kk = 0; kk < N; ++kk) {
        const int i = static_cast<int>(kk % static_cast<std::size_t>(c.n)), j = static_cast<int>(kk / static_cast<std::size_t>(c.n));
        const std::size_t left = a == 0 ? c.node(i - 1, j) : c.node(i, j - 1);
        const std::size_t off = static_cast<std::size_t>(lv) * N;
        g[ua][off + kk] = 0.5 * (c.grad[ua][off + kk] + c.grad[ua][off + left]);
        fl[ua][off + kk] = 0.5 * (c.flux[ua][off + kk] + c.flux[ua][off + left]);
      }
  }
  f.phi = box_filter(c.phi, c.dim, c.n, c.nt, f.M, f.K);
  for (int a = 0; a < c.dim; ++a) {
    f.grad[static_cast<std::size_t>(a)] = box_filter(g[static_cast<std::size_t>(a)], c.dim, c.n, c.nt, f.M, f.K);
    f.flux[static_cast<std::size_t>(a)] = box_filter(fl[static_cast<std::size_t>(a)], c.dim, c.n, c.nt, f.M, f.K);
  }
  f.b_term = box_filter(c.b_term, c.dim, c.n, c.nt, f.M, f.K);
  f.d = box_filter(c.d, c.dim, c.n, c.nt, f.M, f.K);
  return f;
}

int exact_index(double v, const char* what) {
  // Also guards the integer conversion below.
  if (!(std::abs(v) < 1e9)) throw ConstraintError("alignment", what);
  const double r = std::round(v);
  if (std::abs(v - r) > 1e-6) {
    std::ostringstream msg;
    msg << "reference cell is not aligned with the corrector lattice (" << what << ")";
    throw ConstraintError("alignment", msg.str());
  }
  return static_cast<int>(r);
}

}  // namespace

ErrorFunctional error_functional(const CoefficientField& field, const std::vector<CorrectorSolution>& correctors,
                                 double eps, const ErrorFunctionalOptions& opt) {
  const int dim = field.dim();
  if (static_cast<int>(correctors.size()) != dim)
    throw ConstraintError("correctors", "need one corrector per spatial direction");
  if (!(eps > 0.0) || eps > 1.0) throw ConstraintError("epsilon", "epsilon must lie in (0, 1]");
  if (opt.cells_per_period < 4) {
    std::ostringstream msg;
    msg << "reference grid has " << opt.cells_per_period << " cells per eps period; at least 4 are required";
    throw ConstraintError("resolution", msg.str());
  }
  if (opt.levels_per_period < 1) throw ConstraintError("resolution", "levels_per_period must be >= 1");
  const double inv = 1.0 / eps;
  const int periods = exact_index(inv, "1/eps must be an integer");

  const auto hc = homogenized_coefficients(field, correctors);
  std::vector<FilteredCorrector> fc;
  for (const auto& c : correctors) fc.push_back(filter(c, opt.cells_per_period, opt.levels_per_period));

  ErrorFunctional out;
  out.epsilon = eps;
  out.fine_cells = periods * opt.cells_per_period;
  const long levels = static_cast<long>(periods) * periods * opt.levels_per_period;
  if (levels > 50'000'000) throw ConstraintError("resolution", "reference grid too large");
  out.fine_levels = static_cast<int>(levels) + 1;
  if (out.fine_cells % 2 != 0 || levels % 2 != 0)
    throw ConstraintError("alignment", "reference grid must have an even number of cells and time steps");
  std::array<Interval, 2> box{Interval{-0.5, 0.5}, Interval{-0.5, 0.5}};
  const auto grid = SpaceTimeGrid::build(dim, box, out.fine_cells + 1, Interval{-0.5, 0.5}, out.fine_levels);

  const int coarse = opt.coarse_cells > 0 ? opt.coarse_cells : (dim == 1 ? 32 : 16);
  const int sstride = std::max(1, out.fine_cells / coarse);
  const int tstride = std::max(1, static_cast<int>(levels) / coarse);
  NormWorkspace ws(grid, RegionMask::full(grid), sstride, tstride);
  out.coarsening = ws.coarsening();

  // Loads: per direction grad phi (dim), flux (dim), b-term; plus d once.
  const std::size_t L = ws.size();
  const std::size_t per_dir = static_cast<std::size_t>(2 * dim + 1);
  std::vector<std::vector<double>> loads(per_dir * static_cast<std::size_t>(dim) + 1, std::vector<double>(L, 0.0));
  std::vector<std::vector<double>> bufs(loads.size(), std::vector<double>(grid.num_nodes()));
  std::vector<double> phi_sq(static_cast<std::size_t>(dim), 0.0);

  const std::size_t nodes = grid.num_nodes();
  std::vector<std::array<int, 2>> cell_index(nodes);
  for (std::size_t k = 0; k < nodes; ++k) {
    const auto ij = grid.index(k);
    cell_index[k] = {ij[0] - out.fine_cells / 2, ij[1] - out.fine_cells / 2};
  }
  const int half_levels = static_cast<int>(levels / 2);
  auto wrap = [](long i, long p) { return static_cast<std::size_t>(((i % p) + p) % p); };

  for (int n = 0; n < grid.nt(); ++n) {
    const double wt = grid.time_weight(n);
    for (int i = 0; i < dim; ++i) {
      const auto& f = fc[static_cast<std::size_t>(i)];
      const std::size_t cells = dim == 2 ? static_cast<std::size_t>(f.M) * f.M : static_cast<std::size_t>(f.M);
      const std::size_t lv = wrap(n - half_levels, f.K) * cells;
      double sq = 0.0;
      for (std::size_t k = 0; k < nodes; ++k) {
        const std::size_t I = wrap(cell_index[k][0], f.M);
        const std::size_t J = dim == 2 ? wrap(cell_index[k][1], f.M) : 0;
        const std::size_t idx = lv + I + static_cast<std::size_t>(f.M) * J;
        const double p = f.phi[idx];
        sq += grid.spatial_weight(k) * p * p;
        const std::size_t base = per_dir * static_cast<std::size_t>(i);
        for (int a = 0; a < dim; ++a) {
          const auto ua = static_cast<std::size_t>(a);
          bufs[base + ua][k] = f.grad[ua][idx];
          bufs[base + static_cast<std::size_t>(dim) + ua][k] = f.flux[ua][idx] - hc.a_bar(a, i);
        }
        bufs[base + static_cast<std::size_t>(2 * dim)][k] = f.b_term[idx] - hc.b_bar[static_cast<std::size_t>(i)];
        if (i == 0) bufs.back()[k] = f.d[idx] - hc.d_bar;
      }
      phi_sq[static_cast<std::size_t>(i)] += wt * sq;
    }
    for (std::size_t q = 0; q < loads.size(); ++q) ws.accumulate_level(bufs[q], n, loads[q]);
  }

  for (int i = 0; i < dim; ++i) {
    const std::size_t base = per_dir * static_cast<std::size_t>(i);
    out.terms[0] += eps * std::sqrt(phi_sq[static_cast<std::size_t>(i)]);
    double g2 = 0.0, f2 = 0.0;
    for (int a = 0; a < dim; ++a) {
      const double dg = ws.dual_norm_of_load(loads[base + static_cast<std::size_t>(a)]);
      const double df = ws.dual_norm_of_load(loads[base + static_cast<std::size_t>(dim + a)]);
      g2 += dg * dg;
      f2 += df * df;
    }
    out.terms[1] += std::sqrt(g2);
    out.terms[2] += std::sqrt(f2);
    out.terms[3] += ws.dual_norm_of_load(loads[base + static_cast<std::size_t>(2 * dim)]);
  }
  out.terms[4] = dim * ws.dual_norm_of_load(loads.back());
  out.total = 0.0;
  for (double t : out.terms) out.total += t;
  return out;
}

double beta_of(double delta) { return delta / (4.0 + 2.0 * delta); }

RateBoundReport rate_bound_check(double lhs_l2, double lhs_dual, double e_value, double f_norm, int dim,
                                const std::vector<double>& r_list, double beta) {
  RateBoundReport rep;
  rep.beta = beta;
  rep.lhs_l2 = lhs_l2;
  rep.lhs_dual = lhs_dual;
  rep.lhs = lhs_l2 + lhs_dual;
  rep.e_value = e_value;
  rep.e_underestimated = e_value == 0.0 && rep.lhs > 0.0;
  rep.min_implied = std::numeric_limits<double>::infinity();
  for (double r : r_list) {
    RateBoundRow row;
    row.r = r;
    row.shape = std::pow(r, beta) + std::pow(r, -4.0 - dim / 2.0) * e_value;
    const double denom = f_norm * row.shape;
    row.implied = rep.lhs == 0.0 ? 0.0 : (denom > 0.0 ? rep.lhs / denom : std::numeric_limits<double>::infinity());
    rep.min_implied = std::min(rep.min_implied, row.implied);
    rep.rows.push_back(row);
  }
  if (r_list.empty()) rep.min_implied = 0.0;
  return rep;
}

RateBoundReport rate_bound_check(const DiscreteField& p_eps_hat, const DiscreteField& p0_hat, double e_value,
                                double f_norm, const std::vector<double>& r_list, double beta,
                                const NormWorkspace& ws) {
  const auto diff = p_eps_hat - p0_hat;
  const auto& g = diff.grid();
  std::vector<DiscreteField> grads;
  for (int a = 0; a < g.dim(); ++a) grads.push_back(partial(diff, a));
  return rate_bound_check(lp_norm(diff, ws.region(), 2.0), ws.dual_norm(grads), e_value, f_norm, g.dim(), r_list,
                         beta);
}

RateBoundSweep rate_bound_sweep(const std::vector<RateBoundReport>& reports, double band) {
  RateBoundSweep s;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& r : reports) {
    lo = std::min(lo, r.min_implied);
    hi = std::max(hi, r.min_implied);
  }
  if (reports.empty() || hi <= 1e-12) {
    s.spread = 1.0;
    s.bounded = true;
    return s;
  }
  s.spread = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  s.bounded = std::isfinite(hi) && s.spread <= band;
  return s;
}

}  // namespace homog
