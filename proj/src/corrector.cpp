#include "homog/corrector.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "homog/error.hpp"
#include "homog/linalg.hpp"

namespace homog {

namespace {

int wrap(int i, int n) { return ((i % n) + n) % n; }

/// Face flux F = sum coeff * phi[node] + constant.
struct FaceStencil {
  std::array<std::pair<std::size_t, double>, 6> lin{};
  int count = 0;
  double c = 0.0;
  void add(std::size_t node, double w) { lin[static_cast<std::size_t>(count++)] = {node, w}; }
  double eval(std::span<const double> phi) const {
    double f = c;
    for (int q = 0; q < count; ++q) f += lin[static_cast<std::size_t>(q)].second * phi[lin[static_cast<std::size_t>(q)].first];
    return f;
  }
};

/// Discrete cell operator at one time: faces of each axis indexed by their
/// left node, div F = sum_axis (F_{k+1/2} - F_{k-1/2}) / h.
class TorusOperator {
 public:
  TorusOperator(const CellProblem& p, int n, double h) : p_(p), dim_(p.field.dim()), n_(n), h_(h) {
    nodes_ = dim_ == 2 ? static_cast<std::size_t>(n) * n : static_cast<std::size_t>(n);
    for (int ax = 0; ax < dim_; ++ax) faces_[static_cast<std::size_t>(ax)].resize(nodes_);
  }

  std::size_t nodes() const { return nodes_; }
  std::size_t node(int i, int j) const {
    return static_cast<std::size_t>(wrap(i, n_)) + static_cast<std::size_t>(n_) * static_cast<std::size_t>(dim_ == 2 ? wrap(j, n_) : 0);
  }
  const std::vector<FaceStencil>& faces(int ax) const { return faces_[static_cast<std::size_t>(ax)]; }
  std::size_t right_of(int ax, std::size_t k) const {
    const int i = static_cast<int>(k % n_), j = static_cast<int>(k / n_);
    return ax == 0 ? node(i + 1, j) : node(i, j + 1);
  }

  void build(double s, bool check) {
    const auto& e = p_.direction;
    const auto& bounds = p_.field.bounds();
    for (int j = 0; j < (dim_ == 2 ? n_ : 1); ++j)
      for (int i = 0; i < n_; ++i) {
        const std::size_t k = node(i, j);
        for (int ax = 0; ax < dim_; ++ax) {
          SpacePoint y{i * h_, j * h_};
          y[static_cast<std::size_t>(ax)] += 0.5 * h_;
          const auto smp = p_.field.sample(y, s);
          if (check) check_sample_bounds(smp, dim_, bounds, "cell face");
          const Mat2& a = smp.a;
          FaceStencil f;
          if (dim_ == 1) {
            f.add(node(i + 1, j), a(0, 0) / h_);
            f.add(k, -a(0, 0) / h_);
            f.c = a(0, 0) * e[0];
          } else if (ax == 0) {
            f.add(node(i + 1, j), a(0, 0) / h_);
            f.add(k, -a(0, 0) / h_);
            const double w = a(0, 1) / (4 * h_);
            f.add(node(i, j + 1), w);
            f.add(node(i + 1, j + 1), w);
            f.add(node(i, j - 1), -w);
            f.add(node(i + 1, j - 1), -w);
            f.c = a(0, 0) * e[0] + a(0, 1) * e[1];
          } else {
            f.add(node(i, j + 1), a(1, 1) / h_);
            f.add(k, -a(1, 1) / h_);
            const double w = a(1, 0) / (4 * h_);
            f.add(node(i + 1, j), w);
            f.add(node(i + 1, j + 1), w);
            f.add(node(i - 1, j), -w);
            f.add(node(i - 1, j + 1), -w);
            f.c = a(1, 0) * e[0] + a(1, 1) * e[1];
          }
          faces_[static_cast<std::size_t>(ax)][k] = f;
        }
      }
  }

  /// Triplets of A = -div F_lin, plus the constant g = div F_const.
  std::vector<linalg::Triplet> triplets(double diag_shift, std::vector<double>& g) const {
    std::vector<linalg::Triplet> t;
    g.assign(nodes_, 0.0);
    for (std::size_t k = 0; k < nodes_; ++k) t.push_back({k, k, diag_shift});
    for (int ax = 0; ax < dim_; ++ax)
      for (std::size_t k = 0; k < nodes_; ++k) {
        const auto& f = faces(ax)[k];
        const std::size_t r = right_of(ax, k);
        for (int q = 0; q < f.count; ++q) {
          const auto [col, w] = f.lin[static_cast<std::size_t>(q)];
          t.push_back({k, col, -w / h_});
          t.push_back({r, col, w / h_});
        }
        g[k] += f.c / h_;
        g[r] -= f.c / h_;
      }
    return t;
  }

  /// div F(phi) at every node.
  void divergence(std::span<const double> phi, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    for (int ax = 0; ax < dim_; ++ax)
      for (std::size_t k = 0; k < nodes_; ++k) {
        const double f = faces(ax)[k].eval(phi) / h_;
        out[k] += f;
        out[right_of(ax, k)] -= f;
      }
  }

  /// 1D cyclic tridiagonal bands of diag_shift + A and the constant g.
  void bands(double diag_shift, std::vector<double>& lo, std::vector<double>& di, std::vector<double>& up,
             std::vector<double>& g) const {
    const auto n = static_cast<std::size_t>(n_);
    lo.assign(n, 0.0);
    di.assign(n, diag_shift);
    up.assign(n, 0.0);
    g.assign(n, 0.0);
    const double h2 = h_ * h_;
    for (std::size_t i = 0; i < n; ++i) {
      const double ar = faces(0)[i].lin[0].second * h_;
      const double al = faces(0)[(i + n - 1) % n].lin[0].second * h_;
      di[i] += (ar + al) / h2;
      up[i] -= ar / h2;
      lo[i] -= al / h2;
      g[i] = (faces(0)[i].c - faces(0)[(i + n - 1) % n].c) / h_;
    }
  }

 private:
  const CellProblem& p_;
  int dim_, n_;
  double h_;
  std::size_t nodes_ = 0;
  std::array<std::vector<FaceStencil>, 2> faces_;
};

double l2_torus(std::span<const double> v, double h, int dim) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s * std::pow(h, dim));
}

void check_problem(const CellProblem& p) {
  const int dim = p.field.dim();
  if (p.cell_nx < 4) throw ConstraintError("resolution", "cell_nx must be >= 4");
  if (p.cell_nt < 1) throw ConstraintError("resolution", "cell_nt must be >= 1");
  if (p.period_L < 1) throw ConstraintError("period_L", "period_L must be >= 1");
  const auto sp = p.field.spatial_period();
  if (!sp) throw ConstraintError("periodicity", "field is not periodic in space");
  const double ratio = p.period_L / *sp;
  if (std::abs(ratio - std::round(ratio)) > 1e-12 || std::round(ratio) < 1)
    throw ConstraintError("periodicity", "torus size is not a multiple of the field period");
  if (!p.field.time_period()) throw ConstraintError("periodicity", "field is not periodic in time");
  if (!std::isfinite(p.direction[0]) || (dim == 2 && !std::isfinite(p.direction[1])))
    throw ConstraintError("direction", "direction must be finite");
}

}  // namespace

std::size_t CorrectorSolution::node(int i, int j) const {
  return static_cast<std::size_t>(wrap(i, n)) + static_cast<std::size_t>(n) * static_cast<std::size_t>(dim == 2 ? wrap(j, n) : 0);
}

namespace {

struct InterpStencil {
  std::array<std::pair<std::size_t, double>, 4> space{};
  int ns = 0;
  std::array<std::pair<int, double>, 2> time{};
};

InterpStencil interp_stencil(const CorrectorSolution& c, const SpacePoint& y, double s) {
  InterpStencil st;
  std::array<int, 2> i0{0, 0};
  std::array<double, 2> fr{0.0, 0.0};
  for (int a = 0; a < c.dim; ++a) {
    const double u = y[static_cast<std::size_t>(a)] / c.h;
    const double fl = std::floor(u);
    i0[static_cast<std::size_t>(a)] = wrap(static_cast<int>(static_cast<long long>(fl) % c.n), c.n);
    fr[static_cast<std::size_t>(a)] = u - fl;
  }
  if (c.dim == 1) {
    st.space[0] = {c.node(i0[0]), 1 - fr[0]};
    st.space[1] = {c.node(i0[0] + 1), fr[0]};
    st.ns = 2;
  } else {
    st.space[0] = {c.node(i0[0], i0[1]), (1 - fr[0]) * (1 - fr[1])};
    st.space[1] = {c.node(i0[0] + 1, i0[1]), fr[0] * (1 - fr[1])};
    st.space[2] = {c.node(i0[0], i0[1] + 1), (1 - fr[0]) * fr[1]};
    st.space[3] = {c.node(i0[0] + 1, i0[1] + 1), fr[0] * fr[1]};
    st.ns = 4;
  }
  const double v = s / (c.period / c.nt);
  const double fl = std::floor(v);
  const int m0 = wrap(static_cast<int>(static_cast<long long>(fl) % c.nt), c.nt);
  st.time[0] = {m0, 1 - (v - fl)};
  st.time[1] = {(m0 + 1) % c.nt, v - fl};
  return st;
}

}  // namespace

double CorrectorSolution::value(const SpacePoint& y, double s) const {
  const auto st = interp_stencil(*this, y, s);
  double out = 0.0;
  for (const auto& [m, wt] : st.time)
    for (int q = 0; q < st.ns; ++q) out += wt * st.space[static_cast<std::size_t>(q)].second * at(m, st.space[static_cast<std::size_t>(q)].first);
  return out;
}

Vec2 CorrectorSolution::gradient(const SpacePoint& y, double s) const {
  const auto st = interp_stencil(*this, y, s);
  Vec2 g{0.0, 0.0};
  for (const auto& [m, wt] : st.time)
    for (int q = 0; q < st.ns; ++q) {
      const auto [k, w] = st.space[static_cast<std::size_t>(q)];
      const int i = static_cast<int>(k % n), j = static_cast<int>(k / n);
      g[0] += wt * w * (at(m, node(i + 1, j)) - at(m, node(i - 1, j))) / (2 * h);
      if (dim == 2) g[1] += wt * w * (at(m, node(i, j + 1)) - at(m, node(i, j - 1))) / (2 * h);
    }
  return g;
}

double CorrectorSolution::max_abs() const {
  double m = 0.0;
  for (double v : phi) m = std::max(m, std::abs(v));
  return m;
}

double CorrectorSolution::mean_square() const {
  double s = 0.0;
  for (double v : phi) s += v * v;
  return phi.empty() ? 0.0 : s / static_cast<double>(phi.size());
}

void CorrectorSolution::write_csv(std::ostream& os) const {
  os << "level,s,i,j,phi\n";
  std::ostringstream line;
  line.precision(17);
  for (int m = 0; m < nt; ++m)
    for (std::size_t k = 0; k < num_nodes(); ++k) {
      line.str("");
      line << m << ',' << m * period / nt << ',' << k % static_cast<std::size_t>(n) << ','
           << k / static_cast<std::size_t>(n) << ',' << at(m, k) << '\n';
      os << line.str();
    }
}

CorrectorSolution solve_cell_problem(const CellProblem& p, const CellSolveOptions& options) {
  check_problem(p);
  CorrectorSolution out;
  out.dim = p.field.dim();
  out.period_L = p.period_L;
  out.n = p.cell_nx * p.period_L;
  out.h = 1.0 / p.cell_nx;
  out.period = *p.field.time_period();
  out.nt = std::max(1, static_cast<int>(std::lround(p.cell_nt * out.period)));
  out.steady = p.field.a_time_invariant();
  out.direction = p.direction;
  if (out.dim == 1) out.direction[1] = 0.0;

  const std::size_t N = out.num_nodes();
  const double h = out.h;
  TorusOperator op(p, out.n, h);
  std::vector<double> phi(N, 0.0), g, lo, di, up;
  out.phi.assign(N * static_cast<std::size_t>(out.nt), 0.0);

  if (out.steady) {
    op.build(0.0, true);
    if (out.dim == 1) {
      // Pinning node 0 breaks the cycle into a chain.
      op.bands(0.0, lo, di, up, g);
      const std::size_t m = N - 1;
      std::vector<double> l(lo.begin() + 1, lo.end()), d(di.begin() + 1, di.end()), u(up.begin() + 1, up.end()),
          r(g.begin() + 1, g.end()), x(m), scratch;
      linalg::solve_tridiagonal(l, d, u, r, x, scratch);
      std::copy(x.begin(), x.end(), phi.begin() + 1);
    } else {
      auto t = op.triplets(0.0, g);
      std::vector<linalg::Triplet> reduced;
      for (const auto& e : t)
        if (e.row != 0 && e.col != 0) reduced.push_back({e.row - 1, e.col - 1, e.value});
      const auto a = linalg::SparseMatrix::from_triplets(N - 1, std::move(reduced));
      std::vector<double> r(g.begin() + 1, g.end());
      const auto method = a.is_symmetric() ? linalg::IterativeMethod::cg : linalg::IterativeMethod::bicgstab;
      const auto res = linalg::solve_iterative(a, r, method, 1e-11, 200000);
      std::copy(res.x.begin(), res.x.end(), phi.begin() + 1);
    }
    std::vector<double> div(N);
    op.divergence(phi, div);
    for (double v : div) out.balance_residual = std::max(out.balance_residual, std::abs(v));
    for (int m = 0; m < out.nt; ++m) std::copy(phi.begin(), phi.end(), out.phi.begin() + static_cast<std::ptrdiff_t>(m * N));
  } else {
    const double stored_dt = out.period / out.nt;
    const int sub = std::max(1, static_cast<int>(std::ceil(stored_dt / (0.5 * h * h) - 1e-9)));
    const double dt = stored_dt / sub;
    std::vector<double> rhs(N), prev(N), div(N), scratch;
    double gap = std::numeric_limits<double>::infinity();
    int period = 0;
    while (gap > options.tol) {
      if (period >= options.max_periods) {
        std::ostringstream msg;
        msg << "corrector period map did not converge in " << options.max_periods << " periods (gap " << gap << ")";
        throw NonConvergenceError(msg.str(), gap, period);
      }
      const std::vector<double> start = phi;
      double balance = 0.0;
      for (int m = 0; m < out.nt; ++m) {
        std::copy(phi.begin(), phi.end(), out.phi.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(m) * N));
        for (int q = 0; q < sub; ++q) {
          const double s_next = (static_cast<double>(m) * sub + q + 1) * dt;
          op.build(s_next, false);
          prev = phi;
          if (out.dim == 1) {
            op.bands(1.0 / dt, lo, di, up, g);
            for (std::size_t k = 0; k < N; ++k) rhs[k] = phi[k] / dt + g[k];
            linalg::solve_cyclic_tridiagonal(lo, di, up, rhs, phi);
          } else {
            auto t = op.triplets(1.0 / dt, g);
            const auto a = linalg::SparseMatrix::from_triplets(N, std::move(t));
            for (std::size_t k = 0; k < N; ++k) rhs[k] = phi[k] / dt + g[k];
            const auto method = a.is_symmetric() ? linalg::IterativeMethod::cg : linalg::IterativeMethod::bicgstab;
            phi = linalg::solve_iterative(a, rhs, method, 1e-13, 20000, phi).x;
          }
          op.divergence(phi, div);
          for (std::size_t k = 0; k < N; ++k)
            balance = std::max(balance, std::abs((phi[k] - prev[k]) / dt - div[k]));
        }
      }
      ++period;
      std::vector<double> diff(N);
      for (std::size_t k = 0; k < N; ++k) diff[k] = phi[k] - start[k];
      gap = l2_torus(diff, h, out.dim);
      out.balance_residual = balance;
    }
    out.residual = gap;
    out.periods = period;
  }

  // Normalize to zero space-time mean.
  double mean = 0.0;
  for (double v : out.phi) mean += v;
  mean /= static_cast<double>(out.phi.size());
  for (double& v : out.phi) v -= mean;
  out.mean_removed = mean;
  double after = 0.0;
  for (double v : out.phi) after += v;
  out.mean = after / static_cast<double>(out.phi.size());

  // Face and nodal quantities at the stored levels.
  for (int ax = 0; ax < out.dim; ++ax) {
    out.grad[static_cast<std::size_t>(ax)].assign(out.phi.size(), 0.0);
    out.flux[static_cast<std::size_t>(ax)].assign(out.phi.size(), 0.0);
  }
  out.b_term.assign(out.phi.size(), 0.0);
  out.d.assign(out.phi.size(), 0.0);
  for (int m = 0; m < out.nt; ++m) {
    const double s = m * out.period / out.nt;
    if (!out.steady || m == 0) op.build(s, true);
    const std::size_t off = static_cast<std::size_t>(m) * N;
    std::span<const double> lv(out.phi.data() + off, N);
    for (int ax = 0; ax < out.dim; ++ax)
      for (std::size_t k = 0; k < N; ++k) {
        out.flux[static_cast<std::size_t>(ax)][off + k] = op.faces(ax)[k].eval(lv);
        out.grad[static_cast<std::size_t>(ax)][off + k] = (lv[op.right_of(ax, k)] - lv[k]) / h;
      }
    for (std::size_t k = 0; k < N; ++k) {
      const int i = static_cast<int>(k % static_cast<std::size_t>(out.n));
      const int j = static_cast<int>(k / static_cast<std::size_t>(out.n));
      const auto smp = p.field.sample({i * h, j * h}, s);
      double bt = smp.b[0] * (out.direction[0] + (lv[out.node(i + 1, j)] - lv[out.node(i - 1, j)]) / (2 * h));
      if (out.dim == 2)
        bt += smp.b[1] * (out.direction[1] + (lv[out.node(i, j + 1)] - lv[out.node(i, j - 1)]) / (2 * h));
      out.b_term[off + k] = bt;
      out.d[off + k] = smp.d;
    }
  }
  return out;
}

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Number of t in (0, r^2] congruent to s modulo P.
long time_count(double s, double P, double r2) {
  const long zmin = static_cast<long>(std::floor(-s / P)) + 1;
  const long zmax = static_cast<long>(std::floor((r2 - s) / P));
  return std::max(0L, zmax - zmin + 1);
}

/// Number of periodic images of y (period L per axis) with |y| < r.
long space_count(const CorrectorSolution& c, std::size_t k, double r) {
  const double L = c.period_L;
  const double y0 = static_cast<double>(k % static_cast<std::size_t>(c.n)) * c.h;
  auto range_count = [&](double y, double half) {
    if (half <= 0.0) return 0L;
    // |y + L z| < half
    const long lo = static_cast<long>(std::floor((-half - y) / L)) + 1;
    long hi = static_cast<long>(std::ceil((half - y) / L)) - 1;
    return std::max(0L, hi - lo + 1);
  };
  if (c.dim == 1) return range_count(y0, r);
  const double y1 = static_cast<double>(k / static_cast<std::size_t>(c.n)) * c.h;
  long total = 0;
  const long zlo = static_cast<long>(std::floor((-r - y0) / L)) + 1;
  const long zhi = static_cast<long>(std::ceil((r - y0) / L)) - 1;
  for (long z = zlo; z <= zhi; ++z) {
    const double x = y0 + L * static_cast<double>(z);
    const double rem = r * r - x * x;
    if (rem <= 0.0) continue;
    total += range_count(y1, std::sqrt(rem));
  }
  return total;
}

}  // namespace

CorrectorReport corrector_diagnostics(const CorrectorSolution& c, const std::vector<double>& radii) {
  CorrectorReport rep;
  rep.mean_abs = std::abs(c.mean);
  double g2 = 0.0;
  for (int ax = 0; ax < c.dim; ++ax) {
    const double m = mean_of(c.grad[static_cast<std::size_t>(ax)]);
    g2 += m * m;
  }
  rep.grad_mean_abs = std::sqrt(g2);

  const std::size_t N = c.num_nodes();
  std::vector<double> xs, ys;
  for (double r : radii) {
    std::vector<long> cs(N);
    for (std::size_t k = 0; k < N; ++k) cs[k] = space_count(c, k, r);
    double num = 0.0, den = 0.0;
    for (int m = 0; m < c.nt; ++m) {
      const long ct = time_count(m * c.period / c.nt, c.period, r * r);
      if (ct == 0) continue;
      for (std::size_t k = 0; k < N; ++k) {
        const double w = static_cast<double>(cs[k]) * static_cast<double>(ct);
        const double v = c.at(m, k);
        num += w * v * v;
        den += w;
      }
    }
    const double g = den > 0.0 ? num / den / (r * r) : 0.0;
    rep.radii.push_back(r);
    rep.sublinearity.push_back(g);
    if (g > 0.0) {
      xs.push_back(std::log(r));
      ys.push_back(std::log(g));
    }
  }
  if (xs.size() >= 2) {
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxy += (xs[i] - mx) * (ys[i] - my);
      sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    rep.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  }
  return rep;
}

HomogenizedCoefficients homogenized_coefficients(const CoefficientField& field,
                                                 const std::vector<CorrectorSolution>& correctors) {
  const int dim = field.dim();
  if (static_cast<int>(correctors.size()) != dim)
    throw ConstraintError("directions", "need one corrector per canonical direction");
  HomogenizedCoefficients hc;
  hc.dim = dim;
  for (int i = 0; i < dim; ++i) {
    const auto& c = correctors[static_cast<std::size_t>(i)];
    for (int k = 0; k < dim; ++k) {
      const double want = i == k ? 1.0 : 0.0;
      if (std::abs(c.direction[static_cast<std::size_t>(k)] - want) > 1e-14)
        throw ConstraintError("directions", "correctors must be ordered e_1..e_d");
    }
    for (int row = 0; row < dim; ++row) hc.a_bar(row, i) = mean_of(c.flux[static_cast<std::size_t>(row)]);
    hc.b_bar[static_cast<std::size_t>(i)] = mean_of(c.b_term);
  }
  hc.d_bar = mean_of(correctors.front().d);
  hc.samples = 1;

  const auto spec = hc.spectrum();
  const double tol = 0.02;
  if (spec[0] < 1.0 - tol || spec[static_cast<std::size_t>(dim - 1)] > field.lambda() + tol) {
    std::ostringstream msg;
    msg << "homogenized a has symmetric spectrum [" << spec[0] << ", " << spec[static_cast<std::size_t>(dim - 1)]
        << "] outside [1, " << field.lambda() << "]; the cell is probably under-resolved";
    throw ConstraintError("ellipticity", msg.str());
  }
  if (hc.d_bar > 1e-12) throw ConstraintError("d_nonpositive", "homogenized d is positive");
  return hc;
}

HomogenizedCoefficients periodic_coefficients(const CoefficientField& field, int cell_nx, int cell_nt,
                                              const CellSolveOptions& options,
                                              std::vector<CorrectorSolution>* correctors) {
  std::vector<CorrectorSolution> sols;
  const auto sp = field.spatial_period();
  const int L = sp ? std::max(1, static_cast<int>(std::lround(*sp))) : 1;
  for (int i = 0; i < field.dim(); ++i) {
    CellProblem p;
    p.field = field;
    p.direction = i == 0 ? Vec2{1.0, 0.0} : Vec2{0.0, 1.0};
    p.cell_nx = cell_nx;
    p.cell_nt = cell_nt;
    p.period_L = L;
    sols.push_back(solve_cell_problem(p, options));
  }
  auto hc = homogenized_coefficients(field, sols);
  if (correctors) *correctors = std::move(sols);
  return hc;
}

RveEstimate rve_estimate(const RveSpec& spec) {
  if (spec.L < 1) throw ConstraintError("L", "RVE size must be >= 1");
  if (spec.n_samples < 1) throw ConstraintError("n_samples", "need at least one sample");
  const auto n = static_cast<std::size_t>(spec.n_samples);
  RveEstimate est;
  est.samples.resize(n);
  std::vector<std::string> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (long k = 0; k < static_cast<long>(n); ++k) {
    try {
      CheckerboardParams cp = spec.params;
      cp.seed = derive_seed(spec.base_seed, static_cast<std::uint64_t>(k));
      cp.torus_cells = spec.L;
      est.samples[static_cast<std::size_t>(k)] =
          periodic_coefficients(make_checkerboard(cp), spec.cell_nx, spec.cell_nt, spec.options);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(k)] = e.what();
    }
  }
  for (std::size_t k = 0; k < n; ++k)
    if (!errors[k].empty()) throw NumericError("RVE sample " + std::to_string(k) + ": " + errors[k]);

  auto& m = est.mean;
  m.dim = spec.params.dim;
  m.samples = n;
  auto accumulate_stat = [&](auto get, double& mean, double& se) {
    double s = 0.0;
    for (const auto& x : est.samples) s += get(x);
    mean = s / static_cast<double>(n);
    double v = 0.0;
    for (const auto& x : est.samples) v += (get(x) - mean) * (get(x) - mean);
    se = n > 1 ? std::sqrt(v / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
  };
  for (int q = 0; q < 4; ++q)
    accumulate_stat([q](const HomogenizedCoefficients& x) { return x.a_bar.v[static_cast<std::size_t>(q)]; },
                    m.a_bar.v[static_cast<std::size_t>(q)], m.a_stderr.v[static_cast<std::size_t>(q)]);
  for (std::size_t q = 0; q < 2; ++q)
    accumulate_stat([q](const HomogenizedCoefficients& x) { return x.b_bar[q]; }, m.b_bar[q], m.b_stderr[q]);
  accumulate_stat([](const HomogenizedCoefficients& x) { return x.d_bar; }, m.d_bar, m.d_stderr);
  return est;
}

}  // namespace homog
