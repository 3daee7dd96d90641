#include "homog/norms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "homog/error.hpp"

namespace homog {

// ---------------------------------------------------------------- weights

RegionWeights region_weights(const SpaceTimeGrid& grid, const RegionMask& mask) {
  RegionWeights w;
  const int nx = grid.nx();
  w.spatial.reserve(mask.nodes().size());
  for (auto node : mask.nodes()) {
    const auto idx = grid.index(node);
    double weight = 1.0;
    for (int a = 0; a < grid.dim(); ++a) {
      auto neighbour_in = [&](int step) {
        auto ij = idx;
        ij[a] += step;
        if (ij[a] < 0 || ij[a] >= nx) return false;
        return mask.contains_node(grid.node(ij[0], ij[1]));
      };
      const bool left = neighbour_in(-1), right = neighbour_in(1);
      const double f = (left || right) ? 0.5 * (left + right) : 1.0;
      weight *= f * grid.h(a);
    }
    w.spatial.push_back(weight);
  }
  const int nl = mask.num_levels();
  w.time.assign(static_cast<std::size_t>(std::max(nl, 0)), grid.dt());
  if (nl > 1) {
    w.time.front() *= 0.5;
    w.time.back() *= 0.5;
  }
  return w;
}

double lp_norm(const DiscreteField& f, const RegionMask& region, double p) {
  if (region.empty()) throw ConstraintError("region", "norm over an empty region");
  if (!(p >= 1.0)) throw ConstraintError("p", "p must lie in [1, inf]");
  const auto nodes = region.nodes();
  if (std::isinf(p)) {
    double m = 0.0;
    for (int n = region.level_begin(); n < region.level_end(); ++n) {
      const auto lv = f.level(n);
      for (auto k : nodes) m = std::max(m, std::abs(lv[k]));
    }
    return m;
  }
  const auto w = region_weights(f.grid(), region);
  double s = 0.0;
  for (int n = region.level_begin(); n < region.level_end(); ++n) {
    const auto lv = f.level(n);
    double ls = 0.0;
    if (p == 2.0) {
      for (std::size_t q = 0; q < nodes.size(); ++q) ls += lv[nodes[q]] * lv[nodes[q]] * w.spatial[q];
    } else {
      for (std::size_t q = 0; q < nodes.size(); ++q) ls += std::pow(std::abs(lv[nodes[q]]), p) * w.spatial[q];
    }
    s += ls * w.time[static_cast<std::size_t>(n - region.level_begin())];
  }
  return std::pow(s, 1.0 / p);
}

double lp_norm(const DiscreteField& f, double p) { return lp_norm(f, RegionMask::full(f.grid()), p); }

DiscreteField partial(const DiscreteField& f, int axis) {
  const auto& g = f.grid();
  if (axis < 0 || axis >= g.dim()) throw ConstraintError("axis", "derivative axis out of range");
  DiscreteField out(g);
  const int nx = g.nx();
  const double h = g.h(axis);
  for (int n = 0; n < g.nt(); ++n) {
    const auto in = f.level(n);
    auto o = out.level(n);
    for (std::size_t k = 0; k < g.num_nodes(); ++k) {
      auto ij = g.index(k);
      const int i = ij[axis];
      auto at = [&](int ii) {
        auto q = ij;
        q[axis] = ii;
        return in[g.node(q[0], q[1])];
      };
      if (i == 0) o[k] = (at(1) - at(0)) / h;
      else if (i == nx - 1) o[k] = (at(nx - 1) - at(nx - 2)) / h;
      else o[k] = (at(i + 1) - at(i - 1)) / (2 * h);
    }
  }
  return out;
}

// ---------------------------------------------------------------- lattice

namespace detail {

/// Hat-function sublattice of a region's node set, with lumped mass from the
/// fine quadrature and an edge-based stiffness.
struct SpatialLattice {
  struct Edge {
    std::size_t a, b;
    double w;
  };
  using Interp = std::array<std::pair<long, double>, 4>;

  int dim = 1;
  std::array<std::vector<int>, 2> pos;
  std::vector<long> unknown_of;
  std::vector<double> mass;
  std::vector<double> extra_diag;
  std::vector<Edge> edges;
  std::vector<Interp> interp;  // per fine region node
  std::vector<std::size_t> fine_node;  // per unknown

  std::size_t size() const { return mass.size(); }

  linalg::DenseMatrix stiffness_plus_mass() const {
    const std::size_t m = size();
    linalg::DenseMatrix s(m, m);
    for (std::size_t u = 0; u < m; ++u) s(u, u) = mass[u] + extra_diag[u];
    for (const auto& e : edges) {
      s(e.a, e.a) += e.w;
      s(e.b, e.b) += e.w;
      s(e.a, e.b) -= e.w;
      s(e.b, e.a) -= e.w;
    }
    return s;
  }

  linalg::SparseMatrix stiffness_plus_mass_sparse() const {
    std::vector<linalg::Triplet> t;
    for (std::size_t u = 0; u < size(); ++u) t.push_back({u, u, mass[u] + extra_diag[u]});
    for (const auto& e : edges) {
      t.push_back({e.a, e.a, e.w});
      t.push_back({e.b, e.b, e.w});
      t.push_back({e.a, e.b, -e.w});
      t.push_back({e.b, e.a, -e.w});
    }
    return linalg::SparseMatrix::from_triplets(size(), std::move(t));
  }

  /// Load of nodal values `level` against the hats, with spatial weights.
  void load(std::span<const double> level, std::span<const std::size_t> nodes,
            std::span<const double> weights, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t q = 0; q < nodes.size(); ++q) {
      const double v = level[nodes[q]] * weights[q];
      if (v == 0.0) continue;
      for (const auto& [u, w] : interp[q])
        if (u >= 0) out[static_cast<std::size_t>(u)] += w * v;
    }
  }
};

}  // namespace detail

namespace {

std::vector<int> axis_positions(int lo, int hi, int stride) {
  std::vector<int> p;
  for (int i = lo; i <= hi; i += stride) p.push_back(i);
  if (p.back() != hi) p.push_back(hi);
  return p;
}

/// Interval index and linear weights of fine index i on a coarse axis.
std::array<std::pair<int, double>, 2> axis_hat(const std::vector<int>& pos, int i) {
  if (pos.size() == 1) return {{{0, 1.0}, {-1, 0.0}}};
  auto it = std::upper_bound(pos.begin(), pos.end(), i);
  int k = static_cast<int>(it - pos.begin()) - 1;
  k = std::clamp(k, 0, static_cast<int>(pos.size()) - 2);
  const double t = static_cast<double>(i - pos[static_cast<std::size_t>(k)]) /
                   (pos[static_cast<std::size_t>(k) + 1] - pos[static_cast<std::size_t>(k)]);
  return {{{k, 1.0 - t}, {k + 1, t}}};
}

struct Bounds2 {
  std::array<int, 2> lo{0, 0}, hi{0, 0};
};

Bounds2 index_bounds(const SpaceTimeGrid& g, const RegionMask& mask) {
  Bounds2 b;
  b.lo = {std::numeric_limits<int>::max(), std::numeric_limits<int>::max()};
  b.hi = {-1, -1};
  for (auto node : mask.nodes()) {
    const auto ij = g.index(node);
    for (int a = 0; a < 2; ++a) {
      b.lo[a] = std::min(b.lo[a], ij[a]);
      b.hi[a] = std::max(b.hi[a], ij[a]);
    }
  }
  return b;
}

bool lattice_point_included(const SpaceTimeGrid& g, const RegionMask& mask, int i, int j, bool interior_only) {
  const std::size_t node = g.node(i, j);
  if (!mask.contains_node(node)) return false;
  if (!interior_only) return true;
  if (g.is_boundary(node)) return false;
  for (int a = 0; a < g.dim(); ++a)
    for (int s : {-1, 1}) {
      std::array<int, 2> q{i, j};
      q[a] += s;
      if (!mask.contains_node(g.node(q[0], q[1]))) return false;
    }
  return true;
}

std::size_t count_lattice(const SpaceTimeGrid& g, const RegionMask& mask, const Bounds2& b, int stride,
                          bool interior_only) {
  const auto p0 = axis_positions(b.lo[0], b.hi[0], stride);
  const auto p1 = g.dim() == 2 ? axis_positions(b.lo[1], b.hi[1], stride) : std::vector<int>{0};
  std::size_t c = 0;
  for (int j : p1)
    for (int i : p0) c += lattice_point_included(g, mask, i, j, interior_only);
  return c;
}

std::unique_ptr<detail::SpatialLattice> build_lattice(const SpaceTimeGrid& g, const RegionMask& mask,
                                                      std::span<const double> weights, int stride,
                                                      bool interior_only) {
  auto lat = std::make_unique<detail::SpatialLattice>();
  lat->dim = g.dim();
  const Bounds2 b = index_bounds(g, mask);
  lat->pos[0] = axis_positions(b.lo[0], b.hi[0], stride);
  lat->pos[1] = g.dim() == 2 ? axis_positions(b.lo[1], b.hi[1], stride) : std::vector<int>{0};
  const std::size_t n0 = lat->pos[0].size(), n1 = lat->pos[1].size();
  lat->unknown_of.assign(n0 * n1, -1);
  for (std::size_t iy = 0; iy < n1; ++iy)
    for (std::size_t ix = 0; ix < n0; ++ix)
      if (lattice_point_included(g, mask, lat->pos[0][ix], lat->pos[1][iy], interior_only)) {
        lat->unknown_of[ix + n0 * iy] = static_cast<long>(lat->fine_node.size());
        lat->fine_node.push_back(g.node(lat->pos[0][ix], lat->pos[1][iy]));
      }
  const std::size_t m = lat->fine_node.size();
  lat->mass.assign(m, 0.0);
  lat->extra_diag.assign(m, 0.0);

  const auto nodes = mask.nodes();
  lat->interp.resize(nodes.size());
  for (std::size_t q = 0; q < nodes.size(); ++q) {
    const auto ij = g.index(nodes[q]);
    const auto hx = axis_hat(lat->pos[0], ij[0]);
    const auto hy = g.dim() == 2 ? axis_hat(lat->pos[1], ij[1]) : std::array<std::pair<int, double>, 2>{{{0, 1.0}, {-1, 0.0}}};
    std::size_t slot = 0;
    detail::SpatialLattice::Interp in;
    in.fill({-1, 0.0});
    for (const auto& [kx, wx] : hx)
      for (const auto& [ky, wy] : hy) {
        if (kx < 0 || ky < 0 || wx * wy == 0.0) continue;
        const long u = lat->unknown_of[static_cast<std::size_t>(kx) + n0 * static_cast<std::size_t>(ky)];
        if (u < 0) continue;
        in[slot++] = {u, wx * wy};
        lat->mass[static_cast<std::size_t>(u)] += wx * wy * weights[q];
      }
    lat->interp[q] = in;
  }

  // Lumped length of lattice point k along an axis.
  auto lumped = [&](int axis, std::size_t k) {
    const auto& p = lat->pos[static_cast<std::size_t>(axis)];
    double s = 0.0;
    if (k > 0) s += 0.5 * (p[k] - p[k - 1]);
    if (k + 1 < p.size()) s += 0.5 * (p[k + 1] - p[k]);
    return s * g.h(axis);
  };
  for (int axis = 0; axis < g.dim(); ++axis) {
    const std::size_t na = axis == 0 ? n0 : n1;
    for (std::size_t iy = 0; iy < n1; ++iy)
      for (std::size_t ix = 0; ix < n0; ++ix) {
        const std::size_t k = axis == 0 ? ix : iy;
        if (k + 1 >= na) continue;
        const std::size_t jx = axis == 0 ? ix + 1 : ix;
        const std::size_t jy = axis == 0 ? iy : iy + 1;
        const long ua = lat->unknown_of[ix + n0 * iy];
        const long ub = lat->unknown_of[jx + n0 * jy];
        if (ua < 0 && ub < 0) continue;
        const auto& p = lat->pos[static_cast<std::size_t>(axis)];
        const double len = (p[k + 1] - p[k]) * g.h(axis);
        double perp = 1.0;
        if (g.dim() == 2) perp = axis == 0 ? lumped(1, iy) : lumped(0, ix);
        const double w = perp / len;
        if (ua >= 0 && ub >= 0) {
          lat->edges.push_back({static_cast<std::size_t>(ua), static_cast<std::size_t>(ub), w});
        } else if (interior_only) {
          lat->extra_diag[static_cast<std::size_t>(ua >= 0 ? ua : ub)] += w;
        }
      }
  }
  return lat;
}

int choose_space_stride(const SpaceTimeGrid& g, const RegionMask& mask, std::size_t cap, bool interior_only) {
  const Bounds2 b = index_bounds(g, mask);
  const int span0 = b.hi[0] - b.lo[0];
  const int span1 = g.dim() == 2 ? b.hi[1] - b.lo[1] : 0;
  const int span = std::max(std::max(span0, span1), 1);
  auto divides = [&](int s) { return span0 % s == 0 && span1 % s == 0; };
  int first_any = -1;
  for (int s = 1; s <= span; ++s) {
    if (count_lattice(g, mask, b, s, interior_only) > cap) continue;
    if (first_any < 0) first_any = s;
    if (divides(s)) return s;
    if (s > 2 * first_any) break;
  }
  if (first_any < 0) throw ConstraintError("dense_cap", "region cannot be coarsened below the dense-solve cap");
  return first_any;
}

int choose_time_stride(int span, std::size_t max_levels) {
  if (span == 0) return 1;
  if (max_levels < 2) throw ConstraintError("dense_cap", "too many spatial unknowns for the space-time Gram cap");
  int first_any = -1;
  for (int s = 1; s <= span; ++s) {
    const std::size_t levels = static_cast<std::size_t>((span + s - 1) / s) + 1;
    if (levels > max_levels) continue;
    if (first_any < 0) first_any = s;
    if (span % s == 0) return s;
    if (s > 2 * first_any) break;
  }
  return first_any;
}

linalg::DenseMatrix riesz_mass_product(const linalg::DenseMatrix& s, const std::vector<double>& mass) {
  const std::size_t m = mass.size();
  linalg::Cholesky chol(s);
  linalg::DenseMatrix p(m, m);
  std::vector<double> col(m);
  for (std::size_t j = 0; j < m; ++j) {
    std::fill(col.begin(), col.end(), 0.0);
    col[j] = mass[j];
    chol.solve_in_place(col);
    for (std::size_t i = 0; i < m; ++i) p(i, j) = mass[i] * col[i];
  }
  // Symmetrize round-off.
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) p(i, j) = p(j, i) = 0.5 * (p(i, j) + p(j, i));
  return p;
}

}  // namespace

// ---------------------------------------------------------------- workspace

NormWorkspace::NormWorkspace(const SpaceTimeGrid& grid, RegionMask region, CoarseningPolicy policy)
    : grid_(grid), mask_(std::move(region)) {
  if (mask_.empty()) throw ConstraintError("region", "dual norm over an empty region");
  const int ss = choose_space_stride(grid_, mask_, policy.max_spatial, false);
  const std::size_t m = count_lattice(grid_, mask_, index_bounds(grid_, mask_), ss, false);
  const int ts = choose_time_stride(mask_.num_levels() - 1, policy.max_total / std::max<std::size_t>(m, 1));
  build(ss, ts);
}

NormWorkspace::NormWorkspace(const SpaceTimeGrid& grid, RegionMask region, int space_stride, int time_stride)
    : grid_(grid), mask_(std::move(region)) {
  if (mask_.empty()) throw ConstraintError("region", "dual norm over an empty region");
  if (space_stride < 1 || time_stride < 1) throw ConstraintError("stride", "coarsening strides must be >= 1");
  build(space_stride, time_stride);
}

NormWorkspace::~NormWorkspace() = default;
NormWorkspace::NormWorkspace(NormWorkspace&& o) noexcept
    : grid_(std::move(o.grid_)),
      mask_(std::move(o.mask_)),
      weights_(std::move(o.weights_)),
      coarse_(o.coarse_),
      lattice_(std::move(o.lattice_)),
      time_pos_(std::move(o.time_pos_)),
      tau_(std::move(o.tau_)),
      spatial_a_(std::move(o.spatial_a_)),
      spatial_p_(std::move(o.spatial_p_)),
      chol_(std::move(o.chol_)) {}

void NormWorkspace::build(int space_stride, int time_stride) {
  weights_ = region_weights(grid_, mask_);
  lattice_ = build_lattice(grid_, mask_, weights_.spatial, space_stride, false);
  time_pos_ = axis_positions(0, mask_.num_levels() - 1, time_stride);
  tau_.assign(time_pos_.size(), 0.0);
  for (int l = 0; l < mask_.num_levels(); ++l)
    for (const auto& [k, w] : axis_hat(time_pos_, l))
      if (k >= 0) tau_[static_cast<std::size_t>(k)] += w * weights_.time[static_cast<std::size_t>(l)];
  coarse_.space_stride = space_stride;
  coarse_.time_stride = time_stride;
  coarse_.spatial_unknowns = lattice_->size();
  coarse_.time_levels = time_pos_.size();
  spatial_a_ = lattice_->stiffness_plus_mass();
  spatial_p_ = riesz_mass_product(spatial_a_, lattice_->mass);
}

void NormWorkspace::factor() const {
  std::lock_guard<std::mutex> lock(mutex_);
  if (chol_) return;
  const std::size_t m = lattice_->size();
  const std::size_t nk = time_pos_.size();
  std::vector<double> inv_gap(nk > 0 ? nk - 1 : 0);
  for (std::size_t k = 0; k + 1 < nk; ++k) inv_gap[k] = 1.0 / ((time_pos_[k + 1] - time_pos_[k]) * grid_.dt());
  std::vector<linalg::DenseMatrix> diag, off;
  for (std::size_t k = 0; k < nk; ++k) {
    linalg::DenseMatrix d(m, m);
    double c = 0.0;
    if (k > 0) c += inv_gap[k - 1];
    if (k + 1 < nk) c += inv_gap[k];
    for (std::size_t i = 0; i < m * m; ++i) d.data()[i] = tau_[k] * spatial_a_.data()[i] + c * spatial_p_.data()[i];
    diag.push_back(std::move(d));
  }
  for (std::size_t k = 0; k + 1 < nk; ++k) {
    linalg::DenseMatrix e(m, m);
    for (std::size_t i = 0; i < m * m; ++i) e.data()[i] = -inv_gap[k] * spatial_p_.data()[i];
    off.push_back(std::move(e));
  }
  chol_ = std::make_unique<linalg::BlockTridiagonalCholesky>(std::move(diag), std::move(off));
}

std::vector<double> NormWorkspace::load_vector(const DiscreteField& f) const {
  if (!f.grid().same_layout(grid_)) throw ConstraintError("layout", "field does not match the workspace grid");
  std::vector<double> out(lattice_->size() * time_pos_.size(), 0.0);
  for (int l = mask_.level_begin(); l < mask_.level_end(); ++l) accumulate_level(f.level(l), l, out);
  return out;
}

void NormWorkspace::accumulate_level(std::span<const double> values, int level, std::span<double> load) const {
  const std::size_t m = lattice_->size();
  if (load.size() != m * time_pos_.size() || values.size() != grid_.num_nodes())
    throw ConstraintError("layout", "load or level size does not match the workspace");
  if (level < mask_.level_begin() || level >= mask_.level_end()) return;
  const int l = level - mask_.level_begin();
  std::vector<double> slice(m);
  lattice_->load(values, mask_.nodes(), weights_.spatial, slice);
  const double wt = weights_.time[static_cast<std::size_t>(l)];
  for (const auto& [k, w] : axis_hat(time_pos_, l)) {
    if (k < 0 || w == 0.0) continue;
    double* dst = load.data() + static_cast<std::size_t>(k) * m;
    for (std::size_t u = 0; u < m; ++u) dst[u] += w * wt * slice[u];
  }
}

double NormWorkspace::dual_norm_of_load(std::span<const double> load) const {
  if (std::all_of(load.begin(), load.end(), [](double v) { return v == 0.0; })) return 0.0;
  factor();
  const auto x = chol_->solve(load);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * load[i];
  return std::sqrt(std::max(s, 0.0));
}

double NormWorkspace::dual_norm(const DiscreteField& f) const { return dual_norm_of_load(load_vector(f)); }

double NormWorkspace::dual_norm(std::span<const DiscreteField> components) const {
  double s = 0.0;
  for (const auto& c : components) {
    const double v = dual_norm(c);
    s += v * v;
  }
  return std::sqrt(s);
}

linalg::DenseMatrix NormWorkspace::gram_matrix() const {
  const std::size_t m = lattice_->size();
  const std::size_t nk = time_pos_.size();
  linalg::DenseMatrix g(m * nk, m * nk);
  for (std::size_t k = 0; k < nk; ++k) {
    double c = 0.0;
    if (k > 0) c += 1.0 / ((time_pos_[k] - time_pos_[k - 1]) * grid_.dt());
    if (k + 1 < nk) c += 1.0 / ((time_pos_[k + 1] - time_pos_[k]) * grid_.dt());
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        g(k * m + i, k * m + j) = tau_[k] * spatial_a_(i, j) + c * spatial_p_(i, j);
        if (k + 1 < nk) {
          const double e = -spatial_p_(i, j) / ((time_pos_[k + 1] - time_pos_[k]) * grid_.dt());
          g((k + 1) * m + i, k * m + j) = e;
          g(k * m + i, (k + 1) * m + j) = e;
        }
      }
  }
  return g;
}

double dual_norm(const DiscreteField& f, const RegionMask& region, CoarseningPolicy policy) {
  return NormWorkspace(f.grid(), region, policy).dual_norm(f);
}

// ---------------------------------------------------------------- slices

SliceDualWorkspace::SliceDualWorkspace(const SpaceTimeGrid& grid, RegionMask region, std::size_t max_spatial)
    : grid_(grid), mask_(std::move(region)) {
  if (mask_.empty()) throw ConstraintError("region", "dual norm over an empty region");
  weights_ = region_weights(grid_, mask_);
  stride_ = choose_space_stride(grid_, mask_, max_spatial, true);
  lattice_ = build_lattice(grid_, mask_, weights_.spatial, stride_, true);
  if (lattice_->size() > 0) chol_ = std::make_unique<linalg::Cholesky>(lattice_->stiffness_plus_mass());
}

SliceDualWorkspace::~SliceDualWorkspace() = default;
SliceDualWorkspace::SliceDualWorkspace(SliceDualWorkspace&&) noexcept = default;

double SliceDualWorkspace::level_norm(const DiscreteField& f, int level) const {
  if (!chol_) return 0.0;
  std::vector<double> load(lattice_->size());
  lattice_->load(f.level(level), mask_.nodes(), weights_.spatial, load);
  const auto x = chol_->solve(load);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * load[i];
  return std::sqrt(std::max(s, 0.0));
}

double SliceDualWorkspace::norm(const DiscreteField& f) const {
  double s = 0.0;
  for (int l = 0; l < mask_.num_levels(); ++l) {
    const double v = level_norm(f, mask_.level_begin() + l);
    s += weights_.time[static_cast<std::size_t>(l)] * v * v;
  }
  return std::sqrt(s);
}

double slice_dual_norm(const DiscreteField& f, const RegionMask& region) {
  return SliceDualWorkspace(f.grid(), region).norm(f);
}

// ---------------------------------------------------------------- H1 surrogates

namespace {

struct FineSpatial {
  std::unique_ptr<detail::SpatialLattice> lattice;
  linalg::SparseMatrix s;
};

/// sum over consecutive region levels of (1/dt) (du)^T M (K+M)^{-1} M (du).
double time_term_squared(const DiscreteField& f, const RegionMask& region, const RegionWeights& w) {
  if (region.num_levels() < 2) return 0.0;
  const auto& g = f.grid();
  auto lat = build_lattice(g, region, w.spatial, 1, false);
  const auto s = lat->stiffness_plus_mass_sparse();
  const std::size_t m = lat->size();
  std::vector<double> du(m), rhs(m);
  double total = 0.0;
  std::vector<double> lo, di, up, x(m), scratch;
  const bool banded = g.dim() == 1;
  if (banded) {
    lo.assign(m, 0.0);
    di.assign(m, 0.0);
    up.assign(m, 0.0);
    for (std::size_t u = 0; u < m; ++u) {
      di[u] = s.at(u, u);
      if (u > 0) lo[u] = s.at(u, u - 1);
      if (u + 1 < m) up[u] = s.at(u, u + 1);
    }
  }
  for (int n = region.level_begin(); n + 1 < region.level_end(); ++n) {
    const auto a = f.level(n), b = f.level(n + 1);
    for (std::size_t u = 0; u < m; ++u) {
      const std::size_t k = lat->fine_node[u];
      du[u] = b[k] - a[k];
      rhs[u] = lat->mass[u] * du[u];
    }
    if (std::all_of(du.begin(), du.end(), [](double v) { return v == 0.0; })) continue;
    if (banded) {
      linalg::solve_tridiagonal(lo, di, up, rhs, x, scratch);
    } else {
      x = linalg::solve_iterative(s, rhs, linalg::IterativeMethod::cg, 1e-12).x;
    }
    double q = 0.0;
    for (std::size_t u = 0; u < m; ++u) q += rhs[u] * x[u];
    total += q / g.dt();
  }
  return total;
}

double gradient_energy(const DiscreteField& f, const RegionMask& region, const RegionWeights& w) {
  auto lat = build_lattice(f.grid(), region, w.spatial, 1, false);
  double total = 0.0;
  for (int n = region.level_begin(); n < region.level_end(); ++n) {
    const auto lv = f.level(n);
    double s = 0.0;
    for (const auto& e : lat->edges) {
      const double d = lv[lat->fine_node[e.a]] - lv[lat->fine_node[e.b]];
      s += e.w * d * d;
    }
    total += s * w.time[static_cast<std::size_t>(n - region.level_begin())];
  }
  return total;
}

}  // namespace

double h1par_norm(const DiscreteField& f, const RegionMask& region) {
  if (region.empty()) throw ConstraintError("region", "norm over an empty region");
  const auto w = region_weights(f.grid(), region);
  const double l2 = lp_norm(f, region, 2.0);
  return std::sqrt(l2 * l2 + gradient_energy(f, region, w) + time_term_squared(f, region, w));
}

double w1q_par_norm(const DiscreteField& f, const RegionMask& region, double q) {
  if (region.empty()) throw ConstraintError("region", "norm over an empty region");
  const auto& g = f.grid();
  DiscreteField mag(g);
  for (int axis = 0; axis < g.dim(); ++axis) {
    const auto d = partial(f, axis);
    for (std::size_t i = 0; i < mag.values().size(); ++i) mag.values()[i] += d.values()[i] * d.values()[i];
  }
  for (double& v : mag.values()) v = std::sqrt(v);
  const auto w = region_weights(g, region);
  return lp_norm(f, region, q) + lp_norm(mag, region, q) + std::sqrt(time_term_squared(f, region, w));
}

// ---------------------------------------------------------------- weak convergence

const char* to_string(WeakVerdict v) {
  switch (v) {
    case WeakVerdict::weakly_convergent: return "WEAKLY_CONVERGENT";
    case WeakVerdict::not_convergent: return "NOT_CONVERGENT";
    case WeakVerdict::hypothesis_violation: return "HYPOTHESIS_VIOLATION";
  }
  return "UNKNOWN";
}

WeakConvergenceReport weak_convergence_check(std::span<const DiscreteField> sequence,
                                             const DiscreteField& limit, const NormWorkspace& ws) {
  if (sequence.size() < 2) throw ConstraintError("sequence", "weak convergence check needs >= 2 fields");
  WeakConvergenceReport rep;
  for (const auto& fm : sequence) {
    rep.l2_norms.push_back(lp_norm(fm, ws.region(), 2.0));
    rep.dual_norms.push_back(ws.dual_norm(fm - limit));
  }
  const double first_l2 = rep.l2_norms.front();
  const double max_l2 = *std::max_element(rep.l2_norms.begin(), rep.l2_norms.end());
  if (max_l2 > 2.0 * first_l2 && max_l2 > 0.0) {
    rep.verdict = WeakVerdict::hypothesis_violation;
    return rep;
  }
  const double scale = std::max(1.0, max_l2);
  if (std::all_of(rep.dual_norms.begin(), rep.dual_norms.end(), [&](double v) { return v <= 1e-14 * scale; })) {
    rep.decay_ratio = 0.0;
    rep.verdict = WeakVerdict::weakly_convergent;
    return rep;
  }
  const double d0 = rep.dual_norms.front(), dn = rep.dual_norms.back();
  if (d0 > 0.0 && dn > 0.0) {
    rep.decay_ratio = std::pow(dn / d0, 1.0 / static_cast<double>(sequence.size() - 1));
  } else {
    rep.decay_ratio = dn == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  rep.verdict = (rep.decay_ratio < 0.8 && dn < 0.1 * d0) ? WeakVerdict::weakly_convergent
                                                         : WeakVerdict::not_convergent;
  return rep;
}

}  // namespace homog
