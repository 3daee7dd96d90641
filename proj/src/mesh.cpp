#include "homog/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "homog/error.hpp"

namespace homog {

SpaceTimeGrid SpaceTimeGrid::build(int spatial_dim, Interval box, int nx, Interval time, int nt,
                                   double c_par) {
  return build(spatial_dim, std::array<Interval, 2>{box, box}, nx, time, nt, c_par);
}

SpaceTimeGrid SpaceTimeGrid::build(int spatial_dim, std::array<Interval, 2> box, int nx,
                                   Interval time, int nt, double c_par) {
  if (spatial_dim != 1 && spatial_dim != 2)
    throw ConstraintError("spatial_dim", "spatial dimension must be 1 or 2");
  if (nx < 3) throw ConstraintError("nx", "need at least 3 nodes per axis, got " + std::to_string(nx));
  if (nt < 2) throw ConstraintError("nt", "need at least 2 time levels, got " + std::to_string(nt));
  for (int k = 0; k < spatial_dim; ++k) {
    if (!std::isfinite(box[k].lo) || !std::isfinite(box[k].hi))
      throw ConstraintError("box", "non-finite box bounds");
    if (!(box[k].hi > box[k].lo)) throw ConstraintError("box", "degenerate spatial box");
  }
  if (!std::isfinite(time.lo) || !std::isfinite(time.hi))
    throw ConstraintError("time_interval", "non-finite time bounds");
  if (!(time.hi > time.lo)) throw ConstraintError("time_interval", "degenerate time interval");
  if (!(c_par > 0.0)) throw ConstraintError("c_par", "parabolic ratio must be positive");

  SpaceTimeGrid g;
  g.dim_ = spatial_dim;
  g.box_ = box;
  if (spatial_dim == 1) g.box_[1] = Interval{0.0, 0.0};
  g.nx_ = nx;
  g.h_ = {box[0].width() / (nx - 1), spatial_dim == 2 ? box[1].width() / (nx - 1) : 0.0};
  g.time_ = time;
  g.nt_ = nt;
  g.dt_ = time.width() / (nt - 1);
  g.c_par_ = c_par;
  double hmin = g.h_[0];
  if (spatial_dim == 2) hmin = std::min(hmin, g.h_[1]);
  g.resolution_ok_ = g.dt_ <= c_par * hmin * hmin * (1.0 + 1e-12);
  g.num_nodes_ = spatial_dim == 2 ? static_cast<std::size_t>(nx) * nx : static_cast<std::size_t>(nx);
  return g;
}

SpacePoint SpaceTimeGrid::coord(std::size_t node) const {
  const auto [i, j] = index(node);
  SpacePoint x{box_[0].lo + i * h_[0], 0.0};
  if (dim_ == 2) x[1] = box_[1].lo + j * h_[1];
  return x;
}

std::size_t SpaceTimeGrid::nearest_node(const SpacePoint& x) const {
  auto snap = [&](int axis) {
    const long k = std::lround((x[axis] - box_[axis].lo) / h_[axis]);
    return static_cast<int>(std::clamp<long>(k, 0, nx_ - 1));
  };
  return dim_ == 2 ? node(snap(0), snap(1)) : node(snap(0));
}

int SpaceTimeGrid::nearest_level(double t) const {
  const long k = std::lround((t - time_.lo) / dt_);
  return static_cast<int>(std::clamp<long>(k, 0, nt_ - 1));
}

bool SpaceTimeGrid::is_boundary(std::size_t node) const {
  const auto [i, j] = index(node);
  if (i == 0 || i == nx_ - 1) return true;
  return dim_ == 2 && (j == 0 || j == nx_ - 1);
}

double SpaceTimeGrid::spatial_weight(std::size_t node) const {
  const auto [i, j] = index(node);
  double w = h_[0] * ((i == 0 || i == nx_ - 1) ? 0.5 : 1.0);
  if (dim_ == 2) w *= h_[1] * ((j == 0 || j == nx_ - 1) ? 0.5 : 1.0);
  return w;
}

double SpaceTimeGrid::time_weight(int level) const {
  return dt_ * ((level == 0 || level == nt_ - 1) ? 0.5 : 1.0);
}

SpaceTimeGrid SpaceTimeGrid::with_time_stride(int stride) const {
  if (stride < 1 || (nt_ - 1) % stride != 0)
    throw ConstraintError("time_stride", "stride must divide nt-1");
  SpaceTimeGrid g = *this;
  g.nt_ = (nt_ - 1) / stride + 1;
  g.dt_ = dt_ * stride;
  double hmin = h_[0];
  if (dim_ == 2) hmin = std::min(hmin, h_[1]);
  g.resolution_ok_ = g.dt_ <= c_par_ * hmin * hmin * (1.0 + 1e-12);
  return g;
}

bool SpaceTimeGrid::same_layout(const SpaceTimeGrid& o) const {
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * (1.0 + std::abs(a)); };
  if (dim_ != o.dim_ || nx_ != o.nx_ || nt_ != o.nt_) return false;
  for (int k = 0; k < dim_; ++k)
    if (!close(box_[k].lo, o.box_[k].lo) || !close(box_[k].hi, o.box_[k].hi)) return false;
  return close(time_.lo, o.time_.lo) && close(time_.hi, o.time_.hi);
}

DiscreteField::DiscreteField(const SpaceTimeGrid& grid, double fill)
    : grid_(grid), values_(grid.num_points(), fill) {}

bool DiscreteField::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

DiscreteField& DiscreteField::operator+=(const DiscreteField& other) {
  if (!grid_.same_layout(other.grid_)) throw ConstraintError("grid", "field grids differ");
  for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += other.values_[k];
  return *this;
}

DiscreteField& DiscreteField::operator-=(const DiscreteField& other) {
  if (!grid_.same_layout(other.grid_)) throw ConstraintError("grid", "field grids differ");
  for (std::size_t k = 0; k < values_.size(); ++k) values_[k] -= other.values_[k];
  return *this;
}

DiscreteField& DiscreteField::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

DiscreteField operator-(DiscreteField lhs, const DiscreteField& rhs) { return lhs -= rhs; }
DiscreteField operator+(DiscreteField lhs, const DiscreteField& rhs) { return lhs += rhs; }

RegionMask::RegionMask(const SpaceTimeGrid& grid, std::vector<std::size_t> nodes, int level_begin,
                       int level_end)
    : nodes_(std::move(nodes)),
      in_space_(grid.num_nodes(), 0),
      level_begin_(level_begin),
      level_end_(std::max(level_begin, level_end)) {
  std::sort(nodes_.begin(), nodes_.end());
  nodes_.erase(std::unique(nodes_.begin(), nodes_.end()), nodes_.end());
  for (auto k : nodes_) in_space_.at(k) = 1;
}

RegionMask RegionMask::full(const SpaceTimeGrid& grid) {
  std::vector<std::size_t> all(grid.num_nodes());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
  return RegionMask(grid, std::move(all), 0, grid.nt());
}

std::vector<std::pair<std::size_t, int>> RegionMask::points() const {
  std::vector<std::pair<std::size_t, int>> out;
  out.reserve(size());
  for (int n = level_begin_; n < level_end_; ++n)
    for (auto k : nodes_) out.emplace_back(k, n);
  return out;
}

RegionMask region_mask(const SpaceTimeGrid& grid, const CylinderRegion& region) {
  if (region.kind == CylinderRegion::Kind::full_domain) return RegionMask::full(grid);
  if (!(region.radius > 0.0)) throw ConstraintError("radius", "cylinder radius must be positive");

  std::vector<std::size_t> nodes;
  const double r2 = region.radius * region.radius;
  for (std::size_t k = 0; k < grid.num_nodes(); ++k) {
    const SpacePoint x = grid.coord(k);
    double dist2 = 0.0;
    for (int a = 0; a < grid.dim(); ++a) dist2 += (x[a] - region.center[a]) * (x[a] - region.center[a]);
    if (dist2 < r2) nodes.push_back(k);
  }

  // Levels with t - anchor in (0, r^2], with a relative slack for round-off.
  const double slack = 1e-9 * grid.dt();
  int begin = grid.nt();
  int end = 0;
  for (int n = 0; n < grid.nt(); ++n) {
    const double s = grid.t(n) - region.t_anchor;
    if (s > slack && s <= r2 + slack) {
      begin = std::min(begin, n);
      end = std::max(end, n + 1);
    }
  }
  if (begin >= end) return RegionMask(grid, {}, 0, 0);
  return RegionMask(grid, std::move(nodes), begin, end);
}

}  // namespace homog
