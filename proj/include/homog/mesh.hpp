#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace homog {

using SpacePoint = std::array<double, 2>;

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
  double width() const { return hi - lo; }
};

/// Uniform node-centered grid over a parabolic cylinder U x I with U a box in
/// one or two dimensions. Boundary nodes are stored explicitly.
class SpaceTimeGrid {
 public:
  static constexpr double kDefaultParabolicRatio = 0.5;

  static SpaceTimeGrid build(int spatial_dim, Interval box, int nx, Interval time, int nt,
                             double c_par = kDefaultParabolicRatio);
  static SpaceTimeGrid build(int spatial_dim, std::array<Interval, 2> box, int nx, Interval time,
                             int nt, double c_par = kDefaultParabolicRatio);

  int dim() const { return dim_; }
  int nx() const { return nx_; }
  int nt() const { return nt_; }
  double h(int axis = 0) const { return h_[axis]; }
  double dt() const { return dt_; }
  const Interval& axis(int k) const { return box_[k]; }
  const Interval& time() const { return time_; }
  double c_par() const { return c_par_; }

  /// False when dt > c_par * h^2. Construction never fails on this; callers
  /// that care read the flag.
  bool resolution_ok() const { return resolution_ok_; }

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_points() const { return num_nodes_ * static_cast<std::size_t>(nt_); }

  double t(int level) const { return time_.lo + level * dt_; }
  SpacePoint coord(std::size_t node) const;
  std::array<int, 2> index(std::size_t node) const {
    return {static_cast<int>(node % nx_), dim_ == 2 ? static_cast<int>(node / nx_) : 0};
  }
  std::size_t node(int i, int j = 0) const {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(nx_) * static_cast<std::size_t>(j);
  }
  std::size_t nearest_node(const SpacePoint& x) const;
  int nearest_level(double t) const;
  bool is_boundary(std::size_t node) const;

  /// Trapezoidal quadrature weights; they integrate constants exactly over
  /// the full box and the full time interval.
  double spatial_weight(std::size_t node) const;
  double time_weight(int level) const;

  /// Same domain, time levels subsampled by `stride` (which must divide nt-1).
  SpaceTimeGrid with_time_stride(int stride) const;

  bool same_layout(const SpaceTimeGrid& other) const;

 private:
  int dim_ = 1;
  std::array<Interval, 2> box_{};
  int nx_ = 3;
  std::array<double, 2> h_{};
  Interval time_{};
  int nt_ = 2;
  double dt_ = 0.0;
  double c_par_ = kDefaultParabolicRatio;
  bool resolution_ok_ = true;
  std::size_t num_nodes_ = 0;
};

/// Nodal trajectory: one array of node values per time level, stored
/// contiguously level-major.
class DiscreteField {
 public:
  DiscreteField() = default;
  explicit DiscreteField(const SpaceTimeGrid& grid, double fill = 0.0);

  template <class Fn>
  static DiscreteField from_function(const SpaceTimeGrid& grid, Fn&& fn) {
    DiscreteField out(grid);
    for (int n = 0; n < grid.nt(); ++n) {
      const double t = grid.t(n);
      auto lv = out.level(n);
      for (std::size_t k = 0; k < grid.num_nodes(); ++k) lv[k] = fn(grid.coord(k), t);
    }
    return out;
  }

  const SpaceTimeGrid& grid() const { return grid_; }
  std::span<double> level(int n) {
    return {values_.data() + static_cast<std::size_t>(n) * grid_.num_nodes(), grid_.num_nodes()};
  }
  std::span<const double> level(int n) const {
    return {values_.data() + static_cast<std::size_t>(n) * grid_.num_nodes(), grid_.num_nodes()};
  }
  double& at(int n, std::size_t node) {
    return values_[static_cast<std::size_t>(n) * grid_.num_nodes() + node];
  }
  double at(int n, std::size_t node) const {
    return values_[static_cast<std::size_t>(n) * grid_.num_nodes() + node];
  }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool all_finite() const;

  DiscreteField& operator+=(const DiscreteField& other);
  DiscreteField& operator-=(const DiscreteField& other);
  DiscreteField& operator*=(double s);

 private:
  SpaceTimeGrid grid_{};
  std::vector<double> values_;
};

DiscreteField operator-(DiscreteField lhs, const DiscreteField& rhs);
DiscreteField operator+(DiscreteField lhs, const DiscreteField& rhs);

/// Parabolic cylinder Q_r = B_r(center) x (anchor, anchor + r^2], or the whole grid.
struct CylinderRegion {
  enum class Kind { interior, full_domain };
  SpacePoint center{0.0, 0.0};
  double radius = 1.0;
  double t_anchor = 0.0;
  Kind kind = Kind::interior;

  static CylinderRegion full() { return {{0.0, 0.0}, 1.0, 0.0, Kind::full_domain}; }
  CylinderRegion scaled(double factor) const {
    CylinderRegion out = *this;
    out.radius *= factor;
    return out;
  }
};

/// Product index set: a set of spatial nodes times a contiguous range of
/// time levels [level_begin, level_end).
class RegionMask {
 public:
  RegionMask() = default;
  RegionMask(const SpaceTimeGrid& grid, std::vector<std::size_t> nodes, int level_begin,
             int level_end);

  static RegionMask full(const SpaceTimeGrid& grid);

  std::span<const std::size_t> nodes() const { return nodes_; }
  int level_begin() const { return level_begin_; }
  int level_end() const { return level_end_; }
  int num_levels() const { return level_end_ - level_begin_; }
  bool contains_node(std::size_t node) const { return node < in_space_.size() && in_space_[node]; }
  bool contains(std::size_t node, int level) const {
    return contains_node(node) && level >= level_begin_ && level < level_end_;
  }
  std::size_t size() const { return nodes_.size() * static_cast<std::size_t>(num_levels()); }
  bool empty() const { return size() == 0; }

  /// Explicit (node, level) pairs, level-major.
  std::vector<std::pair<std::size_t, int>> points() const;

 private:
  std::vector<std::size_t> nodes_;
  std::vector<char> in_space_;
  int level_begin_ = 0;
  int level_end_ = 0;
};

/// Grid points with |x - center| < r and t - t_anchor in (0, r^2]. Full-domain
/// regions select every node and level. Empty intersections are not errors.
RegionMask region_mask(const SpaceTimeGrid& grid, const CylinderRegion& region);

/// Q_r intersected with the domain, keeping only levels inside the grid.
inline bool region_inside_domain(const SpaceTimeGrid& grid, const CylinderRegion& region) {
  if (region.kind == CylinderRegion::Kind::full_domain) return true;
  for (int k = 0; k < grid.dim(); ++k) {
    if (region.center[k] - region.radius < grid.axis(k).lo - 1e-12) return false;
    if (region.center[k] + region.radius > grid.axis(k).hi + 1e-12) return false;
  }
  return region.t_anchor >= grid.time().lo - 1e-12 &&
         region.t_anchor + region.radius * region.radius <= grid.time().hi + 1e-12;
}

}  // namespace homog
