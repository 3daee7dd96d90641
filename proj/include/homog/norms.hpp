#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "homog/linalg.hpp"
#include "homog/mesh.hpp"

namespace homog {

/// Quadrature weights restricted to a region: trapezoid in every direction,
/// halved where the region ends. On the full grid these are the grid's own
/// trapezoid weights.
struct RegionWeights {
  std::vector<double> spatial;  // aligned with mask.nodes()
  std::vector<double> time;     // levels level_begin .. level_end-1
};
RegionWeights region_weights(const SpaceTimeGrid& grid, const RegionMask& mask);

/// (sum |v|^p w)^(1/p) over the region; p = infinity gives the max.
double lp_norm(const DiscreteField& f, const RegionMask& region, double p);
double lp_norm(const DiscreteField& f, double p);

/// Nodal partial derivative: central differences inside, one-sided on the
/// grid boundary.
DiscreteField partial(const DiscreteField& f, int axis);

/// Surrogate parabolic H^1 norm (||f||^2 + ||grad f||^2 + ||dt f||^2_{L2(H^-1)})^(1/2)
/// with the time term measured through (-Lap_h + I)^{-1}.
double h1par_norm(const DiscreteField& f, const RegionMask& region);

/// ||f||_{L^q} + ||grad f||_{L^q} + ||dt f||_{L2(H^-1)}. The last term is the
/// 2-based surrogate of the L^q(W^{-1,q}) part.
double w1q_par_norm(const DiscreteField& f, const RegionMask& region, double q);

struct CoarseningPolicy {
  std::size_t max_spatial = 300;
  std::size_t max_total = 20000;
};

struct Coarsening {
  int space_stride = 1;
  int time_stride = 1;
  std::size_t spatial_unknowns = 0;
  std::size_t time_levels = 0;
  std::size_t unknowns() const { return spatial_unknowns * time_levels; }
};

namespace detail {
struct SpatialLattice;
}

/// Discrete dual norm of the parabolic H^1 surrogate on a region: the test
/// space is spanned by space-time hat functions on a (possibly coarsened)
/// sublattice, F is the load vector of f against those hats (fine-grid
/// quadrature), and ||f|| = sqrt(F^T G^{-1} F). G is block tridiagonal in
/// time and factored once, on first use.
class NormWorkspace {
 public:
  NormWorkspace(const SpaceTimeGrid& grid, RegionMask region, CoarseningPolicy policy = {});
  NormWorkspace(const SpaceTimeGrid& grid, RegionMask region, int space_stride, int time_stride);
  ~NormWorkspace();
  NormWorkspace(NormWorkspace&&) noexcept;

  const Coarsening& coarsening() const { return coarse_; }
  const RegionMask& region() const { return mask_; }
  std::size_t size() const { return coarse_.unknowns(); }

  std::vector<double> load_vector(const DiscreteField& f) const;
  /// Adds the load of one grid level (nodal values over the whole grid) to
  /// `load`, for integrands too large to store as a trajectory.
  void accumulate_level(std::span<const double> values, int level, std::span<double> load) const;
  double dual_norm(const DiscreteField& f) const;
  /// Euclidean combination of component dual norms.
  double dual_norm(std::span<const DiscreteField> components) const;
  /// sqrt(F^T G^{-1} F) for a precomputed load vector.
  double dual_norm_of_load(std::span<const double> load) const;

  /// Dense G, for oracles on small grids.
  linalg::DenseMatrix gram_matrix() const;

 private:
  void build(int space_stride, int time_stride);
  void factor() const;

  SpaceTimeGrid grid_;
  RegionMask mask_;
  RegionWeights weights_;
  Coarsening coarse_;
  std::unique_ptr<detail::SpatialLattice> lattice_;
  std::vector<int> time_pos_;  // coarse levels as fine level indices
  std::vector<double> tau_;    // lumped time weights per coarse level
  linalg::DenseMatrix spatial_a_;  // M + K
  linalg::DenseMatrix spatial_p_;  // M (K + M)^{-1} M
  mutable std::mutex mutex_;
  mutable std::unique_ptr<linalg::BlockTridiagonalCholesky> chol_;
};

double dual_norm(const DiscreteField& f, const RegionMask& region, CoarseningPolicy policy = {});

/// Spatial H^{-1} norm (test functions in H^1_0 of the region's node set) per
/// time level, combined in L^2 over the region's levels.
class SliceDualWorkspace {
 public:
  SliceDualWorkspace(const SpaceTimeGrid& grid, RegionMask region, std::size_t max_spatial = 1000);
  ~SliceDualWorkspace();
  SliceDualWorkspace(SliceDualWorkspace&&) noexcept;

  double level_norm(const DiscreteField& f, int level) const;
  double norm(const DiscreteField& f) const;
  int space_stride() const { return stride_; }

 private:
  SpaceTimeGrid grid_;
  RegionMask mask_;
  RegionWeights weights_;
  int stride_ = 1;
  std::unique_ptr<detail::SpatialLattice> lattice_;
  std::unique_ptr<linalg::Cholesky> chol_;
};

double slice_dual_norm(const DiscreteField& f, const RegionMask& region);

enum class WeakVerdict { weakly_convergent, not_convergent, hypothesis_violation };
const char* to_string(WeakVerdict v);

struct WeakConvergenceReport {
  std::vector<double> dual_norms;  // ||f_m - f||_dual
  std::vector<double> l2_norms;    // ||f_m||_{L2}
  double decay_ratio = 0.0;        // geometric mean of consecutive dual ratios
  WeakVerdict verdict = WeakVerdict::not_convergent;
};

/// Dual norms decaying geometrically (ratio < 0.8, final < 0.1 initial) under
/// a uniform L^2 bound. Growth of the L^2 norms beyond twice the first is
/// reported as a violated hypothesis.
WeakConvergenceReport weak_convergence_check(std::span<const DiscreteField> sequence,
                                             const DiscreteField& limit, const NormWorkspace& ws);

}  // namespace homog
