#include <cmath>

#include "doctest.h"
#include "homog/error.hpp"
#include "homog/mesh.hpp"

using namespace homog;

TEST_CASE("grid spacing arithmetic") {
  const auto g = SpaceTimeGrid::build(1, Interval{0.0, 1.0}, 101, Interval{0.0, 0.25}, 2501);
  CHECK(g.h() == doctest::Approx(0.01).epsilon(1e-14));
  CHECK(g.dt() == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK_FALSE(g.resolution_ok());  // dt > 0.5 h^2: flagged, not rejected
  CHECK(g.num_nodes() == 101);

  const auto g2 = SpaceTimeGrid::build(2, Interval{0.0, 1.0}, 33, Interval{0.0, 0.25}, 257);
  CHECK(g2.h(0) == doctest::Approx(1.0 / 32));
  CHECK(g2.h(1) == doctest::Approx(1.0 / 32));
  CHECK(g2.dt() == doctest::Approx(0.25 / 256));
  CHECK(g2.num_nodes() == 33 * 33);
}

TEST_CASE("grid construction errors") {
  CHECK_THROWS_AS(SpaceTimeGrid::build(1, Interval{0.0, 0.0}, 11, Interval{0.0, 1.0}, 5), ConstraintError);
  CHECK_THROWS_AS(SpaceTimeGrid::build(1, Interval{0.0, NAN}, 11, Interval{0.0, 1.0}, 5), ConstraintError);
  CHECK_THROWS_AS(SpaceTimeGrid::build(1, Interval{0.0, 1.0}, 2, Interval{0.0, 1.0}, 5), ConstraintError);
  CHECK_THROWS_AS(SpaceTimeGrid::build(1, Interval{0.0, 1.0}, 5, Interval{0.0, 1.0}, 1), ConstraintError);
  CHECK_THROWS_AS(SpaceTimeGrid::build(3, Interval{0.0, 1.0}, 5, Interval{0.0, 1.0}, 3), ConstraintError);
}

TEST_CASE("coarse time step raises the resolution flag without failing") {
  const auto g = SpaceTimeGrid::build(1, Interval{0.0, 1.0}, 101, Interval{0.0, 0.25}, 11);
  CHECK_FALSE(g.resolution_ok());
}

TEST_CASE("trapezoid weights integrate constants exactly") {
  const auto g = SpaceTimeGrid::build(2, Interval{0.0, 2.0}, 9, Interval{0.0, 0.5}, 5);
  double sx = 0.0;
  for (std::size_t k = 0; k < g.num_nodes(); ++k) sx += g.spatial_weight(k);
  double st = 0.0;
  for (int n = 0; n < g.nt(); ++n) st += g.time_weight(n);
  CHECK(sx == doctest::Approx(4.0));
  CHECK(st == doctest::Approx(0.5));
}

TEST_CASE("node coordinates round trip") {
  const auto g = SpaceTimeGrid::build(2, Interval{-0.5, 0.5}, 17, Interval{0.0, 0.25}, 9);
  for (std::size_t k = 0; k < g.num_nodes(); ++k) CHECK(g.nearest_node(g.coord(k)) == k);
  for (int n = 0; n < g.nt(); ++n) CHECK(g.nearest_level(g.t(n)) == n);
}

TEST_CASE("region mask matches brute-force enumeration") {
  const auto g = SpaceTimeGrid::build(1, Interval{0.0, 1.0}, 101, Interval{0.0, 0.25}, 2501);
  const CylinderRegion q{{0.5, 0.0}, 0.25, 0.0, CylinderRegion::Kind::interior};
  const auto mask = region_mask(g, q);
  std::size_t count = 0;
  for (int n = 0; n < g.nt(); ++n)
    for (std::size_t k = 0; k < g.num_nodes(); ++k) {
      // Integer arithmetic: |i*h - 0.5| < 0.25 and n*dt in (0, 0.0625].
      const long ix = static_cast<long>(k);
      const bool in_space = std::abs(ix - 50) < 25;
      const bool in_time = n >= 1 && n <= 625;
      const bool inside = in_space && in_time;
      CHECK(mask.contains(k, n) == inside);
      count += inside;
    }
  CHECK(mask.size() == count);
  CHECK(count == 49u * 625u);
}

TEST_CASE("region mask covering and degenerate cases") {
  const auto g = SpaceTimeGrid::build(2, Interval{0.0, 1.0}, 9, Interval{0.0, 0.25}, 5);
  const auto big = region_mask(g, {{0.5, 0.5}, 10.0, -1e-9, CylinderRegion::Kind::interior});
  CHECK(big.nodes().size() == g.num_nodes());
  CHECK(big.level_begin() == 0);
  CHECK(big.level_end() == g.nt());

  const auto tiny = region_mask(g, {{0.5, 0.5}, 0.01, 0.0, CylinderRegion::Kind::interior});
  CHECK(tiny.empty());

  const auto full = region_mask(g, CylinderRegion::full());
  CHECK(full.size() == g.num_points());
}

TEST_CASE("region mask is monotone in the radius") {
  const auto g = SpaceTimeGrid::build(2, Interval{0.0, 1.0}, 33, Interval{0.0, 0.25}, 65);
  const SpacePoint c{0.4, 0.55};
  RegionMask prev;
  for (double r : {0.05, 0.1, 0.2, 0.3, 0.45}) {
    const auto m = region_mask(g, {c, r, 0.01, CylinderRegion::Kind::interior});
    for (const auto& [k, n] : prev.points()) CHECK(m.contains(k, n));
    prev = m;
  }
}

TEST_CASE("discrete field arithmetic and strided grids") {
  const auto g = SpaceTimeGrid::build(1, Interval{0.0, 1.0}, 5, Interval{0.0, 1.0}, 9);
  auto f = DiscreteField::from_function(g, [](const SpacePoint& x, double t) { return x[0] + t; });
  const auto h = f - f;
  for (double v : h.values()) CHECK(v == 0.0);
  CHECK(f.at(8, 4) == doctest::Approx(2.0));
  const auto gs = g.with_time_stride(4);
  CHECK(gs.nt() == 3);
  CHECK(gs.dt() == doctest::Approx(0.5));
  CHECK_THROWS_AS(g.with_time_stride(3), ConstraintError);
}
