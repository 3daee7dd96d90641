#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "homog/error.hpp"
#include "homog/twoscale.hpp"

using namespace homog;

namespace {

CoefficientField oscillating_1d(double b_amp = 0.0, double d_amp = 0.0) {
  PeriodicParams p;
  p.dim = 1;
  p.a0 = Mat2::scalar(2.0);
  p.alpha = 0.5;
  p.b_amp = b_amp;
  p.d0 = d_amp > 0.0 ? -1.0 : 0.0;
  p.d_amp = d_amp;
  p.bounds.Lambda = 4.0;
  return make_periodic(p);
}

std::vector<CorrectorSolution> correctors_of(const CoefficientField& f, int nx, int nt) {
  std::vector<CorrectorSolution> cs;
  periodic_coefficients(f, nx, nt, {}, &cs);
  return cs;
}

double max_abs(const DiscreteField& f) {
  double m = 0.0;
  for (double v : f.values()) m = std::max(m, std::abs(v));
  return m;
}

double slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= x.size();
  my /= y.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
    sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
  }
  return sxy / sxx;
}

}  // namespace

TEST_CASE("ramp is C2, monotone and saturating") {
  CHECK(smooth_ramp(0.5) == 0.0);
  CHECK(smooth_ramp(1.0) == 0.0);
  CHECK(smooth_ramp(2.0) == 1.0);
  CHECK(smooth_ramp(1.5) == doctest::Approx(0.5));
  double prev = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double v = smooth_ramp(1.0 + i / 100.0);
    CHECK(v >= prev);
    prev = v;
  }
  // One-sided second differences vanish at both ends.
  const double e = 1e-3;
  CHECK(std::abs(smooth_ramp(1 + 2 * e) - 2 * smooth_ramp(1 + e)) < 1e-6);
  CHECK(std::abs(1 - 2 * smooth_ramp(2 - e) + smooth_ramp(2 - 2 * e)) < 1e-6);
}

TEST_CASE("cutoff support and scaling constants") {
  const auto g = SpaceTimeGrid::build(1, Interval{0.0, 1.0}, 257, Interval{0.0, 0.25}, 4097);
  std::vector<double> c1, c2;
  for (double r : {1.0 / 8, 1.0 / 16, 1.0 / 32}) {
    const auto c = build_cutoff(g, r);
    CHECK(c.eta.at(g.nt() - 1, 128) == 1.0);
    CHECK(c.eta.at(g.nt() - 1, 0) == 0.0);
    CHECK(c.eta.at(0, 128) == 0.0);
    const auto [lo, hi] = std::minmax_element(c.eta.values().begin(), c.eta.values().end());
    CHECK(*lo >= 0.0);
    CHECK(*hi <= 1.0);
    c1.push_back(c.c1);
    c2.push_back(c.c2);
  }
  for (std::size_t i = 1; i < c1.size(); ++i) {
    CHECK(std::abs(c1[i] / c1[0] - 1) <= 0.1);
    CHECK(std::abs(c2[i] / c2[0] - 1) <= 0.1);
  }
  CHECK(c1[0] == doctest::Approx(1.875).epsilon(0.05));  // max ramp slope 15/8
  CHECK_THROWS_AS(build_cutoff(g, 0.2), ConstraintError);
  CHECK_THROWS_AS(build_cutoff(g, 0.0), ConstraintError);
}

TEST_CASE("two-scale test function") {
  const auto g = SpaceTimeGrid::build(1, Interval{0.0, 1.0}, 129, Interval{0.0, 0.25}, 513);
  const auto p0 = DiscreteField::from_function(
      g, [](const SpacePoint& x, double t) { return std::sin(M_PI * x[0]) * std::exp(-t) + x[0]; });
  const auto cut = build_cutoff(g, 1.0 / 8);
  auto cs = correctors_of(oscillating_1d(), 64, 16);

  SUBCASE("zero correctors and zero cutoff leave p0 unchanged") {
    auto zero = cs;
    std::fill(zero[0].phi.begin(), zero[0].phi.end(), 0.0);
    const auto w0 = build_w_epsilon(p0, zero, 0.125, cut);
    CHECK(std::equal(w0.values().begin(), w0.values().end(), p0.values().begin()));
    auto nocut = cut;
    nocut.eta = DiscreteField(g);
    const auto w1 = build_w_epsilon(p0, cs, 0.125, nocut);
    CHECK(std::equal(w1.values().begin(), w1.values().end(), p0.values().begin()));
  }

  SUBCASE("w equals p0 off the cutoff support and obeys the product bound") {
    for (double eps : {1.0 / 4, 1.0 / 8, 1.0 / 16}) {
      const auto w = build_w_epsilon(p0, cs, eps, cut);
      std::size_t mismatches = 0;
      for (std::size_t i = 0; i < w.values().size(); ++i)
        mismatches += cut.eta.values()[i] == 0.0 && w.values()[i] != p0.values()[i];
      CHECK(mismatches == 0);
      const auto tiled = DiscreteField::from_function(
          g, [&](const SpacePoint& x, double t) { return cs[0].value({x[0] / eps, 0}, t / (eps * eps)); });
      const double bound = eps * max_abs(cut.eta) * max_abs(partial(p0, 0)) * lp_norm(tiled, 2.0);
      CHECK(lp_norm(w - p0, 2.0) <= bound * (1 + 1e-12));
      CHECK(lp_norm(w - p0, 2.0) > 0.0);
    }
  }
}

TEST_CASE("product-rule audit of grad w converges with the grid") {
  auto cs = correctors_of(oscillating_1d(), 64, 16);
  std::vector<double> errs;
  for (int nx : {65, 129, 257}) {
    const auto g = SpaceTimeGrid::build(1, Interval{0.0, 1.0}, nx, Interval{0.0, 0.25}, 65);
    const auto p0 = DiscreteField::from_function(
        g, [](const SpacePoint& x, double t) { return std::sin(M_PI * x[0]) * std::exp(-t); });
    const auto cut = build_cutoff(g, 1.0 / 8);
    const double eps = 0.25;
    const auto direct = partial(build_w_epsilon(p0, cs, eps, cut), 0);
    const auto assembled = w_epsilon_gradient(p0, cs, eps, cut)[0];
    errs.push_back(max_abs(direct - assembled) / max_abs(assembled));
  }
  CHECK(errs[1] < 0.5 * errs[0]);
  CHECK(errs[2] < 0.5 * errs[1]);
  CHECK(errs[2] < 0.02);
}

TEST_CASE("interior derivative sup obeys the pointwise scaling bound") {
  // Heat kernel started just before the grid: concentrated initial data.
  const auto g = SpaceTimeGrid::build(1, Interval{-1.0, 1.0}, 801, Interval{0.0, 0.25}, 2001);
  const double t0 = 1e-3;
  const auto p = DiscreteField::from_function(g, [&](const SpacePoint& x, double t) {
    const double s = t + t0;
    return std::exp(-x[0] * x[0] / (4 * s)) / std::sqrt(4 * M_PI * s);
  });
  const auto px = partial(p, 0);
  std::vector<double> rs = {1.0 / 16, 1.0 / 8, 1.0 / 4}, sx, st;
  DiscreteField pt(g);
  for (int n = 1; n + 1 < g.nt(); ++n)
    for (std::size_t k = 0; k < g.num_nodes(); ++k) pt.at(n, k) = (p.at(n + 1, k) - p.at(n - 1, k)) / (2 * g.dt());
  for (double r : rs) {
    sx.push_back(interior_sup(px, r));
    st.push_back(interior_sup(pt, r));
  }
  // Bounds: exponents -(1) - 3/2 and -(2) - 3/2 for d = 1.
  CHECK(slope(rs, sx) >= -2.5 - 0.1);
  CHECK(slope(rs, st) >= -3.5 - 0.1);
  CHECK(slope(rs, sx) < 0.0);
}

TEST_CASE("error functional of constant coefficients vanishes") {
  const auto f = make_constant(1, Mat2::scalar(2.0), {0.5, 0.0}, -0.3, {});
  const auto cs = correctors_of(f, 8, 8);
  for (double eps : {1.0 / 4, 1.0 / 8}) {
    const auto e = error_functional(f, cs, eps);
    for (double t : e.terms) CHECK(t <= 1e-8);
    CHECK(e.total <= 1e-8);
  }
}

TEST_CASE("error functional decays across eps halvings") {
  const auto f = oscillating_1d(0.5, 0.5);
  const auto cs = correctors_of(f, 64, 16);
  std::vector<ErrorFunctional> es;
  for (double eps : {1.0 / 4, 1.0 / 8, 1.0 / 16}) es.push_back(error_functional(f, cs, eps));
  for (std::size_t i = 1; i < es.size(); ++i) {
    CHECK(es[i].total <= 0.7 * es[i - 1].total);
    double sum = 0.0;
    for (int q = 0; q < 5; ++q) {
      CHECK(es[i].terms[q] >= 0.0);
      CHECK(es[i].terms[q] < es[i - 1].terms[q]);
      sum += es[i].terms[q];
    }
    CHECK(es[i].total == sum);
  }
  CHECK(es[0].coarsening.space_stride == 1);
  CHECK(es[2].coarsening.space_stride == 4);

  ErrorFunctionalOptions coarse;
  coarse.cells_per_period = 2;
  CHECK_THROWS_AS(error_functional(f, cs, 0.25, coarse), ConstraintError);
  CHECK_THROWS_AS(error_functional(f, cs, 0.3), ConstraintError);
}

TEST_CASE("d term of a checkerboard matches the dense Gram oracle") {
  CheckerboardParams cp;
  cp.dim = 1;
  cp.d_values = {-1.0, -2.0};
  cp.bounds.Lambda = 4.0;
  cp.torus_cells = 2;
  cp.seed = 5;
  const auto f = make_checkerboard(cp);
  const auto cs = correctors_of(f, 4, 2);
  ErrorFunctionalOptions opt;
  opt.cells_per_period = 4;
  opt.levels_per_period = 2;
  opt.coarse_cells = 8;
  const double eps = 0.5;
  const auto e = error_functional(f, cs, eps, opt);
  REQUIRE(e.coarsening.space_stride == 1);
  REQUIRE(e.coarsening.time_stride == 1);

  // Oracle: sample d on the reference grid directly and solve with Eigen.
  const auto g = SpaceTimeGrid::build(1, Interval{-0.5, 0.5}, e.fine_cells + 1, Interval{-0.5, 0.5}, e.fine_levels);
  double dbar = 0.0;
  int count = 0;
  for (int m = 0; m < cs[0].nt; ++m)
    for (int i = 0; i < cs[0].n; ++i, ++count) dbar += f.sample({i * cs[0].h, 0}, m * cs[0].period / cs[0].nt).d;
  dbar /= count;
  const auto dev = DiscreteField::from_function(
      g, [&](const SpacePoint& x, double t) { return f.sample({x[0] / eps, 0}, t / (eps * eps)).d - dbar; });
  NormWorkspace ws(g, RegionMask::full(g), 1, 1);
  const auto G = ws.gram_matrix();
  Eigen::MatrixXd Ge(G.rows(), G.cols());
  for (std::size_t i = 0; i < G.rows(); ++i)
    for (std::size_t j = 0; j < G.cols(); ++j) Ge(i, j) = G(i, j);
  Eigen::VectorXd F(G.rows());
  for (int n = 0; n < g.nt(); ++n)
    for (std::size_t k = 0; k < g.num_nodes(); ++k)
      F(static_cast<Eigen::Index>(n * g.num_nodes() + k)) = g.time_weight(n) * g.spatial_weight(k) * dev.at(n, k);
  const double oracle = std::sqrt(F.dot(Ge.ldlt().solve(F)));
  CHECK(oracle > 1e-3);
  CHECK(e.terms[4] == doctest::Approx(oracle).epsilon(1e-8));
  CHECK(e.terms[0] == 0.0);
}

TEST_CASE("rate bound implied constants") {
  CHECK(beta_of(0.1) == doctest::Approx(0.1 / 4.2));
  const std::vector<double> rs = {1.0 / 8, 1.0 / 16, 1.0 / 32};

  const auto zero = rate_bound_check(0.0, 0.0, 0.0, 1.0, 1, rs, beta_of(0.1));
  CHECK(zero.min_implied == 0.0);
  CHECK_FALSE(zero.e_underestimated);

  const auto forced = rate_bound_check(0.01, 0.02, 0.0, 2.0, 1, rs, 0.25);
  CHECK(forced.e_underestimated);
  for (const auto& row : forced.rows) {
    CHECK(std::isfinite(row.implied));
    CHECK(row.implied == doctest::Approx(0.03 / (2.0 * std::pow(row.r, 0.25))));
  }
  CHECK(forced.min_implied == doctest::Approx(0.03 / (2.0 * std::pow(1.0 / 8, 0.25))));

  const auto full = rate_bound_check(0.01, 0.0, 1e-6, 1.0, 1, rs, 0.25);
  CHECK(full.rows[2].shape == doctest::Approx(std::pow(1.0 / 32, 0.25) + std::pow(32.0, 4.5) * 1e-6));

  std::vector<RateBoundReport> sweep = {forced, forced};
  CHECK(rate_bound_sweep(sweep).bounded);
  sweep[1].min_implied *= 10;
  CHECK_FALSE(rate_bound_sweep(sweep).bounded);
  CHECK(rate_bound_sweep({zero, zero}).bounded);
}

TEST_CASE("rate bound left side from trajectories") {
  const auto g = SpaceTimeGrid::build(1, Interval{0.0, 1.0}, 33, Interval{0.0, 0.25}, 33);
  const auto p = DiscreteField::from_function(g, [](const SpacePoint& x, double t) { return x[0] * t; });
  NormWorkspace ws(g, RegionMask::full(g));
  const auto rep = rate_bound_check(p, p, 0.0, 1.0, {0.125}, 0.1, ws);
  CHECK(rep.lhs == 0.0);
  CHECK(rep.min_implied == 0.0);
}
