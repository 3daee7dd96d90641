#include <cmath>
#include <random>
#include <string>

#include "doctest.h"
#include "homog/error.hpp"
#include "homog/harness.hpp"

using namespace homog;

namespace {

StudyConfig small_study(FieldKind kind) {
  StudyConfig c;
  c.field.kind = kind;
  c.field.dim = 1;
  c.boundary.kind = Profile::Kind::sine_sheet;
  c.epsilons = {1.0 / 4, 1.0 / 8, 1.0 / 16};
  c.cell_nx = 16;
  c.cell_nt = 8;
  return c;
}

}  // namespace

TEST_CASE("fit_rate on exact power laws") {
  const std::vector<double> eps{0.5, 0.25, 0.125, 0.0625};
  std::vector<double> e1, e2;
  for (double e : eps) {
    e1.push_back(e);
    e2.push_back(3.0 * e * e);
  }
  const auto f1 = fit_rate(e1, eps);
  CHECK(f1.slope == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f1.r2 == doctest::Approx(1.0).epsilon(1e-12));
  const auto f2 = fit_rate(e2, eps);
  CHECK(f2.slope == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::exp(f2.intercept) == doctest::Approx(3.0).epsilon(1e-10));
}

TEST_CASE("fit_rate on noisy first-order errors") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> noise(-0.05, 0.05);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> eps, err;
    for (double e = 0.5; e > 1.0 / 300; e *= 0.5) {
      eps.push_back(e);
      err.push_back(2.0 * e * (1.0 + noise(rng)));
    }
    const auto f = fit_rate(err, eps);
    CHECK(f.slope >= 0.9);
    CHECK(f.slope <= 1.1);
    CHECK(f.r2 >= 0.99);
  }
}

TEST_CASE("fit_rate preconditions") {
  CHECK_THROWS_AS(fit_rate({1.0, 0.5}, {1.0, 0.5}), ConstraintError);
  CHECK_THROWS_AS(fit_rate({1.0, 0.0, 0.25}, {1.0, 0.5, 0.25}), ConstraintError);
  CHECK_THROWS_AS(fit_rate({1.0, -0.5, 0.25}, {1.0, 0.5, 0.25}), ConstraintError);
  CHECK_THROWS_AS(fit_rate({1.0, 0.5, 0.25}, {1.0, 0.5}), ConstraintError);
}

TEST_CASE("quartiles interpolate linearly and ignore order") {
  const auto q = quartiles({4.0, 1.0, 3.0, 2.0, 5.0});
  CHECK(q.median == 3.0);
  CHECK(q.q1 == 2.0);
  CHECK(q.q3 == 4.0);
  const auto q2 = quartiles({1.0, 2.0});
  CHECK(q2.median == 1.5);
  CHECK(q2.q1 == 1.25);
  CHECK(quartiles({}).median == 0.0);
}

TEST_CASE("shared fine grid resolves the smallest epsilon") {
  auto c = small_study(FieldKind::periodic);
  int stride = 0;
  const auto g = study_grid(c, &stride);
  CHECK(g.nx() == 129);
  CHECK(g.dt() <= 0.5 * g.h() * g.h() * (1 + 1e-12));
  CHECK((g.nt() - 1) % stride == 0);
  // eps_min^2 / (stride dt) stored levels per time period.
  CHECK(std::lround(c.epsilons.back() * c.epsilons.back() / (stride * g.dt())) == 8);
  c.epsilons = {};
  CHECK_THROWS_AS(study_grid(c), ConfigError);
  c.epsilons = {0.0};
  CHECK_THROWS_AS(study_grid(c), ConfigError);
}

TEST_CASE("profiles and their exponential shift") {
  Profile p;
  p.kind = Profile::Kind::affine;
  p.offset = 1.0;
  p.gradient = {2.0, 3.0};
  p.time_slope = -1.0;
  CHECK(p.function(2)({0.5, 0.25}, 0.5) == doctest::Approx(1.0 + 1.0 + 0.75 - 0.5));
  CHECK(p.function(1)({0.5, 0.25}, 0.5) == doctest::Approx(1.0 + 1.0 - 0.5));
  const auto g = SpaceTimeGrid::build(1, Interval{0, 1}, 5, Interval{0, 1}, 3);
  const auto shifted = p.shifted_source(1, 2.0);
  CHECK(shifted.value(g, 2, 2) == doctest::Approx(std::exp(-2.0) * (1.0 + 1.0 - 1.0)));
  p.kind = Profile::Kind::gaussian_bump;
  CHECK(p.function(1)({0.5, 0.0}, 0.0) == doctest::Approx(2.0));
  p.kind = Profile::Kind::sine_sheet;
  p.offset = 0.0;
  p.decay = 1.0;
  CHECK(p.function(1)({0.5, 0.0}, 1.0) == doctest::Approx(std::exp(-1.0)));
  p.kind = Profile::Kind::zero;
  CHECK(p.source(1).is_zero());
}

TEST_CASE("constant field: every error vanishes") {
  auto c = small_study(FieldKind::constant);
  c.field.a0 = Mat2::scalar(1.5);
  c.field.b0 = {0.3, 0.0};
  c.field.d0 = -0.5;
  const auto rep = run_convergence_study(c);
  REQUIRE(rep.rows.size() == 3);
  for (const auto& row : rep.rows) {
    CHECK(row.l2_error <= 1e-8);
    CHECK(row.dual_grad_error <= 1e-8);
    CHECK(row.error.total <= 1e-8);
    CHECK(row.transform_residual <= row.transform_bound);
    CHECK(row.runtime == 0.0);
  }
  CHECK_FALSE(rep.l2_rate.has_value());
  CHECK(rep.transform_ok);
}

TEST_CASE("periodic field: errors fall with epsilon") {
  const auto c = small_study(FieldKind::periodic);
  const auto rep = run_convergence_study(c);
  REQUIRE(rep.rows.size() == 3);
  for (std::size_t i = 1; i < rep.rows.size(); ++i) {
    CHECK(rep.rows[i].l2_error < rep.rows[i - 1].l2_error);
    CHECK(rep.rows[i].error.total < 0.7 * rep.rows[i - 1].error.total);
  }
  REQUIRE(rep.l2_rate.has_value());
  CHECK(rep.l2_rate->slope >= 0.8);
  CHECK(rep.transform_ok);
  CHECK(rep.coefficients.a_bar(0, 0) > 1.0);
  CHECK(rep.coefficients.a_bar(0, 0) < 2.0);

  // Same config, same numbers.
  const auto again = run_convergence_study(c);
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    CHECK(again.rows[i].l2_error == rep.rows[i].l2_error);
    CHECK(again.rows[i].error.total == rep.rows[i].error.total);
  }
}

TEST_CASE("stage failures name the stage") {
  auto c = small_study(FieldKind::periodic);
  c.cell_nx = 2;
  try {
    run_convergence_study(c);
    FAIL("expected a failure");
  } catch (const ConstraintError& e) {
    CHECK(std::string(e.what()).rfind("corrector:", 0) == 0);
  }
  c = small_study(FieldKind::periodic);
  c.epsilons = {0.3, 0.15, 0.075};
  try {
    run_convergence_study(c);
    FAIL("expected a failure");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("error functional at eps=") != std::string::npos);
  }
}

TEST_CASE("ensemble: single palette has no spread") {
  auto c = small_study(FieldKind::checkerboard);
  c.field.checkerboard.a_values = {Mat2::scalar(2.0)};
  c.field.torus_cells = 2;
  c.epsilons = {1.0 / 4, 1.0 / 8, 1.0 / 16};
  const auto rep = monte_carlo_ensemble(c, 3);
  CHECK(rep.failures.empty());
  REQUIRE(rep.rows.size() == 3);
  for (const auto& row : rep.rows) {
    CHECK(row.l2_error.iqr() == 0.0);
    CHECK(row.l2_error.median <= 1e-8);
  }
  CHECK_THROWS_AS(monte_carlo_ensemble(c, 1), ConfigError);
}

TEST_CASE("ensemble: checkerboard medians fall and aggregation is order-free") {
  auto c = small_study(FieldKind::checkerboard);
  c.field.checkerboard.a_values = {Mat2::scalar(1.0), Mat2::scalar(3.0)};
  c.field.torus_cells = 4;
  c.field.checkerboard.time_dependent = false;
  c.seed = 99;
  const auto rep = monte_carlo_ensemble(c, 8);
  CHECK(rep.failures.empty());
  REQUIRE(rep.rows.size() == 3);
  for (std::size_t i = 1; i < rep.rows.size(); ++i) {
    CHECK(rep.rows[i].l2_error.median < rep.rows[i - 1].l2_error.median);
    CHECK(rep.rows[i].e_total.median < rep.rows[i - 1].e_total.median);
  }
  CHECK(rep.rows[0].l2_error.iqr() > 0.0);

  auto reversed = rep.samples;
  std::reverse(reversed.begin(), reversed.end());
  const auto agg = aggregate(reversed);
  for (std::size_t i = 0; i < agg.size(); ++i) {
    CHECK(agg[i].l2_error.median == rep.rows[i].l2_error.median);
    CHECK(agg[i].e_total.q3 == rep.rows[i].e_total.q3);
  }
  for (std::size_t k = 0; k < rep.samples.size(); ++k)
    CHECK(rep.samples[k].seed == derive_seed(99, static_cast<std::uint64_t>(rep.sample_index[k])));
}

TEST_CASE("ensemble collects failures and keeps going") {
  auto c = small_study(FieldKind::checkerboard);
  c.cell_nx = 2;
  const auto rep = monte_carlo_ensemble(c, 2);
  CHECK(rep.samples.empty());
  REQUIRE(rep.failures.size() == 2);
  CHECK(rep.failures[0].kind == "constraint");
  CHECK(rep.rows.empty());
}
