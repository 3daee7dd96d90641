#include <cmath>
#include <random>

#include "doctest.h"
#include "homog/error.hpp"
#include "homog/fields.hpp"

using namespace homog;

namespace {

std::string constraint_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ConstraintError& e) {
    return e.constraint();
  }
  return "";
}

bool same_sample(const CoefficientSample& x, const CoefficientSample& y) {
  return x.a == y.a && x.b == y.b && x.d == y.d;
}

}  // namespace

TEST_CASE("constant field construction and rejection") {
  const auto f = make_constant(2, Mat2::identity(), {0.0, 0.0}, 0.0, {});
  const auto rep = validate(f, 200, 1);
  CHECK(rep.ok());
  CHECK(rep.rayleigh_min == doctest::Approx(1.0));
  CHECK(rep.rayleigh_max == doctest::Approx(1.0));

  CHECK(constraint_of([] { make_constant(2, Mat2::diag(0.5, 1.0), {0, 0}, 0.0, {}); }) == "ellipticity");
  CHECK(constraint_of([] { make_constant(2, Mat2::identity(), {1.0, 1.0}, 0.0, {4.0, 1.0}); }) == "b_bound");
  CHECK(constraint_of([] { make_constant(1, Mat2::identity(), {0, 0}, 0.1, {}); }) == "d_nonpositive");
  CHECK(constraint_of([] { make_constant(1, Mat2::identity(), {0, 0}, -2.0, {4.0, 1.0}); }) == "d_bound");
  Mat2 asym = Mat2::scalar(2.0);
  asym(0, 1) = 0.3;
  CHECK(constraint_of([&] { make_constant(2, asym, {0, 0}, 0.0, {}); }) == "symmetry");
}

TEST_CASE("validate flags an injected positive d") {
  const auto f = make_constant(1, Mat2::identity(), {0, 0}, 0.1, {}, false);
  const auto rep = validate(f, 50, 3);
  CHECK_FALSE(rep.ok());
  CHECK(std::find(rep.violations.begin(), rep.violations.end(), "d_nonpositive") != rep.violations.end());
}

TEST_CASE("periodic field: zero amplitude, bounds and periodicity") {
  PeriodicParams p;
  p.dim = 2;
  p.alpha = 0.0;
  const auto flat = make_periodic(p);
  CHECK(same_sample(flat.sample({0.3, 0.7}, 0.2), flat.sample({0.9, 0.1}, 0.55)));

  p.alpha = 0.5;
  p.a0 = Mat2::scalar(2.0);
  const auto f = make_periodic(p);
  // Dense-sampling oracle of the Rayleigh quotient range.
  double lo = 1e9, hi = -1e9;
  for (int i = 0; i < 64; ++i)
    for (int k = 0; k < 64; ++k)
      for (int a = 0; a < 16; ++a) {
        const auto s = f.sample({i / 64.0, 0.0}, k / 64.0);
        const double th = M_PI * a / 16;
        const double c = std::cos(th), sn = std::sin(th);
        const double r = s.a(0, 0) * c * c + 2 * s.a(0, 1) * c * sn + s.a(1, 1) * sn * sn;
        lo = std::min(lo, r);
        hi = std::max(hi, r);
      }
  CHECK(lo >= 1.0);
  CHECK(hi <= 4.0);
  CHECK(lo == doctest::Approx(1.5));
  CHECK(hi == doctest::Approx(2.5));

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int k = 0; k < 1000; ++k) {
    const SpacePoint y{u(rng), u(rng)};
    const double s = u(rng);
    const auto x0 = f.sample(y, s);
    const auto x1 = f.sample({y[0] + 1, y[1] + 1}, s + 1);
    for (int q = 0; q < 4; ++q) CHECK(x0.a.v[q] == doctest::Approx(x1.a.v[q]).epsilon(1e-12));
  }

  p.alpha = 2.0;
  CHECK(constraint_of([&] { make_periodic(p); }) == "ellipticity");
}

TEST_CASE("checkerboard: single palette, determinism and frequencies") {
  CheckerboardParams p;
  p.dim = 1;
  p.a_values = {Mat2::identity()};
  p.seed = 11;
  const auto one = make_checkerboard(p);
  CHECK(one.sample({0.3, 0}, 0.1).a(0, 0) == 1.0);
  CHECK(one.sample({-7.3, 0}, 40.1).a(0, 0) == 1.0);

  p.a_values = {Mat2::scalar(1.0), Mat2::scalar(4.0)};
  p.time_dependent = false;
  p.shift_override = std::array<double, 3>{0.0, 0.0, 0.0};
  const auto f = make_checkerboard(p);
  std::size_t ones = 0;
  const std::size_t n = 1000000;
  for (std::size_t c = 0; c < n; ++c) ones += f.sample({static_cast<double>(c) + 0.5, 0}, 0.0).a(0, 0) == 1.0;
  const double freq = static_cast<double>(ones) / n;
  CHECK(freq >= 0.499);
  CHECK(freq <= 0.501);

  p.shift_override.reset();
  p.time_dependent = true;
  const auto g1 = make_checkerboard(p);
  const auto g2 = make_checkerboard(p);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int k = 0; k < 1000; ++k) {
    const SpacePoint y{u(rng), 0};
    const double s = u(rng);
    CHECK(same_sample(g1.sample(y, s), g2.sample(y, s)));
  }
  CHECK_THROWS_AS(
      [] {
        CheckerboardParams q;
        q.a_values.clear();
        make_checkerboard(q);
      }(),
      ConstraintError);
}

TEST_CASE("checkerboard translation covariance under integer shifts") {
  CheckerboardParams p;
  p.dim = 2;
  p.a_values = {Mat2::scalar(1.0), Mat2::scalar(2.0), Mat2::scalar(3.0)};
  p.seed = 99;
  p.shift_override = std::array<double, 3>{0.25, 0.5, 0.125};
  const auto f = make_checkerboard(p);
  auto q = p;
  q.shift_override = std::array<double, 3>{0.25 + 2, 0.5 - 1, 0.125 + 3};
  const auto g = make_checkerboard(q);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-20, 20);
  for (int k = 0; k < 500; ++k) {
    const SpacePoint y{u(rng), u(rng)};
    const double s = u(rng);
    CHECK(same_sample(f.sample({y[0] + 2, y[1] - 1}, s + 3), g.sample(y, s)));
  }
}

TEST_CASE("rescaling") {
  PeriodicParams p;
  const auto f = make_periodic(p);
  const auto r1 = rescale(f, 1.0);
  CHECK(same_sample(r1.sample({0.37, 0}, 0.21), f.sample({0.37, 0}, 0.21)));

  const auto r = rescale(f, 1.0 / 8);
  for (double x : {0.01, 0.3, 0.77})
    for (double t : {0.0, 0.013, 0.2}) {
      const auto s0 = r.sample({x, 0}, t);
      const auto s1 = r.sample({x + 1.0 / 8, 0}, t + 1.0 / 64);
      CHECK(s0.a(0, 0) == doctest::Approx(s1.a(0, 0)).epsilon(1e-12));
    }

  const auto nested = rescale(rescale(f, 0.5), 0.25);
  const auto direct = rescale(f, 0.125);
  CHECK(same_sample(nested.sample({0.3, 0}, 0.01), direct.sample({0.3, 0}, 0.01)));
  CHECK_THROWS_AS(rescale(f, 0.0), ConstraintError);
  CHECK_THROWS_AS(rescale(f, -1.0), ConstraintError);
}

TEST_CASE("rescaled checkerboard cell boundaries") {
  CheckerboardParams p;
  p.dim = 1;
  p.a_values = {Mat2::scalar(1.0), Mat2::scalar(2.0), Mat2::scalar(3.0), Mat2::scalar(4.0)};
  p.seed = 3;
  p.shift_override = std::array<double, 3>{0.0, 0.0, 0.0};
  const auto r = rescale(make_checkerboard(p), 0.25);
  const double e = 1e-9;
  // Inside one cell (x in (0.25, 0.5), t in (1/16, 2/16)) the value is constant.
  const double v = r.sample({0.25 + e, 0}, 1.0 / 16 + e).a(0, 0);
  CHECK(r.sample({0.5 - e, 0}, 2.0 / 16 - e).a(0, 0) == v);
  // Across boundaries the value equals the base sample of the neighbouring cell.
  const auto base = make_checkerboard(p);
  CHECK(r.sample({0.5 + e, 0}, 1.0 / 16 + e).a(0, 0) == base.sample({2.5, 0}, 1.5).a(0, 0));
  CHECK(r.sample({0.25 + e, 0}, 2.0 / 16 + e).a(0, 0) == base.sample({1.5, 0}, 2.5).a(0, 0));
}

TEST_CASE("validate on a checkerboard stays inside the palette extremes") {
  CheckerboardParams p;
  p.dim = 2;
  p.a_values = {Mat2::scalar(1.0), Mat2::scalar(4.0)};
  p.seed = 17;
  const auto rep = validate(make_checkerboard(p), 2000, 2);
  CHECK(rep.ok());
  CHECK(rep.rayleigh_min >= 1.0 - 1e-12);
  CHECK(rep.rayleigh_max <= 4.0 + 1e-12);
}

TEST_CASE("seed derivation is order independent and distinct") {
  CHECK(derive_seed(1, 5) == derive_seed(1, 5));
  CHECK(derive_seed(1, 5) != derive_seed(1, 6));
  CHECK(derive_seed(1, 5) != derive_seed(2, 5));
}
