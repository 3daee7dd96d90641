#include <cmath>

#include "doctest.h"
#include "homog/error.hpp"
#include "homog/parabolic.hpp"

using namespace homog;

namespace {

SpaceTimeGrid grid_1d(int nx, double T, int nt) {
  return SpaceTimeGrid::build(1, Interval{0.0, 1.0}, nx, Interval{0.0, T}, nt);
}

double l2_diff(const DiscreteField& u, const std::function<double(const SpacePoint&, double)>& exact) {
  const auto& g = u.grid();
  double s = 0.0;
  for (int n = 0; n < g.nt(); ++n)
    for (std::size_t k = 0; k < g.num_nodes(); ++k) {
      const double e = u.at(n, k) - exact(g.coord(k), g.t(n));
      s += e * e * g.spatial_weight(k) * g.time_weight(n);
    }
  return std::sqrt(s);
}

CauchyDirichletProblem problem_for(const CoefficientField& f, const SpaceTimeGrid& g, DataSource bd,
                                   DataSource src = {}, double shift = 0.0) {
  CauchyDirichletProblem p;
  p.coefficients = coefficients_of(f);
  p.grid = g;
  p.boundary = std::move(bd);
  p.source = std::move(src);
  p.lambda_shift = shift;
  return p;
}

// p* = sin(pi x) exp(-t) for constant (a, b, d) = (2, 0.5, -1).
double manufactured_exact(const SpacePoint& x, double t) { return std::sin(M_PI * x[0]) * std::exp(-t); }
double manufactured_source(const SpacePoint& x, double t) {
  const double s = std::sin(M_PI * x[0]), c = std::cos(M_PI * x[0]), e = std::exp(-t);
  return (-s + 2 * M_PI * M_PI * s - 0.5 * M_PI * c + s) * e;
}

}  // namespace

TEST_CASE("textbook stencil for the heat equation") {
  const auto g = grid_1d(11, 0.1, 11);
  const auto f = make_constant(1, Mat2::identity(), {0, 0}, 0.0, {});
  const auto p = problem_for(f, g, [](const SpacePoint& x, double) { return x[0]; });
  std::vector<double> prev(g.num_nodes(), 0.0);
  const auto sys = assemble_step(p, 1, prev);
  const double h = g.h(), dt = g.dt();
  CHECK(sys.matrix.size() == 9);
  CHECK(sys.matrix.at(3, 3) == doctest::Approx(1 / dt + 2 / (h * h)));
  CHECK(sys.matrix.at(3, 2) == doctest::Approx(-1 / (h * h)));
  CHECK(sys.matrix.at(3, 4) == doctest::Approx(-1 / (h * h)));
  // Boundary value 1 at x=1 enters the last rhs entry.
  CHECK(sys.rhs.back() == doctest::Approx(1 / (h * h)));
  CHECK(sys.rhs.front() == doctest::Approx(0.0));
}

TEST_CASE("advection adds centered off-diagonals") {
  const auto g = grid_1d(11, 0.1, 11);
  const double beta = 0.5;
  const auto f = make_constant(1, Mat2::identity(), {beta, 0}, 0.0, {});
  const auto p = problem_for(f, g, [](const SpacePoint&, double) { return 0.0; });
  const auto sys = assemble_step(p, 1, std::vector<double>(g.num_nodes(), 0.0));
  const double h = g.h();
  CHECK(sys.matrix.at(4, 3) == doctest::Approx(-1 / (h * h) + beta / (2 * h)));
  CHECK(sys.matrix.at(4, 5) == doctest::Approx(-1 / (h * h) - beta / (2 * h)));
}

TEST_CASE("checkerboard face coefficients equal the sampled cell value") {
  CheckerboardParams cp;
  cp.a_values = {Mat2::scalar(1.0), Mat2::scalar(3.0)};
  cp.seed = 4;
  const auto f = make_checkerboard(cp);
  const auto eps = rescale(f, 0.25);
  const auto g = grid_1d(17, 0.05, 6);
  CauchyDirichletProblem p;
  p.coefficients = coefficients_of(eps);
  p.grid = g;
  p.boundary = DataSource([](const SpacePoint&, double) { return 0.0; });
  const auto sys = assemble_step(p, 2, std::vector<double>(g.num_nodes(), 0.0));
  const double h = g.h();
  for (std::size_t k = 1; k + 1 < sys.unknowns.size(); ++k) {
    const double xf = (static_cast<double>(k) + 0.5) * h;  // face between unknowns k-1 and k
    const double a = eps.sample({xf, 0}, g.t(2)).a(0, 0);
    CHECK(sys.matrix.at(k, k - 1) == doctest::Approx(-a / (h * h)));
  }
}

TEST_CASE("affine data is discretely caloric for constant a") {
  const auto g = grid_1d(21, 0.25, 201);
  const auto f = make_constant(1, Mat2::identity(), {0, 0}, 0.0, {});
  const auto res = solve_problem(problem_for(f, g, [](const SpacePoint& x, double) { return x[0]; }));
  CHECK(l2_diff(res.solution, [](const SpacePoint& x, double) { return x[0]; }) <= 1e-10);
  CHECK(res.max_residual <= 1e-10);
}

TEST_CASE("affine invariance with lower-order terms") {
  const auto g = grid_1d(21, 0.25, 201);
  const double b = 0.4, d = -0.6, lam = 1.0;
  const auto f = make_constant(1, Mat2::scalar(2.0), {b, 0}, d, {4.0, lam});
  auto fx = [](const SpacePoint& x, double) { return 1.0 + 2.0 * x[0]; };
  auto src = [&](const SpacePoint& x, double t) { return -b * 2.0 - d * fx(x, t) + lam * fx(x, t); };
  const auto res = solve_problem(problem_for(f, g, fx, src, lam));
  CHECK(l2_diff(res.solution, fx) <= 1e-10);
}

TEST_CASE("manufactured solution converges") {
  const auto f = make_constant(1, Mat2::scalar(2.0), {0.5, 0}, -1.0, {4.0, 1.0});
  double prev = 0.0;
  for (int level = 0; level < 3; ++level) {
    const int cells = 16 << level;
    const int steps = 64 << (2 * level);
    const auto g = grid_1d(cells + 1, 0.25, steps + 1);
    const auto res = solve_problem(problem_for(f, g, manufactured_exact, manufactured_source));
    const double err = l2_diff(res.solution, manufactured_exact);
    CHECK(err < 1e-2);
    if (level > 0) CHECK(prev / err >= 3.0);
    prev = err;
  }
}

TEST_CASE("d = -Lambda equals lambda_shift = Lambda") {
  const auto g = grid_1d(33, 0.1, 101);
  const auto f1 = make_constant(1, Mat2::scalar(1.5), {0.2, 0}, -1.0, {4.0, 1.0});
  const auto f2 = make_constant(1, Mat2::scalar(1.5), {0.2, 0}, 0.0, {4.0, 1.0});
  auto bd = [](const SpacePoint& x, double t) { return std::cos(3 * x[0]) + t; };
  const auto r1 = solve_problem(problem_for(f1, g, bd));
  const auto r2 = solve_problem(problem_for(f2, g, bd, {}, 1.0));
  for (std::size_t i = 0; i < r1.solution.values().size(); ++i)
    CHECK(r1.solution.values()[i] == r2.solution.values()[i]);
}

TEST_CASE("discrete maximum principle") {
  PeriodicParams pp;
  const auto f = make_periodic(pp);
  const auto g = grid_1d(65, 0.1, 401);
  CauchyDirichletProblem p;
  p.coefficients = coefficients_of(rescale(f, 0.25));
  p.grid = g;
  p.boundary = DataSource([](const SpacePoint& x, double t) { return std::sin(7 * x[0]) + 0.3 * t; });
  const auto res = solve_problem(p);
  double lo = 1e9, hi = -1e9;
  for (int n = 0; n < g.nt(); ++n)
    for (std::size_t k = 0; k < g.num_nodes(); ++k)
      if (n == 0 || g.is_boundary(k)) {
        lo = std::min(lo, res.solution.at(n, k));
        hi = std::max(hi, res.solution.at(n, k));
      }
  for (double v : res.solution.values()) {
    CHECK(v >= lo - 1e-12);
    CHECK(v <= hi + 1e-12);
  }
}

TEST_CASE("exponential transform") {
  const auto g = grid_1d(9, 1.0, 11);
  const auto u = DiscreteField::from_function(g, [](const SpacePoint& x, double t) { return x[0] - t; });
  const auto same = exp_transform(u, 0.0);
  CHECK(std::equal(same.values().begin(), same.values().end(), u.values().begin()));
  const auto back = exp_transform(exp_transform(u, 1.0), -1.0);
  for (std::size_t i = 0; i < u.values().size(); ++i)
    CHECK(back.values()[i] == doctest::Approx(u.values()[i]).epsilon(1e-14));
}

TEST_CASE("transform equivalence is first order in dt") {
  PeriodicParams pp;
  pp.b_amp = 0.5;
  pp.d0 = -0.5;
  pp.d_amp = 0.25;
  const auto f = make_periodic(pp);
  const double lam = f.Lambda();
  auto bd = [](const SpacePoint& x, double) { return 1.0 + x[0]; };
  std::vector<double> ratios;
  for (int k = 0; k < 2; ++k) {
    const int nx = 33;
    const int nt = (k == 0 ? 256 : 512) + 1;
    const auto g = grid_1d(nx, 0.25, nt);
    CauchyDirichletProblem p;
    p.coefficients = coefficients_of(rescale(f, 0.25));
    p.grid = g;
    p.boundary = DataSource(bd);
    const auto pe = solve_problem(p).solution;
    p.boundary = DataSource([&](const SpacePoint& x, double t) { return std::exp(-lam * t) * bd(x, t); });
    p.lambda_shift = lam;
    const auto ph = solve_problem(p).solution;
    auto d = exp_transform(pe, lam) - ph;
    double s = 0.0, n2 = 0.0;
    for (int n = 0; n < g.nt(); ++n)
      for (std::size_t q = 0; q < g.num_nodes(); ++q) {
        const double w = g.spatial_weight(q) * g.time_weight(n);
        s += d.at(n, q) * d.at(n, q) * w;
        n2 += pe.at(n, q) * pe.at(n, q) * w;
      }
    const double c = std::sqrt(s) / (g.dt() * lam * std::sqrt(n2));
    CHECK(c <= 5.0);
    ratios.push_back(c);
  }
  CHECK(ratios[1] == doctest::Approx(ratios[0]).epsilon(0.2));
}

TEST_CASE("homogenized solve matches the constant-field solve") {
  const auto f = make_constant(1, Mat2::scalar(1.6), {0.3, 0}, -0.5, {4.0, 1.0});
  HomogenizedCoefficients hc;
  hc.dim = 1;
  hc.a_bar = Mat2::diag(1.6, 1.0);
  hc.b_bar = {0.3, 0.0};
  hc.d_bar = -0.5;
  const auto g = grid_1d(33, 0.1, 101);
  auto bd = [](const SpacePoint& x, double) { return x[0] * x[0]; };
  const auto r1 = solve_problem(problem_for(f, g, bd));
  const auto r2 = solve_homogenized(hc, f.bounds(), g, bd, 0.0);
  for (std::size_t i = 0; i < r1.solution.values().size(); ++i)
    CHECK(r1.solution.values()[i] == r2.solution.values()[i]);

  HomogenizedCoefficients flat;
  flat.a_bar = Mat2::diag(1.6, 1.0);
  const auto r3 = solve_homogenized(flat, {}, g, [](const SpacePoint& x, double) { return x[0]; }, 0.0);
  CHECK(l2_diff(r3.solution, [](const SpacePoint& x, double) { return x[0]; }) <= 1e-10);
}

TEST_CASE("2D homogenized manufactured solution") {
  HomogenizedCoefficients hc;
  hc.dim = 2;
  hc.a_bar = Mat2::scalar(2.0);
  auto exact = [](const SpacePoint& x, double t) {
    return std::sin(M_PI * x[0]) * std::sin(M_PI * x[1]) * std::exp(-t);
  };
  auto src = [&](const SpacePoint& x, double t) { return (-1.0 + 4.0 * M_PI * M_PI) * exact(x, t); };
  double prev = 0.0;
  for (int level = 0; level < 2; ++level) {
    const int cells = 8 << level;
    const auto g = SpaceTimeGrid::build(2, Interval{0, 1}, cells + 1, Interval{0, 0.1}, (16 << (2 * level)) + 1);
    const auto res = solve_homogenized(hc, {}, g, exact, 0.0, src);
    const double err = l2_diff(res.solution, exact);
    if (level > 0) CHECK(prev / err >= 3.0);
    prev = err;
    CHECK(res.max_residual <= 1e-9);
  }
}

TEST_CASE("2D cross terms and BiCGStab path") {
  const Mat2 a{{2.0, 0.5, 0.5, 1.5}};
  const auto f = make_constant(2, a, {0.5, -0.5}, -0.2, {4.0, 1.0});
  const auto g = SpaceTimeGrid::build(2, Interval{0, 1}, 17, Interval{0, 0.05}, 21);
  // Affine data is reproduced when the source cancels the lower-order terms.
  auto fx = [](const SpacePoint& x, double) { return 1.0 + x[0] - 2.0 * x[1]; };
  auto src = [&](const SpacePoint& x, double t) { return -(0.5 * 1.0 + -0.5 * -2.0) + 0.2 * fx(x, t); };
  auto p = problem_for(f, g, fx, src);
  const auto res = solve_problem(p);
  CHECK(l2_diff(res.solution, fx) <= 1e-8);
  CHECK(step_residual(p, res.solution) <= 1e-9);
}

TEST_CASE("storage stride keeps every k-th level") {
  const auto f = make_constant(1, Mat2::identity(), {0, 0}, 0.0, {});
  const auto g = grid_1d(17, 0.1, 41);
  auto bd = [](const SpacePoint& x, double) { return std::sin(M_PI * x[0]); };
  auto p = problem_for(f, g, bd);
  const auto full = solve_problem(p).solution;
  p.store_stride = 4;
  const auto strided = solve_problem(p).solution;
  CHECK(strided.grid().nt() == 11);
  for (int n = 0; n < strided.grid().nt(); ++n)
    for (std::size_t k = 0; k < g.num_nodes(); ++k) CHECK(strided.at(n, k) == full.at(4 * n, k));
  p.store_stride = 3;
  CHECK_THROWS_AS(solve_problem(p), ConstraintError);
}

TEST_CASE("precondition checks") {
  const auto f = make_constant(1, Mat2::identity(), {1.0, 0}, 0.0, {4.0, 1.0});
  const auto coarse = SpaceTimeGrid::build(1, Interval{0.0, 10.0}, 3, Interval{0.0, 0.1}, 5);
  auto p = problem_for(f, coarse, [](const SpacePoint&, double) { return 0.0; });
  try {
    solve_problem(p);
    FAIL("expected a Peclet rejection");
  } catch (const ConstraintError& e) {
    CHECK(e.constraint() == "peclet");
  }
  p.grid = grid_1d(11, 0.1, 5);
  p.lambda_shift = 0.5;
  CHECK_THROWS_AS(solve_problem(p), ConstraintError);
}
