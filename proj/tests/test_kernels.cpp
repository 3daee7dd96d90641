#include <random>
#include <vector>

#include "doctest.h"
#include "homog/kernels.hpp"

using namespace homog::kernels;

namespace {

std::vector<double> random_vector(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("parallel kernels agree with the serial reference") {
  for (std::size_t n : {0ul, 7ul, 4096ul, 100003ul}) {
    const auto x = random_vector(n, 1);
    const auto y0 = random_vector(n, 2);
    CHECK(parallel::dot(x, y0) == doctest::Approx(serial::dot(x, y0)).epsilon(1e-12));
    CHECK(parallel::max_abs(x) == serial::max_abs(x));

    auto ys = y0, yp = y0;
    serial::axpy(0.3, x, ys);
    parallel::axpy(0.3, x, yp);
    CHECK(ys == yp);
    serial::xpby(x, -0.7, ys);
    parallel::xpby(x, -0.7, yp);
    CHECK(ys == yp);
    serial::scale(2.5, ys);
    parallel::scale(2.5, yp);
    CHECK(ys == yp);
    std::vector<double> hs(n), hp(n);
    serial::hadamard(x, y0, hs);
    parallel::hadamard(x, y0, hp);
    CHECK(hs == hp);
  }
}

TEST_CASE("parallel reductions do not depend on the thread count") {
  const auto x = random_vector(300001, 3);
  const auto y = random_vector(300001, 4);
  const int saved = max_threads();
  set_threads(1);
  const double d1 = parallel::dot(x, y);
  set_threads(4);
  const double d4 = parallel::dot(x, y);
  set_threads(saved);
  CHECK(d1 == d4);
}

TEST_CASE("CSR matvec matches a dense product") {
  const std::size_t n = 50;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<std::size_t> rp{0}, col;
  std::vector<double> val, dense(n * n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c)
      if ((r * 7 + c * 3) % 5 == 0) {
        col.push_back(c);
        val.push_back(u(rng));
        dense[r * n + c] = val.back();
      }
    rp.push_back(col.size());
  }
  const auto x = random_vector(n, 5);
  std::vector<double> ys(n), yp(n);
  const CsrView a{rp, col, val};
  serial::csr_matvec(a, x, ys);
  parallel::csr_matvec(a, x, yp);
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += dense[r * n + c] * x[c];
    CHECK(ys[r] == doctest::Approx(s).epsilon(1e-13));
    CHECK(yp[r] == ys[r]);
  }
}
