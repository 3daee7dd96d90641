// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "homog/kernels.hpp"

namespace k = homog::kernels;

namespace {

std::vector<double> random_vector(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// 5-point Laplacian on an m x m grid.
struct Csr {
  std::vector<std::size_t> row_ptr{0}, col;
  std::vector<double> val;
  k::CsrView view() const { return {row_ptr, col, val}; }
};

Csr laplacian(std::size_t m) {
  Csr a;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t r = i * m + j;
      if (i > 0) a.col.push_back(r - m), a.val.push_back(-1);
      if (j > 0) a.col.push_back(r - 1), a.val.push_back(-1);
      a.col.push_back(r), a.val.push_back(4);
      if (j + 1 < m) a.col.push_back(r + 1), a.val.push_back(-1);
      if (i + 1 < m) a.col.push_back(r + m), a.val.push_back(-1);
      a.row_ptr.push_back(a.col.size());
    }
  return a;
}

template <double (*Dot)(std::span<const double>, std::span<const double>)>
void BM_dot(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_vector(n, 1), y = random_vector(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Dot(x, y));
  state.SetBytesProcessed(state.iterations() * 2 * n * sizeof(double));
}

template <void (*Axpy)(double, std::span<const double>, std::span<double>)>
void BM_axpy(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_vector(n, 1);
  auto y = random_vector(n, 2);
  for (auto _ : state) {
    Axpy(1e-9, x, y);
    benchmark::ClobberMemory();
  }
  state.SetBytesProcessed(state.iterations() * 3 * n * sizeof(double));
}

template <void (*Matvec)(const k::CsrView&, std::span<const double>, std::span<double>)>
void BM_matvec(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto a = laplacian(m);
  const auto x = random_vector(m * m, 1);
  std::vector<double> y(m * m);
  for (auto _ : state) {
    Matvec(a.view(), x, y);
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * a.val.size());
}

}  // namespace

BENCHMARK(BM_dot<k::serial::dot>)->Name("dot/serial")->Range(1 << 12, 1 << 22);
BENCHMARK(BM_dot<k::parallel::dot>)->Name("dot/parallel")->Range(1 << 12, 1 << 22);
BENCHMARK(BM_axpy<k::serial::axpy>)->Name("axpy/serial")->Range(1 << 12, 1 << 22);
BENCHMARK(BM_axpy<k::parallel::axpy>)->Name("axpy/parallel")->Range(1 << 12, 1 << 22);
BENCHMARK(BM_matvec<k::serial::csr_matvec>)->Name("csr_matvec/serial")->RangeMultiplier(4)->Range(64, 1024);
BENCHMARK(BM_matvec<k::parallel::csr_matvec>)->Name("csr_matvec/parallel")->RangeMultiplier(4)->Range(64, 1024);

BENCHMARK_MAIN();
