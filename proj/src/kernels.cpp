#include "homog/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace homog::kernels {

namespace serial {

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void xpby(std::span<const double> x, double beta, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + beta * y[i];
}

void scale(double alpha, std::span<double> x) {
  for (double& v : x) v *= alpha;
}

void csr_matvec(const CsrView& a, std::span<const double> x, std::span<double> y) {
  const std::size_t n = a.row_ptr.size() - 1;
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) s += a.val[k] * x[a.col[k]];
    y[r] = s;
  }
}

void hadamard(std::span<const double> x, std::span<const double> y, std::span<double> out) {
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
}

double max_abs(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace serial

namespace parallel {

namespace {
// Below this size the fork/join cost dominates; run inline.
constexpr std::size_t kParallelMin = 1 << 14;

std::size_t num_chunks(std::size_t n) { return (n + kReductionChunk - 1) / kReductionChunk; }
}  // namespace

double dot(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  const std::size_t chunks = num_chunks(n);
  if (chunks <= 1) return serial::dot(x, y);
  std::vector<double> partial(chunks, 0.0);
  const auto nc = static_cast<long>(chunks);
#pragma omp parallel for schedule(static) if (n >= kParallelMin)
  for (long c = 0; c < nc; ++c) {
    const std::size_t lo = static_cast<std::size_t>(c) * kReductionChunk;
    const std::size_t hi = std::min(n, lo + kReductionChunk);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += x[i] * y[i];
    partial[static_cast<std::size_t>(c)] = s;
  }
  double s = 0.0;
  for (double p : partial) s += p;
  return s;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  const auto n = static_cast<long>(x.size());
#pragma omp parallel for schedule(static) if (x.size() >= kParallelMin)
  for (long i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void xpby(std::span<const double> x, double beta, std::span<double> y) {
  const auto n = static_cast<long>(x.size());
#pragma omp parallel for schedule(static) if (x.size() >= kParallelMin)
  for (long i = 0; i < n; ++i) y[i] = x[i] + beta * y[i];
}

void scale(double alpha, std::span<double> x) {
  const auto n = static_cast<long>(x.size());
#pragma omp parallel for schedule(static) if (x.size() >= kParallelMin)
  for (long i = 0; i < n; ++i) x[i] *= alpha;
}

void csr_matvec(const CsrView& a, std::span<const double> x, std::span<double> y) {
  const auto n = static_cast<long>(a.row_ptr.size() - 1);
#pragma omp parallel for schedule(static) if (a.val.size() >= kParallelMin)
  for (long r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) s += a.val[k] * x[a.col[k]];
    y[r] = s;
  }
}

void hadamard(std::span<const double> x, std::span<const double> y, std::span<double> out) {
  const auto n = static_cast<long>(x.size());
#pragma omp parallel for schedule(static) if (x.size() >= kParallelMin)
  for (long i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

double max_abs(std::span<const double> x) {
  const std::size_t n = x.size();
  const std::size_t chunks = num_chunks(n);
  if (chunks <= 1) return serial::max_abs(x);
  std::vector<double> partial(chunks, 0.0);
  const auto nc = static_cast<long>(chunks);
#pragma omp parallel for schedule(static) if (n >= kParallelMin)
  for (long c = 0; c < nc; ++c) {
    const std::size_t lo = static_cast<std::size_t>(c) * kReductionChunk;
    const std::size_t hi = std::min(n, lo + kReductionChunk);
    double m = 0.0;
    for (std::size_t i = lo; i < hi; ++i) m = std::max(m, std::abs(x[i]));
    partial[static_cast<std::size_t>(c)] = m;
  }
  return *std::max_element(partial.begin(), partial.end());
}

}  // namespace parallel

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

}  // namespace homog::kernels
