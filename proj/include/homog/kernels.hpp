#pragma once

// Hot inner loops shared by the solvers. Every kernel exists twice: a plain
// serial reference kept for testing and benchmarking, and an OpenMP version
// used by the library. Reductions in the OpenMP path sum fixed-size chunks in
// index order, so results are bitwise independent of the thread count.

#include <cstddef>
#include <span>

namespace homog::kernels {

inline constexpr std::size_t kReductionChunk = 4096;

struct CsrView {
  std::span<const std::size_t> row_ptr;
  std::span<const std::size_t> col;
  std::span<const double> val;
};

namespace serial {
double dot(std::span<const double> x, std::span<const double> y);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
/// y = x + beta * y
void xpby(std::span<const double> x, double beta, std::span<double> y);
void scale(double alpha, std::span<double> x);
void csr_matvec(const CsrView& a, std::span<const double> x, std::span<double> y);
void hadamard(std::span<const double> x, std::span<const double> y, std::span<double> out);
double max_abs(std::span<const double> x);
}  // namespace serial

namespace parallel {
double dot(std::span<const double> x, std::span<const double> y);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void xpby(std::span<const double> x, double beta, std::span<double> y);
void scale(double alpha, std::span<double> x);
void csr_matvec(const CsrView& a, std::span<const double> x, std::span<double> y);
void hadamard(std::span<const double> x, std::span<const double> y, std::span<double> out);
double max_abs(std::span<const double> x);
}  // namespace parallel

/// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();
void set_threads(int n);

}  // namespace homog::kernels
