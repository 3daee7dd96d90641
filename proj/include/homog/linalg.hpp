#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "homog/kernels.hpp"

namespace homog::linalg {

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

/// Square matrix in compressed-row storage. Rows are sorted by column and
/// carry no duplicates; duplicates in the input triplets are summed.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  static SparseMatrix from_triplets(std::size_t n, std::vector<Triplet> triplets);
  /// Build from an explicit pattern; values start at zero and may be
  /// overwritten in place through `values()`.
  static SparseMatrix from_pattern(std::size_t n, std::vector<std::size_t> row_ptr,
                                   std::vector<std::size_t> col);

  std::size_t size() const { return n_; }
  std::size_t nnz() const { return val_.size(); }
  std::span<const std::size_t> row_ptr() const { return row_ptr_; }
  std::span<const std::size_t> col() const { return col_; }
  std::span<const double> values() const { return val_; }
  std::span<double> values() { return val_; }
  kernels::CsrView view() const { return {row_ptr_, col_, val_}; }

  /// Position of (r, c) in the value array, or npos.
  std::size_t find(std::size_t r, std::size_t c) const;
  double at(std::size_t r, std::size_t c) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  void multiply(std::span<const double> x, std::span<double> y) const;
  std::vector<double> multiply(std::span<const double> x) const;
  std::vector<double> diagonal() const;
  double norm_inf() const;
  bool is_symmetric(double rel_tol = 1e-13) const;
  bool all_finite() const;
  std::vector<double> to_dense() const;

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_;
  std::vector<double> val_;
};

/// General band matrix with kl sub- and ku super-diagonals.
class BandedMatrix {
 public:
  BandedMatrix(std::size_t n, std::size_t kl, std::size_t ku);
  static BandedMatrix from_sparse(const SparseMatrix& a);

  std::size_t size() const { return n_; }
  std::size_t lower() const { return kl_; }
  std::size_t upper() const { return ku_; }
  bool in_band(std::size_t r, std::size_t c) const {
    return c + kl_ >= r && c <= r + ku_;
  }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * width_ + (c + kl_ - r)]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * width_ + (c + kl_ - r)]; }
  double norm_inf() const;
  void multiply(std::span<const double> x, std::span<double> y) const;

 private:
  std::size_t n_, kl_, ku_, width_;
  std::vector<double> data_;
};

/// LU without pivoting (the discretizations here are diagonally dominant
/// M-matrices). Throws NumericError on a singular pivot or when the post-hoc
/// residual check ||Ax-b|| <= 1e-10 (||A|| ||x|| + ||b||) fails.
std::vector<double> solve_direct_banded(const BandedMatrix& a, std::span<const double> rhs);

/// Thomas algorithm for a tridiagonal system; lower[0] and upper[n-1] unused.
/// Residual-checked like solve_direct_banded.
void solve_tridiagonal(std::span<const double> lower, std::span<const double> diag,
                       std::span<const double> upper, std::span<const double> rhs,
                       std::span<double> x, std::vector<double>& scratch);

/// Periodic tridiagonal system: lower[0] couples row 0 to column n-1 and
/// upper[n-1] couples row n-1 to column 0. Sherman-Morrison on Thomas.
void solve_cyclic_tridiagonal(std::span<const double> lower, std::span<const double> diag,
                              std::span<const double> upper, std::span<const double> rhs,
                              std::span<double> x);

enum class IterativeMethod { cg, bicgstab };

struct IterativeResult {
  std::vector<double> x;
  int iterations = 0;
  double residual = 0.0;  // relative: ||b - Ax|| / ||b||
};

/// Jacobi-preconditioned CG (symmetric positive definite only) or BiCGStab.
/// Throws ConstraintError when CG is asked to solve a nonsymmetric system and
/// NonConvergenceError (with the last residual) on breakdown or max_iter.
IterativeResult solve_iterative(const SparseMatrix& a, std::span<const double> rhs,
                                IterativeMethod method, double tol = 1e-10, int max_iter = 10000,
                                std::span<const double> x0 = {});

/// Row-major dense matrix.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  std::vector<double> multiply(std::span<const double> x) const;
  DenseMatrix transpose() const;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b);

/// Dense Cholesky factor L (lower) with A = L L^T.
class Cholesky {
 public:
  static constexpr std::size_t kDefaultCap = 20000;

  explicit Cholesky(DenseMatrix a, std::size_t cap = kDefaultCap);
  std::size_t size() const { return l_.rows(); }
  const DenseMatrix& factor() const { return l_; }
  std::vector<double> solve(std::span<const double> rhs) const;
  void solve_in_place(std::span<double> x) const;
  /// In-place L^{-1} x and L^{-T} x.
  void forward(std::span<double> x) const;
  void backward(std::span<double> x) const;

 private:
  DenseMatrix l_;
};

/// Dense SPD solve with a Cholesky-quality residual check.
std::vector<double> solve_dense_spd(const DenseMatrix& a, std::span<const double> rhs,
                                    std::size_t cap = Cholesky::kDefaultCap);

/// Block-tridiagonal SPD solve: diagonal blocks D_k (m x m) and symmetric
/// off-diagonal blocks E_k coupling k and k+1 (E_k == E_k^T). Block Cholesky
/// in O(K m^3).
class BlockTridiagonalCholesky {
 public:
  BlockTridiagonalCholesky(std::vector<DenseMatrix> diag, std::vector<DenseMatrix> off);
  std::size_t block_size() const { return m_; }
  std::size_t num_blocks() const { return k_; }
  std::vector<double> solve(std::span<const double> rhs) const;

 private:
  std::size_t m_ = 0, k_ = 0;
  std::vector<Cholesky> l_;          // diagonal factors
  std::vector<DenseMatrix> c_;       // C_k = E_k L_k^{-T}, sub-diagonal of the factor
};

}  // namespace homog::linalg
