#include "homog/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "homog/error.hpp"

namespace homog::linalg {

namespace par = kernels::parallel;

// ---------------------------------------------------------------- sparse

SparseMatrix SparseMatrix::from_triplets(std::size_t n, std::vector<Triplet> triplets) {
  for (const auto& t : triplets)
    if (t.row >= n || t.col >= n) throw ConstraintError("index", "triplet index out of range");
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  SparseMatrix m;
  m.n_ = n;
  m.row_ptr_.assign(n + 1, 0);
  for (std::size_t k = 0; k < triplets.size();) {
    const auto& t = triplets[k];
    double v = 0.0;
    std::size_t j = k;
    while (j < triplets.size() && triplets[j].row == t.row && triplets[j].col == t.col) v += triplets[j++].value;
    m.col_.push_back(t.col);
    m.val_.push_back(v);
    m.row_ptr_[t.row + 1]++;
    k = j;
  }
  for (std::size_t r = 0; r < n; ++r) m.row_ptr_[r + 1] += m.row_ptr_[r];
  return m;
}

SparseMatrix SparseMatrix::from_pattern(std::size_t n, std::vector<std::size_t> row_ptr,
                                        std::vector<std::size_t> col) {
  if (row_ptr.size() != n + 1 || row_ptr.back() != col.size())
    throw ConstraintError("pattern", "inconsistent CSR pattern");
  SparseMatrix m;
  m.n_ = n;
  m.row_ptr_ = std::move(row_ptr);
  m.col_ = std::move(col);
  m.val_.assign(m.col_.size(), 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = m.row_ptr_[r] + 1; k < m.row_ptr_[r + 1]; ++k)
      if (m.col_[k] <= m.col_[k - 1]) throw ConstraintError("pattern", "CSR row not strictly sorted");
  return m;
}

std::size_t SparseMatrix::find(std::size_t r, std::size_t c) const {
  const auto b = col_.begin() + static_cast<long>(row_ptr_[r]);
  const auto e = col_.begin() + static_cast<long>(row_ptr_[r + 1]);
  const auto it = std::lower_bound(b, e, c);
  return (it != e && *it == c) ? static_cast<std::size_t>(it - col_.begin()) : npos;
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  const auto k = find(r, c);
  return k == npos ? 0.0 : val_[k];
}

void SparseMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  par::csr_matvec(view(), x, y);
}

std::vector<double> SparseMatrix::multiply(std::span<const double> x) const {
  std::vector<double> y(n_);
  multiply(x, y);
  return y;
}

std::vector<double> SparseMatrix::diagonal() const {
  std::vector<double> d(n_, 0.0);
  for (std::size_t r = 0; r < n_; ++r) d[r] = at(r, r);
  return d;
}

double SparseMatrix::norm_inf() const {
  double m = 0.0;
  for (std::size_t r = 0; r < n_; ++r) {
    double s = 0.0;
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) s += std::abs(val_[k]);
    m = std::max(m, s);
  }
  return m;
}

bool SparseMatrix::is_symmetric(double rel_tol) const {
  const double scale = std::max(norm_inf(), 1e-300);
  for (std::size_t r = 0; r < n_; ++r)
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
      if (std::abs(val_[k] - at(col_[k], r)) > rel_tol * scale) return false;
  return true;
}

bool SparseMatrix::all_finite() const {
  return std::all_of(val_.begin(), val_.end(), [](double v) { return std::isfinite(v); });
}

std::vector<double> SparseMatrix::to_dense() const {
  std::vector<double> d(n_ * n_, 0.0);
  for (std::size_t r = 0; r < n_; ++r)
    for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) d[r * n_ + col_[k]] = val_[k];
  return d;
}

// ---------------------------------------------------------------- banded

BandedMatrix::BandedMatrix(std::size_t n, std::size_t kl, std::size_t ku)
    : n_(n), kl_(kl), ku_(ku), width_(kl + ku + 1), data_(n * (kl + ku + 1), 0.0) {}

BandedMatrix BandedMatrix::from_sparse(const SparseMatrix& a) {
  std::size_t kl = 0, ku = 0;
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t k = a.row_ptr()[r]; k < a.row_ptr()[r + 1]; ++k) {
      const std::size_t c = a.col()[k];
      if (c < r) kl = std::max(kl, r - c);
      else ku = std::max(ku, c - r);
    }
  BandedMatrix b(a.size(), kl, ku);
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t k = a.row_ptr()[r]; k < a.row_ptr()[r + 1]; ++k) b(r, a.col()[k]) = a.values()[k];
  return b;
}

double BandedMatrix::norm_inf() const {
  double m = 0.0;
  for (std::size_t r = 0; r < n_; ++r) {
    double s = 0.0;
    for (std::size_t w = 0; w < width_; ++w) s += std::abs(data_[r * width_ + w]);
    m = std::max(m, s);
  }
  return m;
}

void BandedMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  for (std::size_t r = 0; r < n_; ++r) {
    const std::size_t c0 = r >= kl_ ? r - kl_ : 0;
    const std::size_t c1 = std::min(n_ - 1, r + ku_);
    double s = 0.0;
    for (std::size_t c = c0; c <= c1; ++c) s += (*this)(r, c) * x[c];
    y[r] = s;
  }
}

namespace {

void check_residual(double res_inf, double a_norm, double x_norm, double b_norm, const char* what) {
  const double bound = 1e-10 * (a_norm * x_norm + b_norm);
  if (!(res_inf <= bound) && !(res_inf <= 1e-300)) {
    std::ostringstream os;
    os << what << ": residual " << res_inf << " exceeds bound " << bound;
    throw NumericError(os.str());
  }
}

double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

std::vector<double> solve_direct_banded(const BandedMatrix& a, std::span<const double> rhs) {
  const std::size_t n = a.size();
  if (rhs.size() != n) throw ConstraintError("rhs", "right-hand side size mismatch");
  BandedMatrix lu = a;
  std::vector<double> x(rhs.begin(), rhs.end());
  const double scale = std::max(a.norm_inf(), 1e-300);
  const std::size_t kl = a.lower(), ku = a.upper();
  for (std::size_t k = 0; k < n; ++k) {
    const double piv = lu(k, k);
    if (!(std::abs(piv) > 1e-14 * scale)) {
      std::ostringstream os;
      os << "singular pivot at row " << k;
      throw NumericError(os.str());
    }
    const std::size_t rmax = std::min(n - 1, k + kl);
    const std::size_t cmax = std::min(n - 1, k + ku);
    for (std::size_t r = k + 1; r <= rmax; ++r) {
      const double f = lu(r, k) / piv;
      if (f == 0.0) continue;
      lu(r, k) = f;
      for (std::size_t c = k + 1; c <= cmax; ++c) lu(r, c) -= f * lu(k, c);
      x[r] -= f * x[k];
    }
  }
  for (std::size_t kk = n; kk-- > 0;) {
    const std::size_t cmax = std::min(n - 1, kk + ku);
    double s = x[kk];
    for (std::size_t c = kk + 1; c <= cmax; ++c) s -= lu(kk, c) * x[c];
    x[kk] = s / lu(kk, kk);
  }
  std::vector<double> ax(n);
  a.multiply(x, ax);
  for (std::size_t i = 0; i < n; ++i) ax[i] -= rhs[i];
  check_residual(inf_norm(ax), a.norm_inf(), inf_norm(x), inf_norm(rhs), "banded solve");
  return x;
}

void solve_tridiagonal(std::span<const double> lower, std::span<const double> diag,
                       std::span<const double> upper, std::span<const double> rhs,
                       std::span<double> x, std::vector<double>& scratch) {
  const std::size_t n = diag.size();
  scratch.resize(n);
  double a_norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = std::abs(diag[i]);
    if (i > 0) s += std::abs(lower[i]);
    if (i + 1 < n) s += std::abs(upper[i]);
    a_norm = std::max(a_norm, s);
  }
  double denom = diag[0];
  if (!(std::abs(denom) > 1e-14 * a_norm)) throw NumericError("singular pivot at row 0");
  scratch[0] = n > 1 ? upper[0] / denom : 0.0;
  x[0] = rhs[0] / denom;
  for (std::size_t i = 1; i < n; ++i) {
    denom = diag[i] - lower[i] * scratch[i - 1];
    if (!(std::abs(denom) > 1e-14 * a_norm)) {
      std::ostringstream os;
      os << "singular pivot at row " << i;
      throw NumericError(os.str());
    }
    scratch[i] = i + 1 < n ? upper[i] / denom : 0.0;
    x[i] = (rhs[i] - lower[i] * x[i - 1]) / denom;
  }
  for (std::size_t i = n - 1; i-- > 0;) x[i] -= scratch[i] * x[i + 1];

  double res = 0.0, xn = 0.0, bn = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double ax = diag[i] * x[i];
    if (i > 0) ax += lower[i] * x[i - 1];
    if (i + 1 < n) ax += upper[i] * x[i + 1];
    res = std::max(res, std::abs(ax - rhs[i]));
    xn = std::max(xn, std::abs(x[i]));
    bn = std::max(bn, std::abs(rhs[i]));
  }
  check_residual(res, a_norm, xn, bn, "tridiagonal solve");
}

void solve_cyclic_tridiagonal(std::span<const double> lower, std::span<const double> diag,
                              std::span<const double> upper, std::span<const double> rhs,
                              std::span<double> x) {
  const std::size_t n = diag.size();
  if (n < 3) throw ConstraintError("size", "cyclic tridiagonal system needs n >= 3");
  // A = T + u v^T with u = (gamma, 0, .., 0, c_last), v = (1, 0, .., 0, a_first / gamma).
  const double a_first = lower[0];
  const double c_last = upper[n - 1];
  const double gamma = -diag[0];
  std::vector<double> d(diag.begin(), diag.end());
  d[0] -= gamma;
  d[n - 1] -= a_first * c_last / gamma;
  std::vector<double> u(n, 0.0);
  u[0] = gamma;
  u[n - 1] = c_last;
  std::vector<double> y(n), z(n), scratch;
  solve_tridiagonal(lower, d, upper, rhs, y, scratch);
  solve_tridiagonal(lower, d, upper, u, z, scratch);
  const double vy = y[0] + a_first / gamma * y[n - 1];
  const double vz = z[0] + a_first / gamma * z[n - 1];
  const double f = vy / (1.0 + vz);
  for (std::size_t i = 0; i < n; ++i) x[i] = y[i] - f * z[i];

  double res = 0.0, xn = 0.0, bn = 0.0, an = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t im = i == 0 ? n - 1 : i - 1;
    const std::size_t ip = i + 1 == n ? 0 : i + 1;
    const double ax = lower[i] * x[im] + diag[i] * x[i] + upper[i] * x[ip];
    res = std::max(res, std::abs(ax - rhs[i]));
    xn = std::max(xn, std::abs(x[i]));
    bn = std::max(bn, std::abs(rhs[i]));
    an = std::max(an, std::abs(lower[i]) + std::abs(diag[i]) + std::abs(upper[i]));
  }
  check_residual(res, an, xn, bn, "cyclic tridiagonal solve");
}

// ---------------------------------------------------------------- iterative

IterativeResult solve_iterative(const SparseMatrix& a, std::span<const double> rhs,
                                IterativeMethod method, double tol, int max_iter,
                                std::span<const double> x0) {
  const std::size_t n = a.size();
  if (rhs.size() != n) throw ConstraintError("rhs", "right-hand side size mismatch");
  if (method == IterativeMethod::cg && !a.is_symmetric())
    throw ConstraintError("symmetry", "conjugate gradients requires a symmetric matrix; use bicgstab");

  std::vector<double> inv_diag = a.diagonal();
  for (double& d : inv_diag) {
    if (d == 0.0) throw NumericError("zero diagonal entry; Jacobi preconditioner undefined");
    d = 1.0 / d;
  }

  IterativeResult out;
  out.x.assign(n, 0.0);
  if (!x0.empty()) std::copy(x0.begin(), x0.end(), out.x.begin());

  const double bnorm = std::sqrt(par::dot(rhs, rhs));
  if (bnorm == 0.0) {
    std::fill(out.x.begin(), out.x.end(), 0.0);
    return out;
  }

  std::vector<double> r(n), z(n), p(n), q(n);
  a.multiply(out.x, q);
  for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - q[i];
  double rel = std::sqrt(par::dot(r, r)) / bnorm;
  if (rel <= tol) {
    out.residual = rel;
    return out;
  }

  if (method == IterativeMethod::cg) {
    par::hadamard(inv_diag, r, z);
    p = z;
    double rz = par::dot(r, z);
    for (int it = 1; it <= max_iter; ++it) {
      a.multiply(p, q);
      const double pq = par::dot(p, q);
      if (!(pq > 0.0)) throw NonConvergenceError("cg breakdown: matrix not positive definite", rel, it);
      const double alpha = rz / pq;
      par::axpy(alpha, p, out.x);
      par::axpy(-alpha, q, r);
      rel = std::sqrt(par::dot(r, r)) / bnorm;
      out.iterations = it;
      if (rel <= tol) break;
      par::hadamard(inv_diag, r, z);
      const double rz_new = par::dot(r, z);
      par::xpby(z, rz_new / rz, p);
      rz = rz_new;
    }
  } else {
    std::vector<double> r_hat = r, v(n, 0.0), s(n), t(n), p_hat(n), s_hat(n);
    double rho = 1.0, alpha = 1.0, omega = 1.0;
    std::fill(p.begin(), p.end(), 0.0);
    for (int it = 1; it <= max_iter; ++it) {
      const double rho_new = par::dot(r_hat, r);
      if (rho_new == 0.0) throw NonConvergenceError("bicgstab breakdown (rho = 0)", rel, it);
      const double beta = (rho_new / rho) * (alpha / omega);
      for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * (p[i] - omega * v[i]);
      par::hadamard(inv_diag, p, p_hat);
      a.multiply(p_hat, v);
      const double rv = par::dot(r_hat, v);
      if (rv == 0.0) throw NonConvergenceError("bicgstab breakdown (r_hat.v = 0)", rel, it);
      alpha = rho_new / rv;
      for (std::size_t i = 0; i < n; ++i) s[i] = r[i] - alpha * v[i];
      out.iterations = it;
      const double snorm = std::sqrt(par::dot(s, s)) / bnorm;
      if (snorm <= tol) {
        par::axpy(alpha, p_hat, out.x);
        rel = snorm;
        break;
      }
      par::hadamard(inv_diag, s, s_hat);
      a.multiply(s_hat, t);
      const double tt = par::dot(t, t);
      if (tt == 0.0) throw NonConvergenceError("bicgstab breakdown (t = 0)", rel, it);
      omega = par::dot(t, s) / tt;
      for (std::size_t i = 0; i < n; ++i) out.x[i] += alpha * p_hat[i] + omega * s_hat[i];
      for (std::size_t i = 0; i < n; ++i) r[i] = s[i] - omega * t[i];
      rel = std::sqrt(par::dot(r, r)) / bnorm;
      if (rel <= tol) break;
      if (omega == 0.0) throw NonConvergenceError("bicgstab breakdown (omega = 0)", rel, it);
      rho = rho_new;
    }
  }

  // Recompute the true residual; the recurrence can drift.
  a.multiply(out.x, q);
  for (std::size_t i = 0; i < n; ++i) r[i] = rhs[i] - q[i];
  out.residual = std::sqrt(par::dot(r, r)) / bnorm;
  if (!(out.residual <= tol * 10.0)) {
    std::ostringstream os;
    os << (method == IterativeMethod::cg ? "cg" : "bicgstab") << " did not converge in "
       << out.iterations << " iterations (relative residual " << out.residual << ")";
    throw NonConvergenceError(os.str(), out.residual, out.iterations);
  }
  return out;
}

// ---------------------------------------------------------------- dense

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::vector<double> DenseMatrix::multiply(std::span<const double> x) const {
  std::vector<double> y(rows_);
  for (std::size_t r = 0; r < rows_; ++r) y[r] = kernels::serial::dot(row(r), x);
  return y;
}

DenseMatrix DenseMatrix::transpose() const {
  DenseMatrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

DenseMatrix operator*(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw ConstraintError("shape", "matrix product shape mismatch");
  DenseMatrix c(a.rows(), b.cols());
  const auto n = static_cast<long>(a.rows());
#pragma omp parallel for schedule(static) if (a.rows() * a.cols() * b.cols() > (1u << 20))
  for (long r = 0; r < n; ++r) {
    auto crow = c.row(static_cast<std::size_t>(r));
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double f = a(static_cast<std::size_t>(r), k);
      if (f == 0.0) continue;
      const auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += f * brow[j];
    }
  }
  return c;
}

Cholesky::Cholesky(DenseMatrix a, std::size_t cap) : l_(std::move(a)) {
  const std::size_t n = l_.rows();
  if (l_.cols() != n) throw ConstraintError("shape", "Cholesky needs a square matrix");
  if (n > cap) {
    std::ostringstream os;
    os << "dense SPD dimension " << n << " exceeds cap " << cap;
    throw ConstraintError("dense_cap", os.str());
  }
  for (std::size_t j = 0; j < n; ++j) {
    auto lj = l_.row(j);
    double d = lj[j] - kernels::serial::dot(lj.subspan(0, j), lj.subspan(0, j));
    if (!(d > 0.0) || !std::isfinite(d)) {
      std::ostringstream os;
      os << "matrix not positive definite (pivot " << d << " at " << j << ")";
      throw NumericError(os.str());
    }
    d = std::sqrt(d);
    lj[j] = d;
    const auto nj = static_cast<long>(n);
#pragma omp parallel for schedule(static) if ((n - j) * j > (1u << 16))
    for (long i = static_cast<long>(j) + 1; i < nj; ++i) {
      auto li = l_.row(static_cast<std::size_t>(i));
      li[j] = (li[j] - kernels::serial::dot(li.subspan(0, j), lj.subspan(0, j))) / d;
    }
  }
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = r + 1; c < n; ++c) l_(r, c) = 0.0;
}

void Cholesky::forward(std::span<double> x) const {
  const std::size_t n = size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto li = l_.row(i);
    x[i] = (x[i] - kernels::serial::dot(li.subspan(0, i), x.subspan(0, i))) / li[i];
  }
}

void Cholesky::backward(std::span<double> x) const {
  const std::size_t n = size();
  for (std::size_t i = n; i-- > 0;) {
    x[i] /= l_(i, i);
    const double xi = x[i];
    const auto li = l_.row(i);
    for (std::size_t k = 0; k < i; ++k) x[k] -= li[k] * xi;
  }
}

void Cholesky::solve_in_place(std::span<double> x) const {
  forward(x);
  backward(x);
}

std::vector<double> Cholesky::solve(std::span<const double> rhs) const {
  std::vector<double> x(rhs.begin(), rhs.end());
  solve_in_place(x);
  return x;
}

std::vector<double> solve_dense_spd(const DenseMatrix& a, std::span<const double> rhs,
                                    std::size_t cap) {
  Cholesky chol(a, cap);
  std::vector<double> x = chol.solve(rhs);
  const auto ax = a.multiply(x);
  double res = 0.0;
  double a_norm = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    res = std::max(res, std::abs(ax[r] - rhs[r]));
    double s = 0.0;
    for (double v : a.row(r)) s += std::abs(v);
    a_norm = std::max(a_norm, s);
  }
  check_residual(res, a_norm, inf_norm(x), inf_norm(rhs), "dense SPD solve");
  return x;
}

BlockTridiagonalCholesky::BlockTridiagonalCholesky(std::vector<DenseMatrix> diag,
                                                   std::vector<DenseMatrix> off) {
  k_ = diag.size();
  if (k_ == 0) throw ConstraintError("blocks", "need at least one diagonal block");
  if (off.size() + 1 != k_) throw ConstraintError("blocks", "need K-1 off-diagonal blocks");
  m_ = diag[0].rows();
  l_.reserve(k_);
  c_.reserve(k_ - 1);
  l_.emplace_back(std::move(diag[0]), std::numeric_limits<std::size_t>::max());
  for (std::size_t k = 0; k + 1 < k_; ++k) {
    // C_k = E_k L_k^{-T}: row r of C_k is L_k^{-1} (row r of E_k).
    DenseMatrix c = std::move(off[k]);
    for (std::size_t r = 0; r < m_; ++r) l_[k].forward(c.row(r));
    DenseMatrix s = std::move(diag[k + 1]);
    const DenseMatrix cct = c * c.transpose();
    for (std::size_t i = 0; i < s.data().size(); ++i) s.data()[i] -= cct.data()[i];
    c_.push_back(std::move(c));
    l_.emplace_back(std::move(s), std::numeric_limits<std::size_t>::max());
  }
}

std::vector<double> BlockTridiagonalCholesky::solve(std::span<const double> rhs) const {
  if (rhs.size() != m_ * k_) throw ConstraintError("rhs", "block system size mismatch");
  std::vector<double> x(rhs.begin(), rhs.end());
  auto blk = [&](std::size_t k) { return std::span<double>(x.data() + k * m_, m_); };
  l_[0].forward(blk(0));
  for (std::size_t k = 1; k < k_; ++k) {
    const auto prev = blk(k - 1);
    auto cur = blk(k);
    const auto cy = c_[k - 1].multiply(prev);
    for (std::size_t i = 0; i < m_; ++i) cur[i] -= cy[i];
    l_[k].forward(cur);
  }
  l_[k_ - 1].backward(blk(k_ - 1));
  for (std::size_t k = k_ - 1; k-- > 0;) {
    const auto next = blk(k + 1);
    auto cur = blk(k);
    // cur -= C_k^T next
    for (std::size_t r = 0; r < m_; ++r) {
      const double v = next[r];
      if (v == 0.0) continue;
      const auto crow = c_[k].row(r);
      for (std::size_t i = 0; i < m_; ++i) cur[i] -= crow[i] * v;
    }
    l_[k].backward(cur);
  }
  return x;
}

}  // namespace homog::linalg
