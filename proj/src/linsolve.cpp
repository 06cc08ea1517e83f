#include "pos/linsolve.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include <Eigen/SVD>

#include "pos/error.hpp"
#include "pos/kernels.hpp"

namespace pos {

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_)
    throw InvalidInput("matrix data has " + std::to_string(data_.size()) + " entries, expected " +
                       std::to_string(rows_ * cols_));
  for (double v : data_)
    if (!std::isfinite(v)) throw InvalidInput("non-finite matrix entry");
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix I(n, n);
  for (std::size_t i = 0; i < n; ++i) I(i, i) = 1.0;
  return I;
}

std::vector<double> DenseMatrix::apply(std::span<const double> x) const {
  if (x.size() != cols_) throw InvalidInput("matrix-vector size mismatch");
  std::vector<double> y(rows_);
  const auto& k = kernels::active();
  // each row is a pairwise dot product
  for (std::size_t r = 0; r < rows_; ++r) {
    std::vector<double> prod(cols_);
    for (std::size_t c = 0; c < cols_; ++c) prod[c] = (*this)(r, c) * x[c];
    y[r] = k.sum(prod.data(), cols_);
  }
  return y;
}

std::vector<double> DenseMatrix::apply_transpose(std::span<const double> x) const {
  if (x.size() != rows_) throw InvalidInput("matrix-vector size mismatch");
  std::vector<double> y(cols_);
  kernels::active().gemv_t(data_.data(), rows_, cols_, x.data(), y.data());
  return y;
}

DenseMatrix gram(const DenseMatrix& J) {
  DenseMatrix u(J.rows(), J.rows());
  if (J.rows() == 0) return u;
  kernels::active().gram(J.data().data(), J.rows(), J.cols(), u.data().data());
  return u;
}

namespace {

struct Lu {
  std::size_t n;
  std::vector<double> a;  // packed L\U, row-major
  std::vector<std::size_t> piv;
};

/// Returns false when a pivot falls below tiny.
bool lu_factor(Lu& lu, double tiny) {
  const std::size_t n = lu.n;
  lu.piv.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(lu.a[i * n + k]) > std::abs(lu.a[p * n + k])) p = i;
    lu.piv[k] = p;
    if (!(std::abs(lu.a[p * n + k]) > tiny)) return false;
    if (p != k)
      for (std::size_t j = 0; j < n; ++j) std::swap(lu.a[k * n + j], lu.a[p * n + j]);
    const double inv = 1.0 / lu.a[k * n + k];
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = lu.a[i * n + k] * inv;
      lu.a[i * n + k] = f;
      for (std::size_t j = k + 1; j < n; ++j) lu.a[i * n + j] -= f * lu.a[k * n + j];
    }
  }
  return true;
}

void lu_solve(const Lu& lu, double* b) {
  const std::size_t n = lu.n;
  for (std::size_t k = 0; k < n; ++k) std::swap(b[k], b[lu.piv[k]]);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) b[i] -= lu.a[i * n + j] * b[j];
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = i + 1; j < n; ++j) b[i] -= lu.a[i * n + j] * b[j];
    b[i] /= lu.a[i * n + i];
  }
}

double norm1(const std::vector<double>& a, std::size_t n) {
  double best = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::abs(a[i * n + j]);
    best = std::max(best, s);
  }
  return best;
}

}  // namespace

MxmSolution solve_mxm(const DenseMatrix& u, std::span<const double> rhs, double min_rcond) {
  const std::size_t n = u.rows();
  if (u.cols() != n) throw InvalidInput("solve_mxm needs a square matrix");
  if (rhs.size() != n) throw InvalidInput("solve_mxm right-hand side has the wrong size");
  MxmSolution sol;
  if (n == 0) return sol;

  // Symmetric diagonal scaling: the rows of J can differ by many orders of
  // magnitude (x^1 vs x^8), which the condition test should not count.
  std::vector<double> s(n, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    if (u(i, i) > 0.0) s[i] = 1.0 / std::sqrt(u(i, i));
  Lu lu{n, std::vector<double>(n * n), {}};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) lu.a[i * n + j] = s[i] * u(i, j) * s[j];
  const double anorm = norm1(lu.a, n);
  if (!(anorm > 0.0) || !std::isfinite(anorm)) throw SingularGram(0.0);
  if (!lu_factor(lu, 1e-14 * anorm)) throw SingularGram(0.0);

  std::vector<double> inv(n * n, 0.0), col(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(col.begin(), col.end(), 0.0);
    col[j] = 1.0;
    lu_solve(lu, col.data());
    for (std::size_t i = 0; i < n; ++i) inv[i * n + j] = col[i];
  }
  sol.rcond = 1.0 / (anorm * norm1(inv, n));
  if (!(sol.rcond >= min_rcond)) throw SingularGram(sol.rcond);

  sol.x.resize(n);
  for (std::size_t i = 0; i < n; ++i) sol.x[i] = s[i] * rhs[i];
  lu_solve(lu, sol.x.data());
  for (std::size_t i = 0; i < n; ++i) sol.x[i] *= s[i];
  return sol;
}

std::vector<double> least_norm_solve(const DenseMatrix& J, std::span<const double> rhs,
                                     double min_rcond) {
  if (rhs.size() != J.rows()) throw InvalidInput("least_norm_solve right-hand side has the wrong size");
  const MxmSolution y = solve_mxm(gram(J), rhs, min_rcond);
  return J.apply_transpose(y.x);
}

std::vector<double> svd_pinv_apply(const DenseMatrix& J, std::span<const double> rhs,
                                   double rel_cutoff) {
  if (rhs.size() != J.rows()) throw InvalidInput("svd_pinv_apply right-hand side has the wrong size");
  if (!(rel_cutoff > 0.0 && rel_cutoff < 1.0)) throw InvalidInput("SVD cutoff must lie in (0, 1)");
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMajor> A(J.data().data(), static_cast<Eigen::Index>(J.rows()),
                                     static_cast<Eigen::Index>(J.cols()));
  // Work on J^T (tall) so the thin factors stay small.
  const Eigen::MatrixXd At = A.transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(At, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw NumericError("SVD did not converge");
  const Eigen::VectorXd& sv = svd.singularValues();
  const double smax = sv.size() > 0 ? sv(0) : 0.0;
  // J = V S U^T, so J^+ rhs = U S^+ V^T rhs
  const Eigen::Map<const Eigen::VectorXd> b(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
  Eigen::VectorXd t = svd.matrixV().transpose() * b;
  for (Eigen::Index i = 0; i < t.size(); ++i)
    t(i) = (smax > 0.0 && sv(i) > rel_cutoff * smax) ? t(i) / sv(i) : 0.0;
  const Eigen::VectorXd x = svd.matrixU() * t;
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (!std::isfinite(x(i))) throw NumericError("non-finite SVD solution");
  return {x.data(), x.data() + x.size()};
}

}  // namespace pos
