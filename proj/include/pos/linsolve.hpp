#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pos {

/// Row-major dense matrix.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  /// Throws InvalidInput if data.size() != rows * cols.
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  /// y = A x
  std::vector<double> apply(std::span<const double> x) const;
  /// y = A^T x
  std::vector<double> apply_transpose(std::span<const double> x) const;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

/// u = J J^T (symmetric, M x M).
DenseMatrix gram(const DenseMatrix& J);

struct MxmSolution {
  std::vector<double> x;
  double rcond = 0.0;  ///< 1-norm reciprocal condition estimate of the equilibrated system
};

/// Solve u x = rhs with LU and partial pivoting after symmetric diagonal
/// equilibration. Throws SingularGram if a pivot falls below 1e-14 ||u|| or the
/// reciprocal condition estimate is below min_rcond.
MxmSolution solve_mxm(const DenseMatrix& u, std::span<const double> rhs, double min_rcond = 1e-12);

/// Minimum-norm solution of J dx = rhs through dx = J^T (J J^T)^{-1} rhs.
/// Throws SingularGram when J J^T is singular.
std::vector<double> least_norm_solve(const DenseMatrix& J, std::span<const double> rhs,
                                     double min_rcond = 1e-12);

/// Moore-Penrose pseudo-inverse applied to rhs, singular values below
/// rel_cutoff * sigma_max treated as zero. Throws NumericError on SVD failure.
std::vector<double> svd_pinv_apply(const DenseMatrix& J, std::span<const double> rhs,
                                   double rel_cutoff = 1e-12);

}  // namespace pos
