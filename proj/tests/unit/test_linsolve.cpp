#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "oracles.hpp"
#include "pos/error.hpp"
#include "pos/linsolve.hpp"

using namespace pos;

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

DenseMatrix random_matrix(std::mt19937_64& g, std::size_t rows, std::size_t cols) {
  return DenseMatrix(rows, cols, oracle::normals(g, rows * cols));
}

Eigen::Map<const Mat> view(const DenseMatrix& A) {
  return Eigen::Map<const Mat>(A.data().data(), static_cast<Eigen::Index>(A.rows()),
                               static_cast<Eigen::Index>(A.cols()));
}

Eigen::VectorXd vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Projection of v onto the null space of J, via a Householder QR of J^T.
Eigen::VectorXd null_component(const Mat& J, const Eigen::VectorXd& v) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(J.transpose());
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(J.cols(), J.rows());
  return v - Q * (Q.transpose() * v);
}

}  // namespace

TEST_CASE("dense matrix basics") {
  CHECK_THROWS_AS(DenseMatrix(2, 3, std::vector<double>(5)), InvalidInput);
  const DenseMatrix A(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(A.apply(std::vector<double>{1, 0, -1}) == std::vector<double>{-2, -2});
  CHECK(A.apply_transpose(std::vector<double>{1, 1}) == std::vector<double>{5, 7, 9});
  const auto u = gram(A);
  CHECK(u(0, 0) == 14.0);
  CHECK(u(0, 1) == 32.0);
  CHECK(u(1, 0) == 32.0);
  CHECK(u(1, 1) == 77.0);
  const auto I = DenseMatrix::identity(3);
  CHECK(I(1, 1) == 1.0);
  CHECK(I(0, 1) == 0.0);
}

TEST_CASE("least-norm solutions: residual, row space and minimality") {
  std::mt19937_64 g(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t M = 1 + trial % 8;
    const std::size_t N = M + 1 + (trial * 37) % 400;
    CAPTURE(M);
    CAPTURE(N);
    const auto J = random_matrix(g, M, N);
    const auto rhs = oracle::normals(g, M);
    const auto dx = least_norm_solve(J, rhs);
    REQUIRE(dx.size() == N);

    const auto Jd = J.apply(dx);
    double r2 = 0.0;
    for (std::size_t i = 0; i < M; ++i) r2 += (Jd[i] - rhs[i]) * (Jd[i] - rhs[i]);
    CHECK(std::sqrt(r2) <= 1e-10);

    // no component in the null space
    const Eigen::VectorXd d = vec(dx);
    CHECK(null_component(view(J), d).norm() <= 1e-10 * std::max(1.0, d.norm()));

    // adding any null-space vector makes it longer
    const Eigen::VectorXd z = null_component(view(J), vec(oracle::normals(g, N)));
    for (double eps : {1e-3, 1e-1, 1.0}) CHECK((d + eps * z).norm() > d.norm());

    // the SVD route reaches the same point
    const auto ds = svd_pinv_apply(J, rhs);
    double diff = 0.0, nrm = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      diff += (ds[i] - dx[i]) * (ds[i] - dx[i]);
      nrm += dx[i] * dx[i];
    }
    CHECK(std::sqrt(diff) <= 1e-9 * std::max(1.0, std::sqrt(nrm)));

    // and a complete orthogonal decomposition agrees too
    const Eigen::VectorXd dc = view(J).completeOrthogonalDecomposition().solve(vec(rhs));
    CHECK((dc - d).norm() <= 1e-9 * std::max(1.0, d.norm()));
  }
}

TEST_CASE("solve_mxm on badly scaled but regular systems") {
  // rows of very different magnitude; diagonal equilibration makes this harmless
  std::mt19937_64 g(8);
  auto J = random_matrix(g, 3, 50);
  const double scale[3] = {1e6, 1.0, 1e-5};
  for (std::size_t r = 0; r < 3; ++r)
    for (double& v : J.row(r)) v *= scale[r];
  const auto u = gram(J);
  // a solution whose components balance the row scales
  std::vector<double> x0{1.0, -2.0, 3.0};
  for (std::size_t i = 0; i < 3; ++i) x0[i] /= std::sqrt(u(i, i));
  const auto rhs = u.apply(x0);
  const auto s = solve_mxm(u, rhs);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(s.x[i] - x0[i]) < 1e-12 * std::abs(x0[i]));
  CHECK(s.rcond > 1e-3);
}

TEST_CASE("rank deficiency raises SingularGram; SVD still answers") {
  // two identical rows
  DenseMatrix J(2, 4, {1, 2, 3, 4, 1, 2, 3, 4});
  const std::vector<double> rhs{1.0, 1.0};
  CHECK_THROWS_AS(least_norm_solve(J, rhs), SingularGram);
  const auto dx = svd_pinv_apply(J, rhs);
  const auto Jd = J.apply(dx);
  CHECK(Jd[0] == doctest::Approx(1.0));
  CHECK(Jd[1] == doctest::Approx(1.0));
  // pinv solution is a multiple of the row
  const double k = dx[0];
  for (int i = 0; i < 4; ++i) CHECK(dx[i] == doctest::Approx(k * (i + 1)));

  DenseMatrix Z(2, 3, 0.0);
  CHECK_THROWS_AS(least_norm_solve(Z, std::vector<double>{0.0, 0.0}), SingularGram);
  CHECK_THROWS_AS(solve_mxm(DenseMatrix(2, 2, {1, 1, 1, 1}), std::vector<double>{1, 2}), SingularGram);
}

TEST_CASE("near-singular gram respects the condition threshold") {
  const double e = 3e-7;
  DenseMatrix J(2, 3, {1, 0, 0, 1, e, 0});
  // cond(J J^T) ~ 4/e^2, above the default limit but with usable pivots
  CHECK_THROWS_AS(least_norm_solve(J, std::vector<double>{1.0, 1.0}), SingularGram);
  const auto ok = least_norm_solve(J, std::vector<double>{1.0, 1.0}, 0.0);
  CHECK(ok.size() == 3);
}

TEST_CASE("shape errors") {
  const DenseMatrix J(2, 3, 1.0);
  CHECK_THROWS_AS(least_norm_solve(J, std::vector<double>{1.0}), InvalidInput);
  CHECK_THROWS_AS(solve_mxm(DenseMatrix(2, 3), std::vector<double>{1, 2}), InvalidInput);
}
