#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <vector>

#include "deeplle/check.hpp"
#include "deeplle/lle.hpp"
#include "deeplle/rng.hpp"
#include "doctest.h"

using namespace deeplle;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_matrix(int64_t rows, int64_t cols, uint64_t seed, double lo = -1, double hi = 1) {
  Rng rng(seed);
  MatrixXd X(rows, cols);
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) X(i, j) = lo + (hi - lo) * rng.uniform01();
  return X;
}

// selection-style oracle, independent of the sort in find_neighbors
std::vector<int64_t> nearest_by_scan(const MatrixXd& X, int64_t i, int64_t k) {
  std::vector<bool> used(X.rows(), false);
  used[i] = true;
  std::vector<int64_t> out;
  for (int64_t pick = 0; pick < k; ++pick) {
    int64_t best = -1;
    double best_d = 0;
    for (int64_t j = 0; j < X.rows(); ++j) {
      if (used[j]) continue;
      double d = (X.row(j) - X.row(i)).squaredNorm();
      if (best < 0 || d < best_d) {
        best = j;
        best_d = d;
      }
    }
    used[best] = true;
    out.push_back(best);
  }
  return out;
}

MatrixXd random_orthogonal(int64_t n, uint64_t seed) {
  MatrixXd A = random_matrix(n, n, seed);
  Eigen::HouseholderQR<MatrixXd> qr(A);
  return MatrixXd(qr.householderQ());
}

// zero-mean columns, (1/m) Y^T Y = I
MatrixXd normalize_candidate(MatrixXd Y) {
  const int64_t m = Y.rows();
  Y.rowwise() -= Y.colwise().mean();
  MatrixXd cov = Y.transpose() * Y / static_cast<double>(m);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
  MatrixXd inv_sqrt = es.operatorInverseSqrt();
  return Y * inv_sqrt;
}

}  // namespace

TEST_CASE("find_neighbors") {
  SUBCASE("nearest by inspection") {
    MatrixXd X(3, 1);
    X << 0, 1, 10;
    auto n = lle::find_neighbors(X, 0, 1);
    REQUIRE(n.size() == 1);
    CHECK(n[0] == 1);
  }
  SUBCASE("equidistant tie picks smaller index") {
    MatrixXd X(3, 1);
    X << 0, -1, 1;  // both neighbors at distance 1 from sample 0
    auto n = lle::find_neighbors(X, 0, 1);
    CHECK(n[0] == 1);
  }
  SUBCASE("matches exhaustive-scan oracle on random points") {
    MatrixXd X = random_matrix(50, 3, 1234);
    for (int64_t i : {0, 7, 49}) {
      auto got = lle::find_neighbors(X, i, 5);
      auto want = nearest_by_scan(X, i, 5);
      CHECK(got == want);
    }
  }
  SUBCASE("k out of range rejected") {
    MatrixXd X = random_matrix(5, 2, 1);
    CHECK_THROWS_AS(lle::find_neighbors(X, 0, 0), ContractError);
    CHECK_THROWS_AS(lle::find_neighbors(X, 0, 5), ContractError);
  }
}

TEST_CASE("solve_weights") {
  SUBCASE("midpoint gives (1/2, 1/2)") {
    MatrixXd X(3, 2);
    X << 0, 0, 2, 2, 1, 1;  // sample 2 is the midpoint of 0 and 1
    VectorXd w = lle::solve_weights(X, 2, {0, 1});
    CHECK(std::abs(w(0) - 0.5) < 1e-8);
    CHECK(std::abs(w(1) - 0.5) < 1e-8);
  }
  SUBCASE("affine span of 3 neighbors reconstructs exactly") {
    Rng rng(77);
    MatrixXd X(4, 3);
    // rows 0..2 in general position; row 3 an affine combination
    MatrixXd base = random_matrix(3, 3, 42);
    double a = 0.2, b = 0.5;  // affine coefficients a, b, 1-a-b
    X.topRows(3) = base;
    X.row(3) = a * base.row(0) + b * base.row(1) + (1 - a - b) * base.row(2);
    VectorXd w = lle::solve_weights(X, 3, {0, 1, 2}, 1e-9);
    CHECK(lle::row_objective(X, 3, {0, 1, 2}, w) < 1e-8);
  }
  SUBCASE("beats or matches 1-parameter simplex grid search") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
      MatrixXd X = random_matrix(3, 2, 9000 + seed);
      std::vector<int64_t> nb = {0, 1};
      VectorXd w = lle::solve_weights(X, 2, nb);
      const double mine = lle::row_objective(X, 2, nb, w);
      double grid_best = std::numeric_limits<double>::infinity();
      for (int64_t step = 0; step <= 10000; ++step) {
        VectorXd cand(2);
        cand << step * 1e-4, 1.0 - step * 1e-4;
        grid_best = std::min(grid_best, lle::row_objective(X, 2, nb, cand));
      }
      CHECK(mine <= grid_best + 1e-3);
    }
  }
  SUBCASE("row sums to one") {
    MatrixXd X = random_matrix(8, 4, 55);
    for (int64_t i = 0; i < 8; ++i) {
      auto nb = lle::find_neighbors(X, i, 3);
      VectorXd w = lle::solve_weights(X, i, nb);
      CHECK(std::abs(w.sum() - 1.0) < 1e-10);
    }
  }
  SUBCASE("singular system without regularization reported") {
    MatrixXd X(3, 2);
    X << 0, 0, 2, 2, 1, 1;  // midpoint geometry makes the Gram matrix singular
    CHECK_THROWS_AS(lle::solve_weights(X, 2, {0, 1}, 0.0), RuntimeFault);
  }
  SUBCASE("invariant under translation, rotation, uniform scaling") {
    MatrixXd X = random_matrix(6, 2, 808);
    auto nb = lle::find_neighbors(X, 0, 3);
    VectorXd w0 = lle::solve_weights(X, 0, nb);

    MatrixXd Xt = X;
    Xt.rowwise() += Eigen::RowVector2d(3.7, -1.2);
    CHECK((lle::solve_weights(Xt, 0, nb) - w0).cwiseAbs().maxCoeff() < 1e-8);

    double th = 0.83;
    MatrixXd R(2, 2);
    R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    MatrixXd Xr = X * R.transpose();
    CHECK((lle::solve_weights(Xr, 0, nb) - w0).cwiseAbs().maxCoeff() < 1e-8);

    MatrixXd Xs = 4.25 * X;
    CHECK((lle::solve_weights(Xs, 0, nb) - w0).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("embed") {
  SUBCASE("zero-residual weights give zero objective") {
    // collinear points: every sample is an exact affine combination of its
    // two neighbors, so residuals vanish
    const int64_t m = 10;
    Rng rng(5);
    MatrixXd X(m, 4);
    Eigen::RowVectorXd p = Eigen::RowVectorXd::Random(4);
    Eigen::RowVectorXd d = Eigen::RowVectorXd::Random(4);
    for (int64_t i = 0; i < m; ++i) X.row(i) = p + (i + 0.2 * rng.uniform01()) * d;
    auto wm = lle::build_weights(X, 2, 1e-9);
    CHECK(lle::reconstruction_objective(X, wm.W) < 1e-8);
    MatrixXd Y = lle::embed(wm, 1);
    CHECK(lle::reconstruction_objective(Y, wm.W) < 1e-8);
  }
  SUBCASE("line in 5-D embeds with order preserved up to sign") {
    const int64_t m = 10;
    Rng rng(17);
    MatrixXd X(m, 5);
    Eigen::RowVectorXd p(5), d(5);
    for (int64_t j = 0; j < 5; ++j) {
      p(j) = rng.uniform01();
      d(j) = rng.uniform01() + 0.2;
    }
    std::vector<double> ts;
    for (int64_t i = 0; i < m; ++i) ts.push_back(i + 0.3 * rng.uniform01());
    for (int64_t i = 0; i < m; ++i) X.row(i) = p + ts[i] * d;
    auto wm = lle::build_weights(X, 2);
    MatrixXd Y = lle::embed(wm, 1);
    bool ascending = true, descending = true;
    for (int64_t i = 0; i + 1 < m; ++i) {
      if (Y(i + 1, 0) <= Y(i, 0)) ascending = false;
      if (Y(i + 1, 0) >= Y(i, 0)) descending = false;
    }
    CHECK((ascending || descending));
  }
  SUBCASE("objective beats 100 random normalized candidates") {
    MatrixXd X = random_matrix(12, 6, 2024);
    auto wm = lle::build_weights(X, 4);
    MatrixXd Y = lle::embed(wm, 2);
    const double mine = lle::reconstruction_objective(Y, wm.W);
    for (uint64_t s = 0; s < 100; ++s) {
      MatrixXd cand = normalize_candidate(random_matrix(12, 2, 31000 + s));
      CHECK(mine <= lle::reconstruction_objective(cand, wm.W) + 1e-12);
    }
  }
  SUBCASE("normalization invariants") {
    MatrixXd X = random_matrix(9, 5, 66);
    auto wm = lle::build_weights(X, 3);
    MatrixXd Y = lle::embed(wm, 2);
    CHECK(Y.colwise().mean().cwiseAbs().maxCoeff() < 1e-8);
    MatrixXd cov = Y.transpose() * Y / 9.0;
    CHECK((cov - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-8);
  }
  SUBCASE("objective invariant under orthogonal transforms of Y") {
    MatrixXd X = random_matrix(9, 5, 67);
    auto wm = lle::build_weights(X, 3);
    MatrixXd Y = lle::embed(wm, 2);
    MatrixXd Q = random_orthogonal(2, 5150);
    CHECK(lle::reconstruction_objective(Y * Q, wm.W) ==
          doctest::Approx(lle::reconstruction_objective(Y, wm.W)).epsilon(1e-10));
  }
  SUBCASE("k out of range rejected") {
    MatrixXd X = random_matrix(5, 3, 68);
    auto wm = lle::build_weights(X, 2);
    CHECK_THROWS_AS(lle::embed(wm, 5), ContractError);
  }
}
