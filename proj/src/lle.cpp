#include "deeplle/lle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "deeplle/check.hpp"

namespace deeplle::lle {

std::vector<int64_t> find_neighbors(const Eigen::MatrixXd& X, int64_t i, int64_t k) {
  const int64_t m = X.rows();
  DLLE_CHECK(m >= 2, "find_neighbors: need at least 2 samples, got ", m);
  DLLE_CHECK(i >= 0 && i < m, "find_neighbors: sample index ", i, " out of range");
  DLLE_CHECK(k >= 1 && k <= m - 1, "find_neighbors: k must be in [1,", m - 1, "], got ", k);

  std::vector<std::pair<double, int64_t>> dist;
  dist.reserve(m - 1);
  for (int64_t j = 0; j < m; ++j) {
    if (j == i) continue;
    dist.emplace_back((X.row(j) - X.row(i)).squaredNorm(), j);
  }
  std::sort(dist.begin(), dist.end());  // ties fall to the smaller index
  std::vector<int64_t> out(k);
  for (int64_t j = 0; j < k; ++j) out[j] = dist[j].second;
  return out;
}

Eigen::VectorXd solve_weights(const Eigen::MatrixXd& X, int64_t i,
                              const std::vector<int64_t>& neighbors, double reg) {
  const int64_t m = X.rows();
  const int64_t nn = static_cast<int64_t>(neighbors.size());
  DLLE_CHECK(nn >= 1, "solve_weights: neighborhood is empty");
  DLLE_CHECK(i >= 0 && i < m, "solve_weights: sample index ", i, " out of range");
  DLLE_CHECK(reg >= 0.0, "solve_weights: regularization must be nonnegative");
  for (int64_t j : neighbors)
    DLLE_CHECK(j >= 0 && j < m && j != i, "solve_weights: bad neighbor index ", j, " for sample ", i);

  Eigen::MatrixXd D(nn, X.cols());
  for (int64_t a = 0; a < nn; ++a) D.row(a) = X.row(i) - X.row(neighbors[a]);
  Eigen::MatrixXd C = D * D.transpose();
  const double tr = C.trace();
  Eigen::MatrixXd A = C + reg * tr * Eigen::MatrixXd::Identity(nn, nn);

  Eigen::VectorXd ones = Eigen::VectorXd::Ones(nn);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
  Eigen::VectorXd w = ldlt.solve(ones);
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  if (ldlt.info() != Eigen::Success || !w.allFinite() ||
      (A * w - ones).norm() > 1e-8 * scale * std::max(1.0, w.norm())) {
    fail_runtime("solve_weights: singular local Gram system for sample ", i,
                 reg == 0.0 ? " (no regularization applied)" : "");
  }
  const double s = w.sum();
  if (std::abs(s) < 1e-12) fail_runtime("solve_weights: weights sum to ~0 for sample ", i);
  return w / s;
}

WeightMatrix build_weights(const Eigen::MatrixXd& X, int64_t k_neighbors, double reg) {
  const int64_t m = X.rows();
  WeightMatrix out;
  out.W = Eigen::MatrixXd::Zero(m, m);
  out.neighborhoods.resize(m);
  for (int64_t i = 0; i < m; ++i) {
    out.neighborhoods[i] = find_neighbors(X, i, k_neighbors);
    Eigen::VectorXd w = solve_weights(X, i, out.neighborhoods[i], reg);
    for (int64_t a = 0; a < static_cast<int64_t>(out.neighborhoods[i].size()); ++a)
      out.W(i, out.neighborhoods[i][a]) = w(a);
  }
  return out;
}

Eigen::MatrixXd embed(const WeightMatrix& weights, int64_t k) {
  const int64_t m = weights.W.rows();
  DLLE_CHECK(m >= 2, "embed: need at least 2 samples");
  DLLE_CHECK(k >= 1 && k <= m - 1, "embed: target dimension must be in [1,", m - 1, "], got ", k);

  Eigen::MatrixXd IW = Eigen::MatrixXd::Identity(m, m) - weights.W;
  Eigen::MatrixXd M = IW.transpose() * IW;

  // Deflate the constant direction explicitly: M annihilates the ones vector
  // (rows of W sum to 1), and eigenvectors of a degenerate null space may
  // otherwise mix it back into the returned columns.
  Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(m, 1);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(ones);
  Eigen::MatrixXd Qfull = qr.householderQ();
  Eigen::MatrixXd Q = Qfull.rightCols(m - 1);  // orthonormal complement of ones

  Eigen::MatrixXd Mt = Q.transpose() * M * Q;
  Mt = 0.5 * (Mt + Mt.transpose().eval());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Mt);
  if (es.info() != Eigen::Success) fail_runtime("embed: eigen-decomposition failed");

  Eigen::MatrixXd V = es.eigenvectors().leftCols(k);  // ascending eigenvalues
  Eigen::MatrixXd Y = std::sqrt(static_cast<double>(m)) * (Q * V);

  // deterministic column signs: largest-magnitude entry positive
  for (int64_t c = 0; c < k; ++c) {
    int64_t arg = 0;
    double best = -1;
    for (int64_t r = 0; r < m; ++r) {
      if (std::abs(Y(r, c)) > best) {
        best = std::abs(Y(r, c));
        arg = r;
      }
    }
    if (Y(arg, c) < 0) Y.col(c) = -Y.col(c);
  }
  return Y;
}

double reconstruction_objective(const Eigen::MatrixXd& coords, const Eigen::MatrixXd& W) {
  DLLE_CHECK(coords.rows() == W.rows() && W.rows() == W.cols(),
             "reconstruction_objective: dimension mismatch");
  return ((coords - W * coords)).squaredNorm();
}

double row_objective(const Eigen::MatrixXd& X, int64_t i, const std::vector<int64_t>& neighbors,
                     const Eigen::VectorXd& w) {
  Eigen::RowVectorXd recon = Eigen::RowVectorXd::Zero(X.cols());
  for (int64_t a = 0; a < static_cast<int64_t>(neighbors.size()); ++a)
    recon += w(a) * X.row(neighbors[a]);
  return (X.row(i) - recon).squaredNorm();
}

}  // namespace deeplle::lle
