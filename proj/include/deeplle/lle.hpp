#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace deeplle::lle {

// Classic locally linear embedding on a small dense dataset: k-nearest
// neighborhoods, constrained reconstruction weights, spectral embedding.

struct WeightMatrix {
  Eigen::MatrixXd W;  // m x m, W(i,j) = 0 unless j is a neighbor of i
  std::vector<std::vector<int64_t>> neighborhoods;
};

// Indices of the k nearest samples to row i (Euclidean), excluding i.
// Distance ties break toward the smaller index.
std::vector<int64_t> find_neighbors(const Eigen::MatrixXd& X, int64_t i, int64_t k);

// Reconstruction weights for sample i over the given neighbors. Solves the
// regularized local Gram system (C + reg*trace(C)*I) w = 1 and normalizes the
// result to sum 1. reg = 0 demands a nonsingular Gram matrix.
Eigen::VectorXd solve_weights(const Eigen::MatrixXd& X, int64_t i,
                              const std::vector<int64_t>& neighbors, double reg = 1e-3);

WeightMatrix build_weights(const Eigen::MatrixXd& X, int64_t k_neighbors, double reg = 1e-3);

// Embedding into k dimensions: eigenvectors of (I-W)^T (I-W) for the k
// smallest eigenvalues after deflating the constant direction. Columns are
// zero-mean; (1/m) Y^T Y = I.
Eigen::MatrixXd embed(const WeightMatrix& weights, int64_t k);

// sum_i || X_i - sum_j W_ij X_j ||^2 for any coordinate matrix.
double reconstruction_objective(const Eigen::MatrixXd& coords, const Eigen::MatrixXd& W);

// || x_i - sum_j w_j x_{n_j} ||^2 for a single row.
double row_objective(const Eigen::MatrixXd& X, int64_t i, const std::vector<int64_t>& neighbors,
                     const Eigen::VectorXd& w);

}  // namespace deeplle::lle
