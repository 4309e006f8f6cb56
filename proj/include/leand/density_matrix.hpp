#pragma once

#include "leand/common.hpp"
#include "leand/optimizer.hpp"

#include <vector>

namespace leand {

/// Lower bound applied to the projection value before taking logs.
inline constexpr double kDensityFloor = 1e-12;

/// rho = (1/N) sum_i phi_i phi_i^T over unit-norm feature vectors.
struct FullDensityMatrix {
  Matrix rho;  // D x D, symmetric, unit trace
};

/// Rank-r factorization rho ~= V^T diag(Lambda) V.
struct DensityModel {
  Matrix eigvecs;  // r x D, one eigenvector per row
  Vector eigvals;  // r, nonnegative
  double normalizer = 1.0;  // M_gamma
  double gamma = 1.0;       // KDE bandwidth the model stands in for

  Index rank() const { return eigvecs.rows(); }
  Index dim() const { return eigvecs.cols(); }
};

/// (pi / gamma)^(m / 2): makes the Gaussian KDE integrate to one over R^m.
double kde_normalizer(double gamma, Index input_dim);

/// Rows of `features` must have unit norm (within 1e-6).
FullDensityMatrix build_rho(const Matrix& features);

/// Top-r eigenpairs of rho, eigenvalues descending and clipped at zero.
DensityModel eig_factorize(const FullDensityMatrix& rho, Index rank);

/// Same result as eig_factorize(build_rho(features), rank) but diagonalizes
/// the N x N Gram matrix when that side is smaller.
DensityModel factorize_features(const Matrix& features, Index rank);

/// Factorization of the data density matrix with eigenvalues rescaled to
/// sum to one; the starting point for likelihood training.
DensityModel initialize_density(const Matrix& features, Index rank, double gamma, double normalizer);

/// (1/M) phi^T rho phi
double density_full(const FullDensityMatrix& rho, const Vector& phi, double normalizer);

/// (1/M) ||Lambda^{1/2} V phi||^2
double density_lowrank(const DensityModel& model, const Vector& phi);

/// density_lowrank for every row of `phis`.
Vector density_lowrank_rows(const DensityModel& model, const Matrix& phis);

/// Gaussian KDE with bandwidth gamma, normalized by kde_normalizer.
double exact_kde(const Matrix& train, const Vector& query, double gamma);

/// -sum_i log f(x_i), each projection value floored at kDensityFloor.
double nll(const DensityModel& model, const Matrix& phis);

/// Trainable eigenvalue parameters theta with Lambda = theta^2.
Vector eigval_params(const DensityModel& model);
void set_eigval_params(DensityModel& model, const Vector& theta);

struct DensityGradient {
  Matrix eigvecs;       // d nll / d V
  Vector eigval_params; // d nll / d theta
};

/// nll and its gradient. When `grad_phis` is given it receives d nll / d phi
/// for every row.
double nll_gradient(const DensityModel& model, const Matrix& phis, DensityGradient& grad,
                    Matrix* grad_phis = nullptr);

/// Removes the components of the gradient that only rescale the rows of
/// V or the eigenvalue parameters. Renormalization discards those moves
/// anyway, and left in they distort adaptive optimizer steps.
void project_gradient(const DensityModel& model, DensityGradient& grad);

/// Rescales Lambda to sum to one and every row of V to unit norm, so that
/// trace(V^T Lambda V) = 1.
void renormalize(DensityModel& model);

struct DensityTrainOptions {
  int steps = 100;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
};

struct DensityTrainResult {
  DensityModel model;
  std::vector<double> mean_nll;  // before training, then after each step
};

/// Gradient descent on the mean nll over (V, theta), renormalizing after
/// every step.
DensityTrainResult train_density(DensityModel model, const Matrix& phis, const DensityTrainOptions& options);

}  // namespace leand
