#include "leand/density_matrix.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace leand {
namespace {

void check_unit_rows(const Matrix& features) {
  for (Index i = 0; i < features.rows(); ++i) {
    const double n = features.row(i).norm();
    if (std::abs(n - 1.0) > 1e-6) {
      throw ConfigError("feature row " + std::to_string(i) + " has norm " + std::to_string(n) +
                        "; density matrices need unit-norm features");
    }
  }
}

// Flip each eigenvector so that its largest-magnitude entry is positive.
void canonical_signs(Matrix& rows) {
  for (Index k = 0; k < rows.rows(); ++k) {
    Index arg = 0;
    rows.row(k).cwiseAbs().maxCoeff(&arg);
    if (rows(k, arg) < 0.0) rows.row(k) *= -1.0;
  }
}

void check_rank(Index rank, Index dim) {
  if (rank < 1 || rank > dim) {
    throw ConfigError("rank must lie in [1, " + std::to_string(dim) + "], got " + std::to_string(rank));
  }
}

}  // namespace

double kde_normalizer(double gamma, Index input_dim) {
  if (!(gamma > 0.0)) throw ConfigError("kernel bandwidth gamma must be positive");
  return std::pow(std::numbers::pi / gamma, 0.5 * static_cast<double>(input_dim));
}

FullDensityMatrix build_rho(const Matrix& features) {
  if (features.rows() == 0) throw ConfigError("density matrix needs at least one feature vector");
  check_unit_rows(features);
  FullDensityMatrix out;
  out.rho = Matrix::Zero(features.cols(), features.cols());
  out.rho.selfadjointView<Eigen::Lower>().rankUpdate(features.transpose(), 1.0 / static_cast<double>(features.rows()));
  out.rho.triangularView<Eigen::StrictlyUpper>() = out.rho.transpose();
  return out;
}

DensityModel eig_factorize(const FullDensityMatrix& rho, Index rank) {
  require_shape(rho.rho.rows() == rho.rho.cols(), "density matrix must be square");
  check_rank(rank, rho.rho.rows());
  const Eigen::SelfAdjointEigenSolver<Matrix> solver(rho.rho);
  if (solver.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed");
  const Index d = rho.rho.rows();
  DensityModel model;
  model.eigvecs.resize(rank, d);
  model.eigvals.resize(rank);
  for (Index k = 0; k < rank; ++k) {
    // Eigen sorts ascending.
    model.eigvals(k) = std::max(0.0, solver.eigenvalues()(d - 1 - k));
    model.eigvecs.row(k) = solver.eigenvectors().col(d - 1 - k).transpose();
  }
  canonical_signs(model.eigvecs);
  return model;
}

DensityModel factorize_features(const Matrix& features, Index rank) {
  if (features.rows() == 0) throw ConfigError("density matrix needs at least one feature vector");
  check_unit_rows(features);
  const Index n = features.rows();
  const Index d = features.cols();
  check_rank(rank, d);
  if (n >= d || rank > n) return eig_factorize(build_rho(features), rank);

  // rho = Phi^T Phi / N shares its nonzero spectrum with Phi Phi^T / N.
  const Matrix gram = features * features.transpose() / static_cast<double>(n);
  const Eigen::SelfAdjointEigenSolver<Matrix> solver(gram);
  if (solver.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed");
  DensityModel model;
  model.eigvecs.resize(rank, d);
  model.eigvals.resize(rank);
  for (Index k = 0; k < rank; ++k) {
    const double lambda = solver.eigenvalues()(n - 1 - k);
    if (lambda <= 1e-12) return eig_factorize(build_rho(features), rank);
    const Vector v = features.transpose() * solver.eigenvectors().col(n - 1 - k);
    model.eigvecs.row(k) = v.normalized().transpose();
    model.eigvals(k) = lambda;
  }
  canonical_signs(model.eigvecs);
  return model;
}

DensityModel initialize_density(const Matrix& features, Index rank, double gamma, double normalizer) {
  DensityModel model = factorize_features(features, rank);
  const double total = model.eigvals.sum();
  if (!(total > 0.0)) throw NumericalError("density matrix has no positive eigenvalue");
  model.eigvals /= total;
  model.gamma = gamma;
  model.normalizer = normalizer;
  return model;
}

double density_full(const FullDensityMatrix& rho, const Vector& phi, double normalizer) {
  require_shape(rho.rho.rows() == phi.size(), "density_full: feature length mismatch");
  return phi.dot(rho.rho * phi) / normalizer;
}

double density_lowrank(const DensityModel& model, const Vector& phi) {
  require_shape(model.dim() == phi.size(), "density_lowrank: feature length mismatch");
  if ((model.eigvals.array() < 0.0).any()) throw NumericalError("density model has a negative eigenvalue");
  const Vector proj = model.eigvecs * phi;
  return model.eigvals.dot(proj.cwiseProduct(proj)) / model.normalizer;
}

Vector density_lowrank_rows(const DensityModel& model, const Matrix& phis) {
  require_shape(model.dim() == phis.cols(), "density_lowrank: feature length mismatch");
  if ((model.eigvals.array() < 0.0).any()) throw NumericalError("density model has a negative eigenvalue");
  const Matrix proj = phis * model.eigvecs.transpose();
  return proj.array().square().matrix() * model.eigvals / model.normalizer;
}

double exact_kde(const Matrix& train, const Vector& query, double gamma) {
  if (train.rows() == 0) throw ConfigError("exact_kde needs at least one training point");
  if (!(gamma > 0.0)) throw ConfigError("kernel bandwidth gamma must be positive");
  require_shape(train.cols() == query.size(), "exact_kde: dimension mismatch");
  const Vector sq = (train.rowwise() - query.transpose()).rowwise().squaredNorm();
  const double sum = (-gamma * sq.array()).exp().sum();
  return sum / (static_cast<double>(train.rows()) * kde_normalizer(gamma, train.cols()));
}

double nll(const DensityModel& model, const Matrix& phis) {
  require_shape(model.dim() == phis.cols(), "nll: feature length mismatch");
  const Matrix proj = phis * model.eigvecs.transpose();
  const Vector raw = proj.array().square().matrix() * model.eigvals;
  double total = 0.0;
  for (Index i = 0; i < raw.size(); ++i) total -= std::log(std::max(raw(i), kDensityFloor));
  return total + static_cast<double>(raw.size()) * std::log(model.normalizer);
}

Vector eigval_params(const DensityModel& model) { return model.eigvals.cwiseMax(0.0).cwiseSqrt(); }

void set_eigval_params(DensityModel& model, const Vector& theta) {
  require_shape(theta.size() == model.rank(), "eigenvalue parameter count mismatch");
  model.eigvals = theta.cwiseProduct(theta);
}

double nll_gradient(const DensityModel& model, const Matrix& phis, DensityGradient& grad, Matrix* grad_phis) {
  require_shape(model.dim() == phis.cols(), "nll: feature length mismatch");
  const Matrix proj = phis * model.eigvecs.transpose();  // N x r
  const Vector raw = proj.array().square().matrix() * model.eigvals;
  Vector weight(raw.size());  // d(-log raw_i) / d raw_i, zero where floored
  double total = 0.0;
  for (Index i = 0; i < raw.size(); ++i) {
    const bool floored = raw(i) < kDensityFloor;
    total -= std::log(floored ? kDensityFloor : raw(i));
    weight(i) = floored ? 0.0 : -1.0 / raw(i);
  }
  total += static_cast<double>(raw.size()) * std::log(model.normalizer);

  // d raw_i / d V_k = 2 lambda_k p_ik phi_i, d raw_i / d theta_k = 2 theta_k p_ik^2.
  const Matrix weighted = proj.array().colwise() * weight.array();  // w_i p_ik
  const Matrix scaled = weighted * model.eigvals.asDiagonal();      // w_i lambda_k p_ik
  grad.eigvecs.noalias() = 2.0 * scaled.transpose() * phis;
  const Vector theta = eigval_params(model);
  grad.eigval_params = 2.0 * theta.cwiseProduct((proj.array().square().colwise() * weight.array()).colwise().sum().transpose().matrix());
  if (grad_phis) grad_phis->noalias() = 2.0 * scaled * model.eigvecs;
  return total;
}

void renormalize(DensityModel& model) {
  const double total = model.eigvals.sum();
  if (!(total > 0.0) || !std::isfinite(total)) throw NumericalError("eigenvalues collapsed during training");
  model.eigvals /= total;
  for (Index k = 0; k < model.rank(); ++k) {
    const double n = model.eigvecs.row(k).norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw NumericalError("eigenvector collapsed during training");
    model.eigvecs.row(k) /= n;
  }
}

void project_gradient(const DensityModel& model, DensityGradient& grad) {
  for (Index k = 0; k < model.rank(); ++k) {
    const auto v = model.eigvecs.row(k);
    grad.eigvecs.row(k) -= grad.eigvecs.row(k).dot(v) / v.squaredNorm() * v;
  }
  const Vector theta = eigval_params(model);
  const double tt = theta.squaredNorm();
  if (tt > 0.0) grad.eigval_params -= grad.eigval_params.dot(theta) / tt * theta;
}

DensityTrainResult train_density(DensityModel model, const Matrix& phis, const DensityTrainOptions& options) {
  if (phis.rows() == 0) throw ConfigError("train_density: empty batch");
  const auto n = static_cast<double>(phis.rows());
  DensityTrainResult result;
  result.mean_nll.push_back(nll(model, phis) / n);

  const Index nv = model.eigvecs.size();
  Vector flat(nv + model.rank());
  flat.head(nv) = model.eigvecs.reshaped();
  flat.tail(model.rank()) = eigval_params(model);
  Optimizer optimizer({options.optimizer, options.learning_rate}, flat.size());
  DensityGradient grad;
  Vector flat_grad(flat.size());
  for (int step = 0; step < options.steps; ++step) {
    nll_gradient(model, phis, grad);
    project_gradient(model, grad);
    flat_grad.head(nv) = grad.eigvecs.reshaped() / n;
    flat_grad.tail(model.rank()) = grad.eigval_params / n;
    optimizer.step(flat, flat_grad);
    model.eigvecs.reshaped() = flat.head(nv);
    set_eigval_params(model, flat.tail(model.rank()));
    renormalize(model);
    flat.head(nv) = model.eigvecs.reshaped();
    flat.tail(model.rank()) = eigval_params(model);
    const double value = nll(model, phis) / n;
    if (!std::isfinite(value)) {
      throw NumericalError("density training diverged at step " + std::to_string(step + 1));
    }
    result.mean_nll.push_back(value);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace leand
