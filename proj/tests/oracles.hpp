#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. None of these call into the code they check beyond
// the function under test.

#include "leand/autoencoder.hpp"
#include "leand/density_matrix.hpp"
#include "leand/detector.hpp"
#include "leand/fourier_features.hpp"
#include "leand/random.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace leand::oracle {

/// Central-difference gradient of f at x.
inline Vector numeric_gradient(const std::function<double(const Vector&)>& f, Vector x, double eps = 1e-5) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double keep = x(i);
    x(i) = keep + eps;
    const double up = f(x);
    x(i) = keep - eps;
    const double down = f(x);
    x(i) = keep;
    g(i) = (up - down) / (2.0 * eps);
  }
  return g;
}

struct GradientCheck {
  double max_relative = 0.0;
  double max_absolute = 0.0;
  Index worst = -1;
};

/// Elementwise relative error |a - n| / max(|a|, |n|). Components where
/// both are below `floor` in magnitude are compared absolutely instead,
/// since their relative error is dominated by rounding.
inline GradientCheck compare_gradients(const Vector& analytic, const Vector& numeric, double floor = 1e-7) {
  GradientCheck out;
  for (Index i = 0; i < analytic.size(); ++i) {
    const double diff = std::abs(analytic(i) - numeric(i));
    const double scale = std::max(std::abs(analytic(i)), std::abs(numeric(i)));
    if (scale < floor) {
      out.max_absolute = std::max(out.max_absolute, diff);
      continue;
    }
    if (diff / scale > out.max_relative) {
      out.max_relative = diff / scale;
      out.worst = i;
    }
  }
  return out;
}


/// Eigenvalues of a symmetric PSD matrix by power iteration with
/// Hotelling deflation, largest first.
inline std::vector<double> power_iteration_eigenvalues(Matrix a, int iterations = 20000) {
  std::vector<double> values;
  for (Index k = 0; k < a.rows(); ++k) {
    Vector v = Vector::Ones(a.rows());
    v(k) += 0.5;  // avoid starting orthogonal to the top eigenvector
    v.normalize();
    double lambda = 0.0;
    for (int it = 0; it < iterations; ++it) {
      Vector w = a * v;
      const double n = w.norm();
      if (n == 0.0) break;
      v = w / n;
    }
    lambda = v.dot(a * v);
    values.push_back(lambda);
    a -= lambda * v * v.transpose();
  }
  return values;
}

/// Composite trapezoid rule on [lo, hi] with `n` intervals.
inline double trapezoid(const std::function<double(double)>& f, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double s = 0.5 * (f(lo) + f(hi));
  for (int i = 1; i < n; ++i) s += f(lo + i * h);
  return s * h;
}

/// Closed-form exp(-gamma ||x - y||^2), written out independently.
inline double kernel(const Vector& x, const Vector& y, double gamma) {
  double s = 0.0;
  for (Index i = 0; i < x.size(); ++i) s += (x(i) - y(i)) * (x(i) - y(i));
  return std::exp(-gamma * s);
}

struct ErrorStats {
  double mean = 0.0;
  double max = 0.0;
};

/// |<phi(x), phi(y)> - k(x, y)| over `pairs` pairs of standard normal points.
inline ErrorStats kernel_approximation(Index m, double gamma, Index features, int pairs, std::uint64_t seed) {
  const auto map = sample_rff(m, features, gamma, Rng::derive(seed, 1));
  Rng rng(Rng::derive(seed, 2));
  ErrorStats s;
  for (int p = 0; p < pairs; ++p) {
    Vector x(m), y(m);
    for (Index i = 0; i < m; ++i) {
      x(i) = rng.normal();
      y(i) = rng.normal();
    }
    const double err = std::abs(phi(map, x).dot(phi(map, y)) - kernel(x, y, gamma));
    s.mean += err / pairs;
    s.max = std::max(s.max, err);
  }
  return s;
}

/// Two-component Gaussian mixture in `dim` dimensions.
inline Matrix mixture(Index n, Index dim, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(n, dim);
  for (Index i = 0; i < n; ++i) {
    const double centre = rng.uniform() < 0.4 ? -2.0 : 1.5;
    for (Index j = 0; j < dim; ++j) x(i, j) = (j == 0 ? centre : 0.0) + (j == 0 ? 0.8 : 1.0) * rng.normal();
  }
  return x;
}

/// Median relative error between the density-matrix estimate (full rank,
/// normalized features from a map built for gamma / 2) and exact Gaussian
/// KDE with bandwidth gamma, over `queries` points from the same mixture.
inline double proposition_one_error(Index dim, double gamma, Index features, Index n, int queries,
                                    std::uint64_t seed) {
  const Matrix train = mixture(n, dim, Rng::derive(seed, 1));
  const Matrix query = mixture(queries, dim, Rng::derive(seed, 2));
  const auto map = sample_rff(dim, features, gamma / 2.0, Rng::derive(seed, 3));
  const auto rho = build_rho(normalize_rows(phi_rows(map, train)));
  const double m_gamma = kde_normalizer(gamma, dim);
  std::vector<double> rel;
  for (Index q = 0; q < query.rows(); ++q) {
    const Vector x = query.row(q).transpose();
    double exact = 0.0;
    for (Index i = 0; i < train.rows(); ++i) exact += kernel(train.row(i).transpose(), x, gamma);
    exact /= static_cast<double>(train.rows()) * m_gamma;
    const double approx = density_full(rho, normalize_phi(phi(map, x)), m_gamma);
    rel.push_back(std::abs(approx - exact) / exact);
  }
  std::nth_element(rel.begin(), rel.begin() + static_cast<long>(rel.size() / 2), rel.end());
  return rel[rel.size() / 2];
}

/// Worst elementwise relative error of each analytic gradient against
/// central differences, on small fixed instances.
inline GradientCheck reconstruction_gradient_check(std::uint64_t seed) {
  Architecture arch;
  arch.input_dim = 5;
  arch.encoder_sizes = {4, 2};
  arch.activation = Activation::tanh;
  auto params = init_autoencoder(arch, seed);
  Rng rng(Rng::derive(seed, 1));
  const Matrix x = Matrix::NullaryExpr(8, 5, [&] { return rng.normal(); });
  return compare_gradients(reconstruction_loss_gradient(params, x), numeric_gradient(
                                                                        [&](const Vector& w) {
                                                                          auto q = params;
                                                                          q.assign(w);
                                                                          return reconstruction_loss(q, x);
                                                                        },
                                                                        params.flatten()));
}

inline GradientCheck pair_loss_gradient_check(std::uint64_t seed) {
  Rng rng(Rng::derive(seed, 1));
  const Matrix latents = Matrix::NullaryExpr(12, 3, [&] { return rng.normal(); });
  const auto pairs = sample_pairs(12, 30, Rng::derive(seed, 2));
  const auto map = sample_rff(3, 8, 0.7, Rng::derive(seed, 3));
  PairLossGradient grad;
  pair_loss_gradient(map, latents, pairs, grad);
  Vector analytic(map.weights.size() + map.offsets.size());
  analytic << grad.weights.reshaped(), grad.offsets;
  Vector flat(analytic.size());
  flat << map.weights.reshaped(), map.offsets;
  return compare_gradients(analytic, numeric_gradient(
                                         [&](const Vector& w) {
                                           FeatureMap m = map;
                                           m.weights.reshaped() = w.head(map.weights.size());
                                           m.offsets = w.tail(map.offsets.size());
                                           return pair_loss(m, latents, pairs);
                                         },
                                         flat));
}

inline GradientCheck nll_gradient_check(std::uint64_t seed) {
  Rng rng(Rng::derive(seed, 1));
  const Matrix data = normalize_rows(Matrix::NullaryExpr(5, 6, [&] { return rng.normal(); }));
  const Matrix phis = normalize_rows(Matrix::NullaryExpr(7, 6, [&] { return rng.normal(); }));
  DensityModel m = eig_factorize(build_rho(data), 3);
  m.normalizer = 2.5;
  m.eigvecs += 0.2 * Matrix::NullaryExpr(3, 6, [&] { return rng.normal(); });
  DensityGradient g;
  Matrix gphi;
  nll_gradient(m, phis, g, &gphi);
  const Index nv = m.eigvecs.size();
  const Index nt = m.eigvals.size();
  Vector analytic(nv + nt + phis.size());
  analytic << g.eigvecs.reshaped(), g.eigval_params, gphi.reshaped();
  Vector flat(analytic.size());
  flat << m.eigvecs.reshaped(), eigval_params(m), phis.reshaped();
  return compare_gradients(analytic, numeric_gradient(
                                         [&](const Vector& w) {
                                           DensityModel c = m;
                                           c.eigvecs.reshaped() = w.head(nv);
                                           set_eigval_params(c, w.segment(nv, nt));
                                           return nll(c, w.tail(phis.size()).reshaped(phis.rows(), phis.cols()));
                                         },
                                         flat));
}

/// Joint loss on d = 5, p = 2, D = 8, r = 3, N = 16, differentiated with
/// respect to the autoencoder, the density and the feature map at once.
inline GradientCheck joint_gradient_check(std::uint64_t seed, JointWeights weights = {0.5, 1.0}) {
  Architecture arch;
  arch.input_dim = 5;
  arch.encoder_sizes = {4, 2};
  arch.activation = Activation::tanh;
  Rng rng(Rng::derive(seed, 1));
  const Matrix x = Matrix::NullaryExpr(16, 5, [&] { return rng.normal(); });
  JointState s;
  s.autoencoder = init_autoencoder(arch, Rng::derive(seed, 2));
  s.feature_map = sample_rff(4, 8, 0.25, Rng::derive(seed, 3));
  const Matrix unit = normalize_rows(phi_rows(s.feature_map, augmented_rows(s.autoencoder, x)));
  s.density = initialize_density(unit, 3, 0.5, kde_normalizer(0.5, 4));
  s.density.eigvecs += 0.1 * Matrix::NullaryExpr(3, 8, [&] { return rng.normal(); });

  JointGradient g;
  joint_loss_gradient(s, x, weights, g);
  const Index na = s.autoencoder.parameter_count();
  const Index nv = s.density.eigvecs.size();
  const Index nt = s.density.eigvals.size();
  const Index nw = s.feature_map.weights.size();
  const Index nb = s.feature_map.offsets.size();
  Vector analytic(na + nv + nt + nw + nb);
  analytic << g.autoencoder.flatten(), g.density.eigvecs.reshaped(), g.density.eigval_params,
      g.feature_map.weights.reshaped(), g.feature_map.offsets;
  Vector flat(analytic.size());
  flat << s.autoencoder.flatten(), s.density.eigvecs.reshaped(), eigval_params(s.density),
      s.feature_map.weights.reshaped(), s.feature_map.offsets;
  return compare_gradients(analytic, numeric_gradient(
                                         [&](const Vector& w) {
                                           JointState c = s;
                                           c.autoencoder.assign(w.head(na));
                                           c.density.eigvecs.reshaped() = w.segment(na, nv);
                                           set_eigval_params(c.density, w.segment(na + nv, nt));
                                           c.feature_map.weights.reshaped() = w.segment(na + nv + nt, nw);
                                           c.feature_map.offsets = w.tail(nb);
                                           return joint_loss(c, x, weights);
                                         },
                                         flat));
}

}  // namespace leand::oracle
