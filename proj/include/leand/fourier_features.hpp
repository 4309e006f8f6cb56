#pragma once

#include "leand/common.hpp"
#include "leand/optimizer.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace leand {

/// exp(-gamma * ||x - y||^2)
double gaussian_kernel(const Vector& x, const Vector& y, double gamma);

/// Bandwidth convention shared by the pipeline: gamma = 1 / (2 sigma^2).
double gamma_from_sigma(double sigma);

/// Explicit feature map phi(x)_j = scaling * sqrt(2) * cos(w_j . x + b_j).
///
/// With w_j ~ N(0, 2 gamma I), b_j ~ U[0, 2 pi) and scaling = 1/sqrt(D),
/// <phi(x), phi(y)> is an unbiased estimate of exp(-gamma ||x - y||^2).
struct FeatureMap {
  Matrix weights;  // D x m
  Vector offsets;  // D
  double scaling = 1.0;
  double gamma = 1.0;

  Index dim() const { return weights.rows(); }
  Index input_dim() const { return weights.cols(); }
};

FeatureMap sample_rff(Index input_dim, Index feature_dim, double gamma, std::uint64_t seed);

Vector phi(const FeatureMap& map, const Vector& x);

/// phi applied to every row (count x D).
Matrix phi_rows(const FeatureMap& map, const Matrix& rows);

/// v / ||v||. Throws on a zero vector.
Vector normalize_phi(const Vector& v);

/// Row-wise normalize_phi.
Matrix normalize_rows(const Matrix& rows);

using IndexPair = std::pair<Index, Index>;

/// Distinct unordered pairs (i < j) of [0, n), drawn uniformly without
/// replacement. Returns every pair when `count` exceeds n(n-1)/2.
std::vector<IndexPair> sample_pairs(Index n, std::size_t count, std::uint64_t seed);

/// Mean squared gap between the exact kernel and the map's inner product.
double pair_loss(const FeatureMap& map, const Matrix& latents, const std::vector<IndexPair>& pairs);

struct PairLossGradient {
  Matrix weights;
  Vector offsets;
};

/// pair_loss and its gradient with respect to (weights, offsets).
double pair_loss_gradient(const FeatureMap& map, const Matrix& latents, const std::vector<IndexPair>& pairs,
                          PairLossGradient& grad);

struct AffOptions {
  /// Training pairs; 0 means min(10 N, 50000).
  std::size_t pairs = 0;
  /// Held-out pairs as a fraction of the training pairs.
  double holdout_fraction = 0.25;
  int epochs = 30;
  double learning_rate = 5e-3;
  std::size_t batch_size = 256;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::uint64_t seed = 0;
};

struct AffResult {
  FeatureMap map;
  double train_mse_initial = 0.0;
  double train_mse_final = 0.0;
  double holdout_mse_initial = 0.0;
  double holdout_mse_final = 0.0;
  int best_epoch = 0;  // 0 = the initial map was kept
};

/// Fine-tunes (weights, offsets) by gradient descent on the pair loss. The
/// returned map is the iterate with the lowest held-out pair loss, so it
/// never does worse there than the initial map.
AffResult train_aff(const FeatureMap& initial, const Matrix& latents, const AffOptions& options);

}  // namespace leand
