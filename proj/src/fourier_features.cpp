#include "leand/fourier_features.hpp"

#include "leand/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace leand {
namespace {

// cos/sin of the affine projections for the first and second member of
// every pair.
struct PairProjections {
  Matrix first;   // P x D
  Matrix second;  // P x D
};

PairProjections project_pairs(const FeatureMap& map, const Matrix& latents, const std::vector<IndexPair>& pairs,
                              Matrix* first_rows, Matrix* second_rows) {
  const auto n = static_cast<Index>(pairs.size());
  Matrix xi(n, latents.cols());
  Matrix xj(n, latents.cols());
  for (Index p = 0; p < n; ++p) {
    xi.row(p) = latents.row(pairs[static_cast<std::size_t>(p)].first);
    xj.row(p) = latents.row(pairs[static_cast<std::size_t>(p)].second);
  }
  PairProjections proj;
  proj.first = xi * map.weights.transpose();
  proj.first.rowwise() += map.offsets.transpose();
  proj.second = xj * map.weights.transpose();
  proj.second.rowwise() += map.offsets.transpose();
  if (first_rows) *first_rows = std::move(xi);
  if (second_rows) *second_rows = std::move(xj);
  return proj;
}

Vector exact_pair_kernel(const Matrix& latents, const std::vector<IndexPair>& pairs, double gamma) {
  Vector k(static_cast<Index>(pairs.size()));
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    k(static_cast<Index>(p)) =
        std::exp(-gamma * (latents.row(pairs[p].first) - latents.row(pairs[p].second)).squaredNorm());
  }
  return k;
}

void check_map(const FeatureMap& map, Index input_dim) {
  require_shape(input_dim == map.input_dim(), "feature map expects inputs of length " +
                                                  std::to_string(map.input_dim()) + ", got " +
                                                  std::to_string(input_dim));
}

}  // namespace

double gaussian_kernel(const Vector& x, const Vector& y, double gamma) {
  if (!(gamma > 0.0)) throw ConfigError("kernel bandwidth gamma must be positive");
  require_shape(x.size() == y.size(), "gaussian_kernel: length mismatch");
  return std::exp(-gamma * (x - y).squaredNorm());
}

double gamma_from_sigma(double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
  return 1.0 / (2.0 * sigma * sigma);
}

FeatureMap sample_rff(Index input_dim, Index feature_dim, double gamma, std::uint64_t seed) {
  if (input_dim < 1 || feature_dim < 1) throw ConfigError("feature map dimensions must be positive");
  if (!(gamma > 0.0)) throw ConfigError("kernel bandwidth gamma must be positive");
  FeatureMap map;
  map.gamma = gamma;
  map.scaling = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  map.weights.resize(feature_dim, input_dim);
  map.offsets.resize(feature_dim);
  Rng rng(seed);
  const double sd = std::sqrt(2.0 * gamma);
  for (Index r = 0; r < feature_dim; ++r) {
    for (Index c = 0; c < input_dim; ++c) map.weights(r, c) = sd * rng.normal();
  }
  for (Index r = 0; r < feature_dim; ++r) map.offsets(r) = rng.uniform(0.0, 2.0 * std::numbers::pi);
  return map;
}

Vector phi(const FeatureMap& map, const Vector& x) {
  check_map(map, x.size());
  const Vector proj = map.weights * x + map.offsets;
  return (map.scaling * std::numbers::sqrt2) * proj.array().cos().matrix();
}

Matrix phi_rows(const FeatureMap& map, const Matrix& rows) {
  check_map(map, rows.cols());
  Matrix proj = rows * map.weights.transpose();
  proj.rowwise() += map.offsets.transpose();
  return (map.scaling * std::numbers::sqrt2) * proj.array().cos().matrix();
}

Vector normalize_phi(const Vector& v) {
  const double n = v.norm();
  if (!(n > 0.0)) throw NumericalError("cannot normalize a zero feature vector");
  return v / n;
}

Matrix normalize_rows(const Matrix& rows) {
  Matrix out = rows;
  for (Index i = 0; i < rows.rows(); ++i) {
    const double n = rows.row(i).norm();
    if (!(n > 0.0)) throw NumericalError("cannot normalize a zero feature vector (row " + std::to_string(i) + ")");
    out.row(i) /= n;
  }
  return out;
}

std::vector<IndexPair> sample_pairs(Index n, std::size_t count, std::uint64_t seed) {
  if (n < 2) throw ConfigError("pair sampling needs at least two points");
  const auto un = static_cast<std::uint64_t>(n);
  const std::uint64_t total = un * (un - 1) / 2;
  Rng rng(seed);
  std::vector<IndexPair> pairs;
  if (count * 2 >= total) {
    pairs.reserve(total);
    for (Index i = 0; i < n; ++i) {
      for (Index j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    }
    rng.shuffle(pairs.begin(), pairs.end());
    if (count < pairs.size()) pairs.resize(count);
    return pairs;
  }
  std::set<std::uint64_t> seen;
  pairs.reserve(count);
  while (pairs.size() < count) {
    auto i = rng.below(un);
    auto j = rng.below(un);
    if (i == j) continue;
    if (i > j) std::swap(i, j);
    if (seen.insert(i * un + j).second) pairs.emplace_back(static_cast<Index>(i), static_cast<Index>(j));
  }
  return pairs;
}

double pair_loss(const FeatureMap& map, const Matrix& latents, const std::vector<IndexPair>& pairs) {
  check_map(map, latents.cols());
  if (pairs.empty()) return 0.0;
  const auto proj = project_pairs(map, latents, pairs, nullptr, nullptr);
  const double c = 2.0 * map.scaling * map.scaling;
  const Vector approx = c * (proj.first.array().cos() * proj.second.array().cos()).rowwise().sum().matrix();
  const Vector exact = exact_pair_kernel(latents, pairs, map.gamma);
  return (approx - exact).squaredNorm() / static_cast<double>(pairs.size());
}

double pair_loss_gradient(const FeatureMap& map, const Matrix& latents, const std::vector<IndexPair>& pairs,
                          PairLossGradient& grad) {
  check_map(map, latents.cols());
  grad.weights = Matrix::Zero(map.weights.rows(), map.weights.cols());
  grad.offsets = Vector::Zero(map.offsets.size());
  if (pairs.empty()) return 0.0;
  Matrix xi, xj;
  const auto proj = project_pairs(map, latents, pairs, &xi, &xj);
  const Eigen::ArrayXXd cos_a = proj.first.array().cos();
  const Eigen::ArrayXXd cos_b = proj.second.array().cos();
  const double c = 2.0 * map.scaling * map.scaling;
  const Vector approx = c * (cos_a * cos_b).rowwise().sum().matrix();
  const Vector residual = approx - exact_pair_kernel(latents, pairs, map.gamma);
  const auto n = static_cast<double>(pairs.size());

  // dL/d approx_p = 2 r_p / P, then through cos(a) cos(b).
  const Eigen::ArrayXd upstream = (2.0 / n) * residual.array();
  Matrix grad_a = (-c * (proj.first.array().sin() * cos_b)).colwise() * upstream;
  Matrix grad_b = (-c * (cos_a * proj.second.array().sin())).colwise() * upstream;
  grad.weights.noalias() = grad_a.transpose() * xi + grad_b.transpose() * xj;
  grad.offsets = (grad_a + grad_b).colwise().sum().transpose();
  return residual.squaredNorm() / n;
}

AffResult train_aff(const FeatureMap& initial, const Matrix& latents, const AffOptions& options) {
  check_map(initial, latents.cols());
  const Index n = latents.rows();
  if (n < 2) throw ConfigError("adaptive Fourier features need at least two latent points");
  const std::size_t train_count =
      options.pairs > 0 ? options.pairs : std::min<std::size_t>(10 * static_cast<std::size_t>(n), 50000);
  const auto holdout_count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(options.holdout_fraction * static_cast<double>(train_count))));

  auto pairs = sample_pairs(n, train_count + holdout_count, options.seed);
  // Small sets may not have enough distinct pairs; keep the 4:1 ratio.
  const std::size_t holdout_size =
      pairs.size() < train_count + holdout_count ? std::max<std::size_t>(1, pairs.size() / 5) : holdout_count;
  std::vector<IndexPair> holdout(pairs.end() - static_cast<long>(holdout_size), pairs.end());
  pairs.resize(pairs.size() - holdout_size);
  if (pairs.empty()) pairs = holdout;

  AffResult result;
  result.map = initial;
  result.train_mse_initial = pair_loss(initial, latents, pairs);
  result.holdout_mse_initial = pair_loss(initial, latents, holdout);
  result.train_mse_final = result.train_mse_initial;
  result.holdout_mse_final = result.holdout_mse_initial;

  FeatureMap current = initial;
  const Index n_weights = current.weights.size();
  Vector flat(n_weights + current.offsets.size());
  flat.head(n_weights) = current.weights.reshaped();
  flat.tail(current.offsets.size()) = current.offsets;
  Optimizer optimizer({options.optimizer, options.learning_rate}, flat.size());
  Rng rng(Rng::derive(options.seed, 1));
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);

  PairLossGradient grad;
  Vector flat_grad(flat.size());
  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    rng.shuffle(pairs.begin(), pairs.end());
    for (std::size_t start = 0; start < pairs.size(); start += batch) {
      const std::vector<IndexPair> chunk(pairs.begin() + static_cast<long>(start),
                                         pairs.begin() + static_cast<long>(std::min(pairs.size(), start + batch)));
      const double loss = pair_loss_gradient(current, latents, chunk, grad);
      if (!std::isfinite(loss)) throw NumericalError("adaptive Fourier feature loss is not finite");
      flat_grad.head(n_weights) = grad.weights.reshaped();
      flat_grad.tail(grad.offsets.size()) = grad.offsets;
      optimizer.step(flat, flat_grad);
      current.weights.reshaped() = flat.head(n_weights);
      current.offsets = flat.tail(current.offsets.size());
    }
    const double held = pair_loss(current, latents, holdout);
    if (!std::isfinite(held)) throw NumericalError("adaptive Fourier feature loss is not finite");
    if (held < result.holdout_mse_final) {
      result.map = current;
      result.holdout_mse_final = held;
      result.best_epoch = epoch;
    }
  }
  result.train_mse_final = pair_loss(result.map, latents, pairs);
  return result;
}

}  // namespace leand
