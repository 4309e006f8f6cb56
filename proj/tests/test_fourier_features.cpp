#include "leand/fourier_features.hpp"
#include "leand/random.hpp"

#include "support.hpp"

#include <set>

using namespace leand;
using leand::testing::compare_gradients;
using leand::testing::numeric_gradient;

namespace {

Matrix normal_rows(Index n, Index m, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Matrix x(n, m);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = scale * rng.normal();
  return x;
}

}  // namespace

TEST(GaussianKernel, SelfSimilarityIsOne) {
  const Vector x = Eigen::Vector3d(0.3, -7.0, 2.0);
  EXPECT_EQ(gaussian_kernel(x, x, 0.7), 1.0);
}

TEST(GaussianKernel, OneDimensionalArithmetic) {
  EXPECT_NEAR(gaussian_kernel(Vector::Zero(1), Vector::Ones(1), 1.0), 0.36787944117144233, 1e-15);
}

TEST(GaussianKernel, SymmetricAndRejectsBadBandwidth) {
  const Matrix x = normal_rows(20, 3, 1);
  for (Index i = 0; i + 1 < x.rows(); ++i) {
    const Vector a = x.row(i).transpose();
    const Vector b = x.row(i + 1).transpose();
    EXPECT_EQ(gaussian_kernel(a, b, 0.4), gaussian_kernel(b, a, 0.4));
  }
  EXPECT_THROW(gaussian_kernel(Vector::Zero(2), Vector::Zero(2), 0.0), ConfigError);
  EXPECT_THROW(gaussian_kernel(Vector::Zero(2), Vector::Zero(3), 1.0), ShapeError);
}

TEST(GammaFromSigma, Convention) { EXPECT_DOUBLE_EQ(gamma_from_sigma(2.0), 0.125); }

TEST(SampleRff, SeedRepeatIsIdentical) {
  const auto a = sample_rff(4, 64, 0.5, 9);
  const auto b = sample_rff(4, 64, 0.5, 9);
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_EQ(a.offsets, b.offsets);
  EXPECT_DOUBLE_EQ(a.scaling, 1.0 / 8.0);
}

TEST(SampleRff, MomentsMatchSamplingLaw) {
  const double gamma = 1.5;
  const auto map = sample_rff(5, 4000, gamma, 2);
  const double mean = map.weights.mean();
  const double var = (map.weights.array() - mean).square().mean();
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(var, 2.0 * gamma, 0.05);
  EXPECT_GE(map.offsets.minCoeff(), 0.0);
  EXPECT_LT(map.offsets.maxCoeff(), 2.0 * std::numbers::pi);
  EXPECT_NEAR(map.offsets.mean(), std::numbers::pi, 0.1);
}

TEST(SampleRff, InvalidDimensionsRejected) {
  EXPECT_THROW(sample_rff(0, 10, 1.0, 1), ConfigError);
  EXPECT_THROW(sample_rff(3, 0, 1.0, 1), ConfigError);
  EXPECT_THROW(sample_rff(3, 10, -1.0, 1), ConfigError);
}

TEST(SampleRff, SingleFeatureIsFinite) {
  const auto map = sample_rff(4, 1, 1.0, 3);
  EXPECT_TRUE(phi(map, Vector::Random(4)).allFinite());
}

TEST(Phi, ConstantMapWithZeroParameters) {
  FeatureMap map;
  const Index D = 25;
  map.weights = Matrix::Zero(D, 3);
  map.offsets = Vector::Zero(D);
  map.scaling = 1.0 / std::sqrt(static_cast<double>(D));
  const Vector f = phi(map, Eigen::Vector3d(1, 2, 3));
  EXPECT_TRUE(f.isApproxToConstant(std::sqrt(2.0) / 5.0, 1e-15));
  EXPECT_NEAR(f.squaredNorm(), 2.0, 1e-13);
}

TEST(Phi, NormBoundedBySqrtTwo) {
  const auto map = sample_rff(3, 300, 0.8, 4);
  const Matrix x = normal_rows(50, 3, 5, 3.0);
  const Matrix f = phi_rows(map, x);
  EXPECT_LE(f.rowwise().norm().maxCoeff(), std::sqrt(2.0) + 1e-12);
  EXPECT_NEAR((f.row(7).transpose() - phi(map, x.row(7).transpose())).norm(), 0.0, 1e-14);
}

TEST(Phi, DimensionMismatchThrows) {
  const auto map = sample_rff(3, 10, 1.0, 1);
  EXPECT_THROW(phi(map, Vector::Zero(4)), ShapeError);
}

TEST(Phi, InnerProductApproximatesKernel) {
  const double gamma = 1.0;
  const auto map = sample_rff(4, 2000, gamma, 12);
  const Matrix x = normal_rows(200, 4, 13, 0.5);
  const Matrix y = normal_rows(200, 4, 14, 0.5);
  double total = 0.0;
  double worst = 0.0;
  for (Index i = 0; i < 200; ++i) {
    const Vector a = x.row(i).transpose();
    const Vector b = y.row(i).transpose();
    const double err = std::abs(phi(map, a).dot(phi(map, b)) - gaussian_kernel(a, b, gamma));
    total += err;
    worst = std::max(worst, err);
  }
  EXPECT_LT(total / 200.0, 0.02);
  EXPECT_LT(worst, 0.1);
}

TEST(NormalizePhi, KnownVector) {
  const Vector n = normalize_phi(Eigen::Vector2d(3, 4));
  EXPECT_DOUBLE_EQ(n(0), 0.6);
  EXPECT_DOUBLE_EQ(n(1), 0.8);
}

TEST(NormalizePhi, IdempotentScaleInvariantUnitNorm) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    Vector v(17);
    for (Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
    const Vector n = normalize_phi(v);
    EXPECT_NEAR(n.norm(), 1.0, 1e-12);
    EXPECT_NEAR((normalize_phi(n) - n).norm(), 0.0, 1e-15);
    EXPECT_NEAR((normalize_phi(3.7 * v) - n).norm(), 0.0, 1e-15);
    EXPECT_GT(n.dot(v), 0.0);
  }
  EXPECT_THROW(normalize_phi(Vector::Zero(4)), NumericalError);
}

TEST(SamplePairs, DistinctUnorderedWithoutReplacement) {
  for (std::size_t count : {5u, 40u, 45u}) {
    const auto pairs = sample_pairs(10, count, 7);
    ASSERT_EQ(pairs.size(), count);
    std::set<std::pair<Index, Index>> seen;
    for (const auto& p : pairs) {
      EXPECT_NE(p.first, p.second);
      EXPECT_TRUE(seen.insert({std::min(p.first, p.second), std::max(p.first, p.second)}).second);
    }
  }
  EXPECT_EQ(sample_pairs(10, 30, 1).size(), 30u);
}

TEST(PairLoss, GradientMatchesFiniteDifferences) {
  const Matrix latents = normal_rows(12, 3, 21);
  const auto pairs = sample_pairs(12, 30, 22);
  const auto map = sample_rff(3, 8, 0.7, 23);
  PairLossGradient grad;
  pair_loss_gradient(map, latents, pairs, grad);
  Vector analytic(map.weights.size() + map.offsets.size());
  analytic << grad.weights.reshaped(), grad.offsets;
  Vector flat(analytic.size());
  flat << map.weights.reshaped(), map.offsets;
  const Vector numeric = numeric_gradient(
      [&](const Vector& w) {
        FeatureMap m = map;
        m.weights.reshaped() = w.head(map.weights.size());
        m.offsets = w.tail(map.offsets.size());
        return pair_loss(m, latents, pairs);
      },
      flat);
  const auto check = compare_gradients(analytic, numeric);
  EXPECT_LT(check.max_relative, 1e-4);
  EXPECT_LT(check.max_absolute, 1e-9);
}

TEST(TrainAff, ZeroLearningRateKeepsMap) {
  const Matrix latents = normal_rows(30, 4, 1);
  const auto map = sample_rff(4, 32, 0.5, 2);
  AffOptions opt;
  opt.learning_rate = 0.0;
  opt.epochs = 3;
  const auto r = train_aff(map, latents, opt);
  EXPECT_EQ(r.map.weights, map.weights);
  EXPECT_EQ(r.map.offsets, map.offsets);
}

TEST(TrainAff, HeldOutLossNeverWorseAndUsuallyBetter) {
  const Matrix latents = normal_rows(80, 3, 31, 0.8);
  const auto map = sample_rff(3, 16, 0.5, 32);
  AffOptions opt;
  opt.seed = 33;
  opt.epochs = 40;
  opt.learning_rate = 1e-2;
  const auto r = train_aff(map, latents, opt);
  EXPECT_LE(r.holdout_mse_final, r.holdout_mse_initial);
  EXPECT_LT(r.holdout_mse_final, 0.9 * r.holdout_mse_initial);
  EXPECT_LT(r.train_mse_final, r.train_mse_initial);
  EXPECT_DOUBLE_EQ(r.map.gamma, map.gamma);
}

TEST(TrainAff, InitialisationIsTheRandomMap) {
  const Matrix latents = normal_rows(20, 2, 41);
  const auto map = sample_rff(2, 16, 0.5, 42);
  AffOptions opt;
  opt.epochs = 0;
  const auto r = train_aff(map, latents, opt);
  EXPECT_EQ(r.best_epoch, 0);
  EXPECT_EQ(r.map.weights, map.weights);
}

TEST(TrainAff, NeedsTwoPoints) {
  EXPECT_THROW(train_aff(sample_rff(2, 4, 1.0, 1), Matrix::Zero(1, 2), AffOptions{}), ConfigError);
}
