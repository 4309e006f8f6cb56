#include "leand/density_matrix.hpp"
#include "leand/fourier_features.hpp"
#include "leand/random.hpp"

#include "oracles.hpp"
#include "support.hpp"

#include <numbers>

using namespace leand;
using leand::testing::compare_gradients;
using leand::testing::numeric_gradient;

namespace {

Matrix unit_rows(Index n, Index d, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(n, d);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  return normalize_rows(x);
}

Matrix reconstruct(const DensityModel& m) { return m.eigvecs.transpose() * m.eigvals.asDiagonal() * m.eigvecs; }

}  // namespace

TEST(BuildRho, SingleBasisVector) {
  Matrix f = Matrix::Zero(1, 4);
  f(0, 0) = 1.0;
  const auto rho = build_rho(f);
  Matrix expected = Matrix::Zero(4, 4);
  expected(0, 0) = 1.0;
  EXPECT_EQ(rho.rho, expected);
  EXPECT_DOUBLE_EQ(rho.rho.trace(), 1.0);
}

TEST(BuildRho, TwoOrthogonalVectors) {
  Matrix f = Matrix::Zero(2, 3);
  f(0, 0) = 1.0;
  f(1, 1) = 1.0;
  const auto rho = build_rho(f);
  EXPECT_TRUE(rho.rho.isApprox(Eigen::Vector3d(0.5, 0.5, 0.0).asDiagonal().toDenseMatrix()));
}

TEST(BuildRho, RandomInputIsUnitTraceSymmetricPsd) {
  const auto rho = build_rho(unit_rows(40, 12, 3));
  EXPECT_NEAR(rho.rho.trace(), 1.0, 1e-10);
  EXPECT_LT((rho.rho - rho.rho.transpose()).cwiseAbs().maxCoeff(), 1e-10);
  Eigen::SelfAdjointEigenSolver<Matrix> es(rho.rho);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8);
}

TEST(BuildRho, NonUnitInputRejected) {
  Matrix f = unit_rows(3, 5, 1);
  f.row(1) *= 1.01;
  EXPECT_THROW(build_rho(f), ConfigError);
}

TEST(EigFactorize, FullRankIsExact) {
  const auto rho = build_rho(unit_rows(30, 8, 4));
  const auto m = eig_factorize(rho, 8);
  EXPECT_LT((reconstruct(m) - rho.rho).norm(), 1e-8);
  EXPECT_LT((m.eigvecs * m.eigvecs.transpose() - Matrix::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-8);
  for (Index k = 1; k < m.rank(); ++k) EXPECT_GE(m.eigvals(k - 1), m.eigvals(k));
}

TEST(EigFactorize, RankOneRecoversVector) {
  const Vector v = unit_rows(1, 6, 5).row(0).transpose();
  const auto m = eig_factorize(build_rho(v.transpose()), 1);
  EXPECT_NEAR(m.eigvals(0), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(m.eigvecs.row(0).dot(v)), 1.0, 1e-12);
}

TEST(EigFactorize, EigenvaluesMatchPowerIteration) {
  const auto rho = build_rho(unit_rows(6, 4, 11));
  const auto m = eig_factorize(rho, 4);
  const auto oracle = oracle::power_iteration_eigenvalues(rho.rho);
  for (Index k = 0; k < 4; ++k) EXPECT_NEAR(m.eigvals(k), oracle[static_cast<std::size_t>(k)], 1e-8);
}

TEST(EigFactorize, FrobeniusErrorNonIncreasingInRank) {
  const auto rho = build_rho(unit_rows(25, 10, 6));
  double previous = std::numeric_limits<double>::infinity();
  for (Index r = 1; r <= 10; ++r) {
    const double err = (reconstruct(eig_factorize(rho, r)) - rho.rho).norm();
    EXPECT_LE(err, previous + 1e-12);
    previous = err;
  }
  EXPECT_THROW(eig_factorize(rho, 0), ConfigError);
  EXPECT_THROW(eig_factorize(rho, 11), ConfigError);
}

TEST(FactorizeFeatures, GramRouteMatchesDirectDiagonalization) {
  const Matrix f = unit_rows(9, 40, 7);
  const auto direct = eig_factorize(build_rho(f), 5);
  const auto gram = factorize_features(f, 5);
  EXPECT_LT((direct.eigvals - gram.eigvals).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((reconstruct(direct) - reconstruct(gram)).norm(), 1e-10);
  EXPECT_LT((gram.eigvecs * gram.eigvecs.transpose() - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(InitializeDensity, EigenvaluesFormAProbabilityVector) {
  const auto m = initialize_density(unit_rows(20, 30, 8), 6, 0.5, 3.0);
  EXPECT_NEAR(m.eigvals.sum(), 1.0, 1e-12);
  EXPECT_GE(m.eigvals.minCoeff(), 0.0);
  EXPECT_EQ(m.normalizer, 3.0);
}

TEST(DensityFull, SelfProjectionAndOrthogonalQuery) {
  Matrix f = Matrix::Zero(1, 3);
  f(0, 1) = 1.0;
  const auto rho = build_rho(f);
  EXPECT_DOUBLE_EQ(density_full(rho, f.row(0).transpose(), 1.0), 1.0);
  EXPECT_DOUBLE_EQ(density_full(rho, f.row(0).transpose(), 4.0), 0.25);
  EXPECT_DOUBLE_EQ(density_full(rho, Eigen::Vector3d(1, 0, 0), 1.0), 0.0);
}

TEST(DensityLowRank, EqualsFullMatrixAtFullRank) {
  const Matrix f = unit_rows(50, 16, 9);
  const auto rho = build_rho(f);
  const auto m = eig_factorize(rho, 16);
  const Matrix q = unit_rows(20, 16, 10);
  for (Index i = 0; i < q.rows(); ++i) {
    EXPECT_NEAR(density_lowrank(m, q.row(i).transpose()), density_full(rho, q.row(i).transpose(), m.normalizer), 1e-8);
  }
  const Vector batch = density_lowrank_rows(m, q);
  EXPECT_NEAR(batch(3), density_lowrank(m, q.row(3).transpose()), 1e-15);
}

TEST(DensityLowRank, ZeroSpectrumAndNegativeEigenvalue) {
  auto m = eig_factorize(build_rho(unit_rows(10, 5, 2)), 3);
  m.eigvals.setZero();
  EXPECT_EQ(density_lowrank(m, unit_rows(1, 5, 3).row(0).transpose()), 0.0);
  m.eigvals(1) = -0.1;
  EXPECT_THROW(density_lowrank(m, unit_rows(1, 5, 3).row(0).transpose()), NumericalError);
}

TEST(DensityLowRank, NonNegativeEverywhere) {
  const auto m = eig_factorize(build_rho(unit_rows(30, 12, 4)), 5);
  const Vector d = density_lowrank_rows(m, unit_rows(200, 12, 5));
  EXPECT_GE(d.minCoeff(), 0.0);
}

TEST(ExactKde, SinglePointClosedForm) {
  Matrix train(1, 1);
  train << 0.7;
  EXPECT_NEAR(exact_kde(train, Vector::Constant(1, 0.7), 1.0), 1.0 / std::sqrt(std::numbers::pi), 1e-15);
  EXPECT_NEAR(exact_kde(train, Vector::Constant(1, 0.7), 1.0), 0.5642, 1e-4);
  EXPECT_LT(exact_kde(train, Vector::Constant(1, 40.0), 1.0), 1e-300);
  EXPECT_THROW(exact_kde(train, Vector::Zero(1), 0.0), ConfigError);
}

TEST(ExactKde, IntegratesToOne) {
  const Matrix train = oracle::mixture(30, 1, 4);
  for (double gamma : {0.3, 2.0}) {
    const double area = oracle::trapezoid(
        [&](double t) { return exact_kde(train, Vector::Constant(1, t), gamma); }, -20.0, 20.0, 8000);
    EXPECT_NEAR(area, 1.0, 0.01);
  }
}

TEST(KdeNormalizer, Value) { EXPECT_NEAR(kde_normalizer(0.5, 4), std::pow(2.0 * std::numbers::pi, 2.0), 1e-9); }

TEST(Proposition1, TwoPointSetQueryAtAPoint) {
  Matrix train(2, 1);
  train << -0.4, 0.9;
  const double gamma = 1.0;
  const auto map = sample_rff(1, 2000, gamma / 2.0, 77);
  const auto m = factorize_features(normalize_rows(phi_rows(map, train)), 2);
  DensityModel model = m;
  model.normalizer = kde_normalizer(gamma, 1);
  const Vector q = train.row(0).transpose();
  const double exact = exact_kde(train, q, gamma);
  const double approx = density_lowrank(model, normalize_phi(phi(map, q)));
  EXPECT_LT(std::abs(approx - exact) / exact, 0.1);
}

TEST(Proposition1, MixturesAgreeWithExactKde) {
  EXPECT_LT(oracle::proposition_one_error(1, 0.5, 2000, 500, 100, 1), 0.1);
  EXPECT_LT(oracle::proposition_one_error(2, 0.5, 2000, 500, 100, 2), 0.1);
}

TEST(Nll, UnitDensitiesGiveZero) {
  Matrix f = Matrix::Zero(3, 2);
  f.col(0).setOnes();
  DensityModel m = eig_factorize(build_rho(f.topRows(1)), 1);
  EXPECT_NEAR(nll(m, f), 0.0, 1e-15);
}

TEST(Nll, FloorBoundsOrthogonalPoint) {
  Matrix f = Matrix::Zero(1, 2);
  f(0, 0) = 1.0;
  const DensityModel m = eig_factorize(build_rho(f), 1);
  Matrix q = Matrix::Zero(1, 2);
  q(0, 1) = 1.0;
  EXPECT_NEAR(nll(m, q), -std::log(kDensityFloor), 1e-12);
}

TEST(Nll, GradientMatchesFiniteDifferences) {
  const Matrix phis = unit_rows(7, 6, 12);
  DensityModel m = eig_factorize(build_rho(unit_rows(5, 6, 13)), 3);
  m.normalizer = 2.5;
  // Move away from the orthonormal starting point so every term matters.
  Rng rng(14);
  for (Index i = 0; i < m.eigvecs.size(); ++i) m.eigvecs.data()[i] += 0.2 * rng.normal();
  DensityGradient g;
  Matrix gphi;
  nll_gradient(m, phis, g, &gphi);

  const Vector nv = numeric_gradient(
      [&](const Vector& w) {
        DensityModel c = m;
        c.eigvecs.reshaped() = w;
        return nll(c, phis);
      },
      m.eigvecs.reshaped());
  const Vector nt = numeric_gradient(
      [&](const Vector& t) {
        DensityModel c = m;
        set_eigval_params(c, t);
        return nll(c, phis);
      },
      eigval_params(m));
  const Vector np = numeric_gradient([&](const Vector& p) { return nll(m, p.reshaped(phis.rows(), phis.cols())); },
                                     phis.reshaped());
  EXPECT_LT(compare_gradients(g.eigvecs.reshaped(), nv).max_relative, 1e-4);
  EXPECT_LT(compare_gradients(g.eigval_params, nt).max_relative, 1e-4);
  EXPECT_LT(compare_gradients(gphi.reshaped(), np).max_relative, 1e-4);
}

TEST(TrainDensity, ZeroLearningRateKeepsModel) {
  const Matrix phis = unit_rows(20, 8, 1);
  const auto m = initialize_density(phis, 4, 1.0, 1.0);
  DensityTrainOptions opt;
  opt.learning_rate = 0.0;
  opt.steps = 5;
  const auto r = train_density(m, phis, opt);
  EXPECT_LT((r.model.eigvecs - m.eigvecs).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((r.model.eigvals - m.eigvals).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(TrainDensity, TopComponentDataDoesNotIncreaseNll) {
  const Matrix start = unit_rows(30, 10, 2);
  const auto m = initialize_density(start, 3, 1.0, 1.0);
  Matrix phis(40, 10);
  Rng rng(3);
  for (Index i = 0; i < 40; ++i) {
    Vector v = m.eigvecs.row(0).transpose() + 0.05 * Vector::NullaryExpr(10, [&](Index) { return rng.normal(); });
    phis.row(i) = v.normalized().transpose();
  }
  DensityTrainOptions opt;
  opt.steps = 50;
  opt.learning_rate = 1e-2;
  const auto r = train_density(m, phis, opt);
  EXPECT_LE(r.mean_nll.back(), r.mean_nll.front());
}

TEST(TrainDensity, EigenvaluesStayAProbabilityVector) {
  const Matrix phis = unit_rows(60, 12, 5);
  DensityTrainOptions opt;
  opt.steps = 200;
  opt.learning_rate = 5e-2;
  auto m = initialize_density(phis, 5, 1.0, 1.0);
  const auto r = train_density(m, phis, opt);
  EXPECT_NEAR(r.model.eigvals.sum(), 1.0, 1e-6);
  EXPECT_GE(r.model.eigvals.minCoeff(), 0.0);
  EXPECT_EQ(r.mean_nll.size(), 201u);
}

TEST(TrainDensity, HeldOutNllDoesNotRiseOnSmokeRun) {
  const Matrix all = oracle::mixture(300, 1, 8);
  const auto map = sample_rff(1, 200, 0.5, 9);
  const Matrix f = normalize_rows(phi_rows(map, all));
  const Matrix train = f.topRows(200);
  const Matrix held = f.bottomRows(100);
  const auto m = initialize_density(train, 10, 1.0, kde_normalizer(1.0, 1));
  DensityTrainOptions opt;
  opt.steps = 100;
  opt.learning_rate = 1e-3;
  const auto r = train_density(m, train, opt);
  EXPECT_LE(nll(r.model, held), nll(m, held));
  EXPECT_LT(r.mean_nll.back(), r.mean_nll.front());
}

TEST(ProjectGradient, RemovesOnlyTheScalingDirections) {
  const auto m = eig_factorize(build_rho(unit_rows(10, 6, 15)), 3);
  DensityGradient g;
  nll_gradient(m, unit_rows(8, 6, 16), g);
  DensityGradient p = g;
  project_gradient(m, p);
  for (Index k = 0; k < 3; ++k) EXPECT_NEAR(p.eigvecs.row(k).dot(m.eigvecs.row(k)), 0.0, 1e-12);
  EXPECT_NEAR(p.eigval_params.dot(eigval_params(m)), 0.0, 1e-12);
  DensityGradient twice = p;
  project_gradient(m, twice);
  EXPECT_LT((twice.eigvecs - p.eigvecs).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(TrainDensity, BimodalModesBeatValley) {
  Rng rng(4);
  Matrix x(400, 1);
  for (Index i = 0; i < 400; ++i) x(i, 0) = (i % 2 == 0 ? -3.0 : 3.0) + 0.5 * rng.normal();
  const double gamma = 1.0;
  const auto map = sample_rff(1, 500, gamma / 2.0, 5);
  const Matrix f = normalize_rows(phi_rows(map, x));
  DensityTrainOptions opt;
  opt.steps = 100;
  opt.learning_rate = 1e-3;
  const auto r = train_density(initialize_density(f, 20, gamma, kde_normalizer(gamma, 1)), f, opt);
  auto at = [&](double t) { return density_lowrank(r.model, normalize_phi(phi(map, Vector::Constant(1, t)))); };
  EXPECT_GT(at(-3.0), 5.0 * at(0.0));
  EXPECT_GT(at(3.0), 5.0 * at(0.0));
  // Same ordering as the exact estimate.
  EXPECT_GT(exact_kde(x, Vector::Constant(1, 3.0), gamma), 5.0 * exact_kde(x, Vector::Constant(1, 0.0), gamma));
}
