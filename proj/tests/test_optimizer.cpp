#include "leand/optimizer.hpp"
#include "leand/random.hpp"

#include "support.hpp"

#include <set>

using namespace leand;

TEST(Optimizer, SgdStep) {
  Optimizer opt({OptimizerKind::sgd, 0.1}, 2);
  Vector p(2);
  p << 1.0, -2.0;
  opt.step(p, Eigen::Vector2d(0.5, -1.0));
  EXPECT_NEAR(p(0), 0.95, 1e-15);
  EXPECT_NEAR(p(1), -1.9, 1e-15);
}

TEST(Optimizer, AdamFirstStepHasLearningRateMagnitude) {
  Optimizer opt({OptimizerKind::adam, 0.01}, 3);
  Vector p = Vector::Zero(3);
  opt.step(p, Eigen::Vector3d(5.0, -0.001, 0.0));
  EXPECT_NEAR(p(0), -0.01, 1e-9);
  EXPECT_NEAR(p(1), 0.01, 1e-7);
  EXPECT_EQ(p(2), 0.0);
}

TEST(Optimizer, AdamMinimizesQuadratic) {
  Optimizer opt({OptimizerKind::adam, 0.05}, 2);
  Vector p(2);
  p << 3.0, -4.0;
  for (int i = 0; i < 2000; ++i) opt.step(p, 2.0 * p);
  EXPECT_LT(p.norm(), 1e-3);
}

TEST(Optimizer, ParseAndSizeCheck) {
  EXPECT_EQ(parse_optimizer("adam"), OptimizerKind::adam);
  EXPECT_EQ(parse_optimizer(to_string(OptimizerKind::sgd)), OptimizerKind::sgd);
  EXPECT_THROW(parse_optimizer("rmsprop"), ConfigError);
  Optimizer opt({}, 2);
  Vector p = Vector::Zero(3);
  EXPECT_THROW(opt.step(p, Vector::Zero(3)), ShapeError);
}

TEST(Random, ReproducibleAndDerivedStreamsDiffer) {
  Rng a(5), b(5);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  std::set<std::uint64_t> seeds;
  for (std::uint64_t s = 0; s < 50; ++s) seeds.insert(Rng::derive(42, s));
  EXPECT_EQ(seeds.size(), 50u);
}

TEST(Random, MomentsAndRanges) {
  Rng rng(9);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(rng.below(7), 7u);
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.01);
}
