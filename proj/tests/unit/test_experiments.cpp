// Apache License, Version 2.0, refer to LICENSE.txt

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dpgm/experiments.hpp"

namespace dpgm {
namespace {

TEST(Ring, CentersLieOnTheCircle) {
  const RingTarget t;
  const Tensor c = t.centers();
  EXPECT_NEAR(c.at(0, 0), 3.0, 1e-15);
  EXPECT_NEAR(c.at(0, 1), 0.0, 1e-15);
  for (std::size_t k = 0; k < 10; ++k) {
    EXPECT_NEAR(std::hypot(c.at(k, 0), c.at(k, 1)), 3.0, 1e-12);
    EXPECT_NEAR(std::atan2(c.at(k, 1), c.at(k, 0)),
                std::remainder(2.0 * M_PI * static_cast<double>(k) / 10.0, 2.0 * M_PI), 1e-12);
  }
}

TEST(Ring, SampleProportionsAreUniform) {
  Rng rng(1);
  const RingTarget t;
  const std::size_t n = 20000;
  const ModeCoverage cov = mode_coverage(ring_sample(t, n, rng), t);
  const double tol = 3.0 * std::sqrt(0.09 / static_cast<double>(n));
  for (double p : cov.proportions) EXPECT_NEAR(p, 0.1, tol);
  EXPECT_EQ(cov.covered, 10u);
  EXPECT_LT(cov.kl, 0.01);
  EXPECT_EQ(cov.unassigned_fraction, 0.0);
}

TEST(Ring, ImbalancedWeights) {
  const auto uniform = imbalanced_weights(0, 10);
  for (double w : uniform) EXPECT_NEAR(w, 0.1, 1e-15);
  for (std::size_t k = 1; k < 10; ++k) {
    const auto w = imbalanced_weights(k, 10);
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
    for (std::size_t i = 1; i < k; ++i) EXPECT_DOUBLE_EQ(w[i], w[0]);
    for (std::size_t i = k + 1; i < 10; ++i) EXPECT_DOUBLE_EQ(w[i], w[k]);
    EXPECT_NEAR(w[0] / w[k], 1e-3 / ((1.0 - 1e-3 * k) / (10.0 - k)), 1e-9);
  }
  EXPECT_ANY_THROW(imbalanced_weights(10, 10));
}

TEST(ModeCoverage, PointMassCoversOneMode) {
  const RingTarget t;
  Tensor s = Tensor::zeros({500, 2});
  for (std::size_t i = 0; i < 500; ++i) s.at(i, 0) = 3.0;
  const ModeCoverage cov = mode_coverage(s, t);
  EXPECT_EQ(cov.covered, 1u);
  EXPECT_NEAR(cov.kl, std::log(10.0), 1e-6);
  EXPECT_NEAR(cov.proportions[0], 1.0, 1e-15);
}

TEST(ModeCoverage, NothingAssignedGivesInfiniteKl) {
  const ModeCoverage cov = mode_coverage(Tensor::zeros({100, 2}), RingTarget{});
  EXPECT_EQ(cov.covered, 0u);
  EXPECT_EQ(cov.unassigned_fraction, 1.0);
  EXPECT_TRUE(std::isinf(cov.kl));
}

TEST(ModeCoverage, MinFractionThreshold) {
  // 3% of samples on mode 1, 1% on mode 2, the rest on mode 0.
  const RingTarget t;
  const Tensor c = t.centers();
  Tensor s = Tensor::zeros({100, 2});
  for (std::size_t i = 0; i < 100; ++i) {
    const std::size_t k = i < 3 ? 1 : (i < 4 ? 2 : 0);
    s.at(i, 0) = c.at(k, 0) + 0.4;
    s.at(i, 1) = c.at(k, 1);
  }
  const ModeCoverage cov = mode_coverage(s, t);
  EXPECT_EQ(cov.covered, 2u);
  EXPECT_NEAR(cov.proportions[2], 0.01, 1e-15);
}

TEST(ModeCoverage, PermutationInvariant) {
  Rng rng(2);
  RingTarget t;
  t.weights = imbalanced_weights(3, 10);
  const Tensor s = ring_sample(t, 2000, rng);
  std::vector<std::size_t> perm(2000);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor p = Tensor::zeros({2000, 2});
  for (std::size_t i = 0; i < 2000; ++i) {
    p.at(i, 0) = s.at(perm[i], 0);
    p.at(i, 1) = s.at(perm[i], 1);
  }
  const ModeCoverage a = mode_coverage(s, t);
  const ModeCoverage b = mode_coverage(p, t);
  EXPECT_EQ(a.covered, b.covered);
  EXPECT_EQ(a.proportions, b.proportions);
  EXPECT_DOUBLE_EQ(a.kl, b.kl);
}

TEST(Ring, Validation) {
  RingTarget t;
  t.weights = {0.5, 0.5};
  EXPECT_ANY_THROW(t.validate());
  t.weights.clear();
  t.stddev = 0.0;
  EXPECT_ANY_THROW(t.validate());
}

}  // namespace
}  // namespace dpgm
