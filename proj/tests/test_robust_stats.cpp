#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rql/order_statistic_tree.hpp"
#include "rql/random.hpp"
#include "rql/trimmed_mean.hpp"

using namespace rql;

namespace {

std::vector<double> normal_sample(std::size_t n, RandomStream& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

/// Replaces floor(eps n) entries at random positions by `value`.
std::vector<double> contaminate(std::vector<double> v, double eps, double value, RandomStream& rng) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto k = static_cast<std::size_t>(std::floor(eps * static_cast<double>(v.size())));
  for (std::size_t i = 0; i < k; ++i) v[idx[i]] = value;
  return v;
}

}  // namespace

TEST(PhiClamp, Examples) {
  EXPECT_EQ(phi_clamp(5, 0, 1), 1);
  EXPECT_EQ(phi_clamp(0.5, 0, 1), 0.5);
  EXPECT_EQ(phi_clamp(-3, -1, 1), -1);
  EXPECT_THROW(phi_clamp(0, 1, 0), std::invalid_argument);
}

TEST(TrimmedMean, ConstantDataIsExact) {
  for (double c : {0.0, 1.0, -3.7, 0.1, 1e9, -1e-7}) {
    for (std::size_t M : {2u, 3u, 8u, 101u, 5000u}) {
      const std::vector<double> data(M, c);
      for (TrimConfig cfg : {TrimConfig{0.0, 0.05}, TrimConfig{0.05, 0.5}, TrimConfig{0.4, 1e-6}}) {
        EXPECT_EQ(trimmed_mean(data, cfg).estimate, c) << "c=" << c << " M=" << M;
      }
    }
  }
}

TEST(TrimmedMean, SmallSampleFallsBackToMedianOfAveragingHalf) {
  const std::vector<double> data{1, 2, 3, 4, 5, 6, 7, 8};
  const TrimOutput out = trimmed_mean(data, TrimConfig{0.0, 0.5});
  EXPECT_NEAR(out.zeta, 24.0 * std::log(8.0) / 8.0, 1e-12);
  EXPECT_GE(out.zeta, 0.5);
  EXPECT_TRUE(out.fallback);
  EXPECT_EQ(out.estimate, 5.0);  // median of {2, 4, 6, 8}
  EXPECT_FALSE(out.guarantee_applies);
}

TEST(TrimmedMean, MatchesOracleOnSmallCorpus) {
  RandomStream rng = make_stream(21, 0);
  std::uniform_int_distribution<std::size_t> size(2, 12);
  std::uniform_int_distribution<int> small_int(-3, 3);
  std::normal_distribution<double> g(0.0, 2.0);
  std::uniform_real_distribution<double> eps_dist(0.0, 0.45);
  std::uniform_real_distribution<double> log_delta(std::log(1e-12), std::log(0.999));
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> data(size(rng));
    const bool ties = trial % 3 == 0;
    for (double& x : data) x = ties ? small_int(rng) : g(rng);
    const double eps = eps_dist(rng);
    const double delta = std::exp(log_delta(rng));
    EXPECT_NEAR(trimmed_mean(data, {eps, delta}).estimate, oracle::trimmed_mean(data, eps, delta), 1e-12);
  }
}

TEST(TrimmedMean, MatchesOracleWhenWindowIsOpen) {
  // Large delta and M so that zeta < 1/2 and the clamping path is exercised.
  RandomStream rng = make_stream(22, 0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> data = normal_sample(200 + trial, rng);
    data = contaminate(std::move(data), 0.03, 50.0, rng);
    const TrimConfig cfg{0.03, 0.9};
    const TrimOutput out = trimmed_mean(data, cfg);
    ASSERT_FALSE(out.fallback);
    EXPECT_NEAR(out.estimate, oracle::trimmed_mean(data, cfg.epsilon, cfg.delta), 1e-12);
    EXPECT_LE(out.lower, out.upper);
  }
}

TEST(TrimmedMean, PositiveAffineEquivariance) {
  RandomStream rng = make_stream(23, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::vector<double> data = normal_sample(300, rng);
    const TrimConfig cfg{0.01, 0.5};
    const double base = trimmed_mean(data, cfg).estimate;
    std::vector<double> moved(data);
    for (double& x : moved) x = 2.5 * x - 7.0;
    EXPECT_NEAR(trimmed_mean(moved, cfg).estimate, 2.5 * base - 7.0, 1e-9);
  }
}

TEST(TrimmedMean, OddLengthPutsExtraPointInQuantileHalf) {
  const std::vector<double> data{10, 1, 20, 2, 30};
  // Averaging half is {1, 2}; zeta >= 1/2 here so the median of that half comes back.
  EXPECT_EQ(trimmed_mean(data, {0.0, 0.05}).estimate, 1.5);
}

TEST(TrimmedMean, RejectsInvalidInput) {
  EXPECT_THROW(trimmed_mean(std::vector<double>{1.0}, {}), std::invalid_argument);
  EXPECT_THROW(trimmed_mean(std::vector<double>{1.0, std::nan("")}, {}), std::invalid_argument);
  EXPECT_THROW(trimmed_mean(std::vector<double>{1.0, 2.0}, {0.5, 0.1}), std::invalid_argument);
  EXPECT_THROW(trimmed_mean(std::vector<double>{1.0, 2.0}, {0.1, 0.0}), std::invalid_argument);
  EXPECT_THROW(trimmed_mean(std::vector<double>{1.0, 2.0}, {0.1, 1.0}), std::invalid_argument);
}

TEST(TrimmedMean, GuaranteeFlagFollowsPreconditions) {
  const TrimConfig cfg{0.05, 0.01};
  EXPECT_TRUE(cfg.guarantee_applies(40000));
  EXPECT_FALSE(cfg.guarantee_applies(10));  // delta < 4 exp(-M/2)
  EXPECT_FALSE((TrimConfig{0.07, 0.01}.guarantee_applies(40000)));
  EXPECT_NEAR(cfg.zeta(40000), 0.4 + 24.0 * std::log(400.0) / 40000.0, 1e-15);
}

TEST(TrimmedMean, GaussianWithLargeOutliersStaysNearZero) {
  RandomStream rng = make_stream(24, 0);
  const std::size_t M = 40000;
  const std::vector<double> data = contaminate(normal_sample(M, rng), 0.02, 1e6, rng);
  const TrimOutput out = trimmed_mean(data, {0.02, 0.01});
  const double bound = 4.0 * (std::sqrt(0.02) + std::sqrt(std::log(400.0) / 20000.0));
  EXPECT_LE(std::abs(out.estimate), bound);
  const double naive = std::accumulate(data.begin(), data.end(), 0.0) / static_cast<double>(M);
  EXPECT_GT(naive, 1e3);
}

TEST(Trim, SingleElementHistory) { EXPECT_EQ(trim(std::vector<double>{7.0}, 0.1, 0.01), 7.0); }

TEST(Trim, UniformHistoryNearZero) {
  RandomStream rng = make_stream(25, 0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> h(1000);
    for (double& x : h) x = u(rng);
    EXPECT_LE(std::abs(trim(h, 0.05, 1e-4)), 0.15);
  }
}

TEST(Trim, OutliersMoveEstimateByAtMostOrderSqrtEpsilon) {
  RandomStream rng = make_stream(26, 0);
  const double eps = 0.01;
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<double> clean = normal_sample(10000, rng);
    const std::vector<double> dirty = contaminate(clean, eps, 1e9, rng);
    EXPECT_LE(std::abs(trim(clean, eps, 0.01) - trim(dirty, eps, 0.01)), 4.0 * std::sqrt(eps));
  }
}

TEST(StreamingTrim, MatchesScratchOnEveryPrefix) {
  RandomStream rng = make_stream(27, 0);
  std::normal_distribution<double> g(1.0, 3.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (TrimConfig cfg : {TrimConfig{0.0, 0.5}, TrimConfig{0.02, 0.9}, TrimConfig{0.1, 1e-6}}) {
    StreamingTrim stream;
    std::vector<double> history;
    for (int t = 0; t < 1500; ++t) {
      double y = u(rng) < 0.05 ? 1e6 : g(rng);
      if (t % 7 == 0) y = std::round(y);  // ties
      stream.push(y);
      history.push_back(y);
      if (history.size() < 2) {
        EXPECT_EQ(stream.estimate(cfg).estimate, y);
        continue;
      }
      const TrimOutput a = trimmed_mean(history, cfg);
      const TrimOutput b = stream.estimate(cfg);
      EXPECT_EQ(a.fallback, b.fallback);
      EXPECT_EQ(a.lower, b.lower);
      EXPECT_EQ(a.upper, b.upper);
      EXPECT_NEAR(a.estimate, b.estimate, 1e-9 * (1.0 + std::abs(a.estimate))) << "t=" << t;
    }
  }
}

TEST(OrderStatisticTree, AgreesWithSortedVector) {
  RandomStream rng = make_stream(28, 0);
  std::uniform_int_distribution<int> values(-50, 50);
  OrderStatisticTree tree;
  std::vector<double> ref;
  for (int i = 0; i < 2000; ++i) {
    const double x = values(rng) * 0.5;
    tree.insert(x);
    ref.push_back(x);
    if (i % 97 != 0) continue;
    std::vector<double> sorted(ref);
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 1; k <= sorted.size(); k += 13) EXPECT_EQ(tree.kth(k), sorted[k - 1]);
    const double lo = values(rng) * 0.5;
    const double hi = lo + std::abs(values(rng)) * 0.5;
    std::size_t below = 0, above = 0;
    double between = 0.0;
    for (double v : ref) {
      if (v < lo) ++below;
      else if (v > hi) ++above;
      else between += v - tree.offset();
    }
    EXPECT_EQ(tree.count_below(lo), below);
    EXPECT_EQ(tree.count_above(hi), above);
    EXPECT_NEAR(tree.shifted_sum_between(lo, hi), between, 1e-9);
  }
  EXPECT_EQ(tree.size(), ref.size());
  EXPECT_EQ(tree.offset(), ref.front());
}
