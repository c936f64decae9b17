#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "rql/attack.hpp"
#include "rql/fig1.hpp"
#include "rql/reward_model.hpp"
#include "test_support.hpp"

using namespace rql;

namespace {

double sample_mean(const RewardModel& m, int n, std::uint64_t seed) {
  RandomStream rng = make_stream(seed, 0);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += m.sample(rng);
  return s / n;
}

const QTable kNoLearner(1, 1);

}  // namespace

TEST(RewardModel, DeterministicDrawsAreConstants) {
  const TabularMdp mdp = fig1::make_mdp(0.5, 1.0, 0.9);
  RandomStream rng = make_stream(1, 0);
  const std::vector<double> draw = sample_clean_rewards(mdp, rng);
  const std::vector<double> expected{1, -1, 1, 1, 1, 1, 0, 0, 0, 0};
  EXPECT_EQ(draw, expected);
}

TEST(RewardModel, UniformMeanWithinCltBound) {
  EXPECT_NEAR(sample_mean(RewardModel::uniform(-1, 1), 1000000, 2), 0.0, 0.003);
}

TEST(RewardModel, LognormalMeanWithinThreeStandardErrors) {
  const RewardModel m = RewardModel::lognormal(0.0, 0.5);
  EXPECT_NEAR(m.mean(), std::exp(0.125), 1e-15);
  const int n = 200000;
  EXPECT_NEAR(sample_mean(m, n, 3), std::exp(0.125), 3.0 * std::sqrt(m.variance() / n));
}

TEST(RewardModel, AnalyticMomentsMatchSamples) {
  const std::vector<RewardModel> models{RewardModel::truncated_gaussian(0.5, 1.0, 1.5),
                                        RewardModel::bernoulli_scaled(0.3, 2.0, -1.0),
                                        RewardModel::pareto(1.0, 3.5), RewardModel::uniform(2.0, 4.0)};
  const int n = 400000;
  for (std::size_t k = 0; k < models.size(); ++k) {
    const RewardModel& m = models[k];
    EXPECT_NEAR(sample_mean(m, n, 10 + k), m.mean(), 4.0 * std::sqrt(m.variance() / n)) << to_string(m.kind());
  }
}

TEST(RewardModel, BoundedSupportRespected) {
  const RewardModel g = RewardModel::truncated_gaussian(0.0, 2.0, 1.0);
  RandomStream rng = make_stream(4, 0);
  for (int i = 0; i < 100000; ++i) EXPECT_LE(std::abs(g.sample(rng)), 1.0);
  EXPECT_TRUE(g.bounded());
  EXPECT_FALSE(RewardModel::lognormal(0, 1).bounded());
}

TEST(RewardModel, RejectsInvalidParameters) {
  EXPECT_THROW(RewardModel::uniform(1, 0), std::invalid_argument);
  EXPECT_THROW(RewardModel::pareto(1, 2), std::invalid_argument);
  EXPECT_THROW(RewardModel::lognormal(0, -1), std::invalid_argument);
  EXPECT_THROW(RewardModel::bernoulli_scaled(1.5, 1, 0), std::invalid_argument);
}

TEST(HuberObserve, ZeroEpsilonPassesClean) {
  const Adversary adv = Adversary::huber(0.0, fig1::huber_corruption(29.0));
  RandomStream rng = make_stream(5, 0);
  const std::vector<double> clean{1, -1, 1, 1, 1, 1, 0, 0, 0, 0};
  for (std::size_t t = 0; t < 1000; ++t) {
    const ObservationRecord rec = huber_observe(t, clean, adv, rng);
    EXPECT_EQ(rec.observed, clean);
    EXPECT_FALSE(rec.corrupted);
  }
}

TEST(HuberObserve, Fig1TailsReplaceOnlyStartPairs) {
  const fig1::Instance inst = fig1::build(fig1::Params{});
  const double C = inst.corruption_signal;
  const Adversary adv = Adversary::huber(0.1, fig1::huber_corruption(C));
  RandomStream rng = make_stream(6, 0);
  const std::vector<double> clean{1, -1, 1, 1, 1, 1, 0, 0, 0, 0};
  int tails = 0;
  for (std::size_t t = 0; t < 5000; ++t) {
    const ObservationRecord rec = huber_observe(t, clean, adv, rng);
    if (!rec.corrupted) {
      EXPECT_EQ(rec.observed, clean);
      continue;
    }
    ++tails;
    EXPECT_EQ(rec.observed[0], -C);
    EXPECT_EQ(rec.observed[1], C);
    for (std::size_t i = 2; i < clean.size(); ++i) EXPECT_EQ(rec.observed[i], clean[i]);
  }
  EXPECT_GT(tails, 0);
}

TEST(HuberObserve, CorruptedFractionConcentrates) {
  Adversary adv = Adversary::huber(0.1, fig1::huber_corruption(29.0));
  RandomStream rng = make_stream(7, 0);
  const std::vector<double> clean{1, -1, 1, 1, 1, 1, 0, 0, 0, 0};
  const int n = 100000;
  for (int t = 0; t < n; ++t) adv.observe(clean, kNoLearner, rng);
  const double fraction = static_cast<double>(adv.corrupted_count()) / n;
  EXPECT_NEAR(fraction, 0.1, 3.0 * std::sqrt(0.1 * 0.9 / n));
}

TEST(HuberObserve, PerPairCoinCorruptsPairsIndependently) {
  Adversary adv = Adversary::huber(0.2, {RewardModel::deterministic(-5), RewardModel::deterministic(5)}, true);
  RandomStream rng = make_stream(8, 0);
  const std::vector<double> clean{0, 0};
  int first = 0, second = 0, both = 0;
  const int n = 100000;
  for (int t = 0; t < n; ++t) {
    const auto rec = adv.observe(clean, kNoLearner, rng);
    first += rec.observed[0] != 0;
    second += rec.observed[1] != 0;
    both += rec.observed[0] != 0 && rec.observed[1] != 0;
  }
  const double se = std::sqrt(0.2 * 0.8 / n);
  EXPECT_NEAR(static_cast<double>(first) / n, 0.2, 4 * se);
  EXPECT_NEAR(static_cast<double>(second) / n, 0.2, 4 * se);
  EXPECT_NEAR(static_cast<double>(both) / n, 0.04, 4 * std::sqrt(0.04 * 0.96 / n));
}

TEST(StrongContamination, ZeroBudgetAlwaysClean) {
  for (Adversary adv : {Adversary::sign_flip_large(0.0, 1e6), Adversary::constant_shift(0.0, 5.0)}) {
    const std::vector<double> clean{0.5, -0.25};
    for (std::size_t t = 0; t < 200; ++t) {
      const auto rec = strong_contamination_observe(t, clean, adv, kNoLearner);
      EXPECT_EQ(rec.observed, clean);
      EXPECT_FALSE(rec.corrupted);
    }
  }
}

TEST(StrongContamination, SignFlipRespectsPrefixBudget) {
  Adversary adv = Adversary::sign_flip_large(0.05, 1e6);
  const std::vector<double> clean{0.5, -0.25, 0.0};
  for (std::size_t t = 0; t < 100; ++t) {
    const auto rec = strong_contamination_observe(t, clean, adv, kNoLearner);
    if (rec.corrupted) {
      EXPECT_EQ(rec.observed, (std::vector<double>{-1e6, 1e6, -1e6}));
    }
  }
  EXPECT_LE(adv.corrupted_count(), 5u);
  EXPECT_EQ(adv.corrupted_count(), 5u);  // greedy spending uses the whole budget
  EXPECT_TRUE(corruption_budget_ok(adv.flags(), 0.05));
}

TEST(StrongContamination, FixedPointShiftReachesHuberMean) {
  const fig1::Params params{};
  const fig1::Instance inst = fig1::build(params);
  std::vector<double> targets(inst.mdp.mean_rewards().begin(), inst.mdp.mean_rewards().end());
  targets[0] = -inst.corruption_signal;
  targets[1] = inst.corruption_signal;
  Adversary adv = Adversary::fixed_point_shift(params.epsilon, targets);
  RandomStream rng = make_stream(9, 0);
  double sum = 0.0;
  const int n = 20000;
  for (int t = 0; t < n; ++t) {
    const auto clean = sample_clean_rewards(inst.mdp, rng);
    sum += adv.observe(clean, kNoLearner, rng).observed[0];
  }
  const double huber_mean = (1 - params.epsilon) * params.d - params.epsilon * inst.corruption_signal;
  EXPECT_NEAR(sum / n, huber_mean, 0.01);
}

TEST(StrongContamination, CustomAttackSeesLearnerAndLog) {
  std::size_t calls = 0;
  Adversary adv = Adversary::custom(0.25, [&](const AdversaryContext& ctx, std::span<double> out) {
    EXPECT_EQ(ctx.flags.size(), ctx.iteration);
    EXPECT_EQ(ctx.learner.num_states(), 1u);
    out[0] = ctx.learner(0, 0) + 100.0;
    ++calls;
  });
  const std::vector<double> clean{1.0};
  RandomStream rng = make_stream(10, 0);
  for (std::size_t t = 0; t < 40; ++t) adv.observe(clean, kNoLearner, rng);
  EXPECT_EQ(adv.corrupted_count(), 10u);
  EXPECT_EQ(calls, 10u);
  EXPECT_TRUE(corruption_budget_ok(adv.flags(), 0.25));
}

TEST(StrongContamination, UnchangedRewriteIsNotCounted) {
  Adversary adv = Adversary::constant_shift(0.4, 0.0);
  const std::vector<double> clean{3.0};
  for (std::size_t t = 0; t < 50; ++t) EXPECT_FALSE(strong_contamination_observe(t, clean, adv, kNoLearner).corrupted);
  EXPECT_EQ(adv.corrupted_count(), 0u);
}

TEST(StrongContamination, BudgetCanBeLiftedForStressTests) {
  Adversary adv = Adversary::constant_shift(0.1, 1.0);
  adv.enforce_budget(false);
  const std::vector<double> clean{0.0};
  for (std::size_t t = 0; t < 20; ++t) strong_contamination_observe(t, clean, adv, kNoLearner);
  EXPECT_EQ(adv.corrupted_count(), 20u);
  EXPECT_FALSE(corruption_budget_ok(adv.flags(), 0.1));
}

TEST(CorruptionBudget, PrefixFloorRule) {
  EXPECT_FALSE(corruption_budget_ok({true, false, true, false}, 0.5, 3));
  std::vector<bool> late(10, false);
  late[9] = true;
  EXPECT_TRUE(corruption_budget_ok(late, 0.1, 9));
  std::vector<bool> early(10, false);
  early[8] = true;
  EXPECT_FALSE(corruption_budget_ok(early, 0.1, 9));
  for (double eps : {0.0, 0.01, 0.3}) EXPECT_TRUE(corruption_budget_ok(std::vector<bool>(57, false), eps, 56));
  EXPECT_EQ(corruption_allowance(0.05, 100), 5u);
  EXPECT_EQ(corruption_allowance(0.1, 9), 0u);
}

TEST(Adversary, RejectsBudgetOutsideRange) {
  EXPECT_THROW(Adversary::constant_shift(0.5, 1.0), std::invalid_argument);
  EXPECT_THROW(Adversary::sign_flip_large(-0.1, 1.0), std::invalid_argument);
}
