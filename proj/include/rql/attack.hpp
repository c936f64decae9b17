#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rql/mdp.hpp"
#include "rql/random.hpp"
#include "rql/reward_model.hpp"

namespace rql {

/// One independent clean reward per state-action pair, pair-indexed.
inline std::vector<double> sample_clean_rewards(const TabularMdp& mdp, RandomStream& rng) {
  std::vector<double> r(mdp.num_pairs());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = mdp.rewards()[i].sample(rng);
  return r;
}

struct ObservationRecord {
  std::size_t iteration = 0;
  std::vector<double> observed;
  bool corrupted = false;
};

/// Largest number of corrupted iterations allowed among the first n.
inline std::size_t corruption_allowance(double epsilon, std::size_t n) {
  // The slack absorbs products such as 0.05 * 100 landing just under an integer.
  return static_cast<std::size_t>(std::floor(epsilon * static_cast<double>(n) + 1e-9));
}

/**
 * True iff every prefix 0..k (k <= t, k < flags.size()) holds at most
 * floor(eps * (k + 1)) corrupted iterations.
 */
inline bool corruption_budget_ok(const std::vector<bool>& flags, double epsilon, std::size_t t) {
  std::size_t count = 0;
  for (std::size_t k = 0; k < flags.size() && k <= t; ++k) {
    if (flags[k]) ++count;
    if (count > corruption_allowance(epsilon, k + 1)) return false;
  }
  return true;
}

inline bool corruption_budget_ok(const std::vector<bool>& flags, double epsilon) {
  return flags.empty() || corruption_budget_ok(flags, epsilon, flags.size() - 1);
}

enum class Strategy {
  none,
  huber,
  sign_flip_large,
  constant_shift,
  fixed_point_shift,
  custom,
};

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::none: return "none";
    case Strategy::huber: return "huber";
    case Strategy::sign_flip_large: return "sign-flip-large";
    case Strategy::constant_shift: return "constant-shift";
    case Strategy::fixed_point_shift: return "fixed-point-shift";
    case Strategy::custom: return "custom";
  }
  return "unknown";
}

/// Everything an omniscient adversary may inspect before rewriting iteration t.
struct AdversaryContext {
  std::size_t iteration;
  std::span<const double> clean;
  const QTable& learner;
  const std::vector<bool>& flags;  ///< corruption log of iterations 0..t-1
};

/// Rewrites `observed` (initialised to the clean draws) in place.
using CustomAttack = std::function<void(const AdversaryContext&, std::span<double> observed)>;

/**
 * Reward adversary for one run. Owns the corruption log of the run.
 *
 * Budgeted strategies corrupt greedily: every iteration in which corrupting still
 * keeps the prefix budget valid is corrupted. Huber ignores the budget and flips a
 * biased coin instead. `enforce_budget(false)` lifts the budget for stress tests.
 */
class Adversary {
 public:
  static Adversary none() { return Adversary(Strategy::none, 0.0); }

  /// `corruption[i]` is the distribution pair i is redrawn from on tails; nullopt keeps the clean draw.
  static Adversary huber(double epsilon, std::vector<std::optional<RewardModel>> corruption,
                         bool per_pair_coin = false) {
    Adversary adv(Strategy::huber, epsilon);
    adv.corruption_ = std::move(corruption);
    adv.per_pair_coin_ = per_pair_coin;
    return adv;
  }

  /// Corrupted value is -sign(r) * magnitude (sign(0) taken as +).
  static Adversary sign_flip_large(double epsilon, double magnitude) {
    Adversary adv(Strategy::sign_flip_large, epsilon);
    adv.magnitude_ = magnitude;
    return adv;
  }

  static Adversary constant_shift(double epsilon, double offset) {
    Adversary adv(Strategy::constant_shift, epsilon);
    adv.offset_ = offset;
    return adv;
  }

  /// Corrupted value for pair i is targets[i].
  static Adversary fixed_point_shift(double epsilon, std::vector<double> targets) {
    Adversary adv(Strategy::fixed_point_shift, epsilon);
    adv.targets_ = std::move(targets);
    return adv;
  }

  static Adversary custom(double epsilon, CustomAttack attack) {
    Adversary adv(Strategy::custom, epsilon);
    adv.custom_ = std::move(attack);
    return adv;
  }

  Adversary& enforce_budget(bool on) {
    enforce_budget_ = on;
    return *this;
  }

  Strategy strategy() const { return strategy_; }
  double epsilon() const { return epsilon_; }
  bool budget_enforced() const { return enforce_budget_; }
  bool per_pair_coin() const { return per_pair_coin_; }
  double magnitude() const { return magnitude_; }
  double offset() const { return offset_; }
  const std::vector<double>& targets() const { return targets_; }
  const std::vector<std::optional<RewardModel>>& corruption() const { return corruption_; }

  const std::vector<bool>& flags() const { return flags_; }
  std::size_t corrupted_count() const { return corrupted_; }

  /// Whether corrupting the next iteration keeps every prefix within budget.
  bool can_corrupt_next() const {
    if (!enforce_budget_) return true;
    return corrupted_ + 1 <= corruption_allowance(epsilon_, flags_.size() + 1);
  }

  /// Produces the observation of the next iteration and appends it to the log.
  ObservationRecord observe(std::span<const double> clean, const QTable& learner, RandomStream& rng);

  /// Writes the strategy's corrupted vector into `out` (sized like `clean`).
  void rewrite(std::size_t t, std::span<const double> clean, const QTable& learner, std::span<double> out) const {
    switch (strategy_) {
      case Strategy::sign_flip_large:
        for (std::size_t i = 0; i < clean.size(); ++i) out[i] = clean[i] >= 0.0 ? -magnitude_ : magnitude_;
        break;
      case Strategy::constant_shift:
        for (std::size_t i = 0; i < clean.size(); ++i) out[i] = clean[i] + offset_;
        break;
      case Strategy::fixed_point_shift:
        if (targets_.size() != clean.size())
          throw std::invalid_argument("fixed-point-shift: need one target per state-action pair");
        for (std::size_t i = 0; i < clean.size(); ++i) out[i] = targets_[i];
        break;
      case Strategy::custom:
        std::copy(clean.begin(), clean.end(), out.begin());
        custom_(AdversaryContext{t, clean, learner, flags_}, out);
        break;
      case Strategy::none:
      case Strategy::huber:
        std::copy(clean.begin(), clean.end(), out.begin());
        break;
    }
  }

  void record(bool corrupted) {
    flags_.push_back(corrupted);
    if (corrupted) ++corrupted_;
  }

 private:
  Adversary(Strategy strategy, double epsilon) : strategy_(strategy), epsilon_(epsilon) {
    if (!(epsilon >= 0.0 && epsilon < 0.5)) throw std::invalid_argument("attack budget epsilon must lie in [0, 1/2)");
  }

  Strategy strategy_;
  double epsilon_;
  bool enforce_budget_ = true;
  bool per_pair_coin_ = false;
  double magnitude_ = 0.0;
  double offset_ = 0.0;
  std::vector<double> targets_;
  std::vector<std::optional<RewardModel>> corruption_;
  CustomAttack custom_;
  std::vector<bool> flags_;
  std::size_t corrupted_ = 0;
};

/**
 * Huber contamination: one coin per iteration (or per pair when configured). On
 * tails every pair with a corruption distribution is redrawn from it.
 * Does not touch the adversary's log.
 */
inline ObservationRecord huber_observe(std::size_t t, std::span<const double> clean, const Adversary& adversary,
                                       RandomStream& rng) {
  if (adversary.strategy() != Strategy::huber) throw std::invalid_argument("huber_observe: strategy is not huber");
  const auto& corruption = adversary.corruption();
  if (!corruption.empty() && corruption.size() != clean.size())
    throw std::invalid_argument("huber_observe: corruption table size does not match reward vector");

  ObservationRecord rec{t, std::vector<double>(clean.begin(), clean.end()), false};
  const double eps = adversary.epsilon();
  if (eps == 0.0 || corruption.empty()) return rec;

  if (adversary.per_pair_coin()) {
    for (std::size_t i = 0; i < clean.size(); ++i) {
      if (uniform01(rng) < eps && corruption[i]) {
        rec.observed[i] = corruption[i]->sample(rng);
        rec.corrupted = true;
      }
    }
    return rec;
  }

  if (uniform01(rng) < eps) {
    rec.corrupted = true;
    for (std::size_t i = 0; i < clean.size(); ++i)
      if (corruption[i]) rec.observed[i] = corruption[i]->sample(rng);
  }
  return rec;
}

/**
 * Strong contamination: the adversary may replace the whole vector, but only when
 * doing so keeps the prefix budget valid; otherwise the clean vector passes. An
 * iteration counts as corrupted iff the emitted vector differs from the clean one.
 * Appends the decision to the adversary's log.
 */
inline ObservationRecord strong_contamination_observe(std::size_t t, std::span<const double> clean,
                                                      Adversary& adversary, const QTable& learner) {
  if (adversary.strategy() == Strategy::huber)
    throw std::invalid_argument("strong_contamination_observe: huber is not a budgeted strategy");

  ObservationRecord rec{t, std::vector<double>(clean.begin(), clean.end()), false};
  if (adversary.strategy() != Strategy::none && adversary.can_corrupt_next()) {
    std::vector<double> candidate(clean.size());
    adversary.rewrite(t, clean, learner, candidate);
    bool differs = false;
    for (std::size_t i = 0; i < clean.size(); ++i) {
      // Bitwise comparison: a rewritten NaN or signed zero still counts as a change.
      if (std::memcmp(&candidate[i], &clean[i], sizeof(double)) != 0) differs = true;
    }
    if (differs) {
      rec.observed = std::move(candidate);
      rec.corrupted = true;
    }
  }
  adversary.record(rec.corrupted);
  return rec;
}

inline ObservationRecord Adversary::observe(std::span<const double> clean, const QTable& learner, RandomStream& rng) {
  const std::size_t t = flags_.size();
  if (strategy_ == Strategy::huber) {
    ObservationRecord rec = huber_observe(t, clean, *this, rng);
    record(rec.corrupted);
    return rec;
  }
  return strong_contamination_observe(t, clean, *this, learner);
}

}  // namespace rql
