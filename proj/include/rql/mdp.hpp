#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rql/random.hpp"
#include "rql/reward_model.hpp"

namespace rql {

using State = std::size_t;
using Action = std::size_t;

/// Raised when an MDP description violates its structural invariants.
class MdpError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense |S| x |A| table of state-action values, row-major by state.
class QTable {
 public:
  QTable() = default;
  QTable(std::size_t num_states, std::size_t num_actions, double fill = 0.0)
      : num_states_(num_states), num_actions_(num_actions), values_(num_states * num_actions, fill) {}
  QTable(std::size_t num_states, std::size_t num_actions, std::vector<double> values)
      : num_states_(num_states), num_actions_(num_actions), values_(std::move(values)) {
    if (values_.size() != num_states_ * num_actions_)
      throw std::invalid_argument("QTable: value count does not match dimensions");
  }

  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return num_actions_; }
  std::size_t size() const { return values_.size(); }

  double& operator()(State s, Action a) { return values_[s * num_actions_ + a]; }
  double operator()(State s, Action a) const { return values_[s * num_actions_ + a]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  std::span<const double> row(State s) const {
    return std::span<const double>(values_).subspan(s * num_actions_, num_actions_);
  }

  double max_in_row(State s) const {
    const auto r = row(s);
    return *std::max_element(r.begin(), r.end());
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  bool same_shape(const QTable& other) const {
    return num_states_ == other.num_states_ && num_actions_ == other.num_actions_;
  }

  friend bool operator==(const QTable&, const QTable&) = default;

 private:
  std::size_t num_states_ = 0;
  std::size_t num_actions_ = 0;
  std::vector<double> values_;
};

/// Sup-norm distance between two tables of the same shape.
inline double linf_distance(const QTable& x, const QTable& y) {
  if (!x.same_shape(y)) throw std::invalid_argument("linf_distance: shape mismatch");
  double d = 0.0;
  const auto a = x.values();
  const auto b = y.values();
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

/// Deterministic policy: one action per state.
struct Policy {
  std::vector<Action> actions;

  Action operator()(State s) const { return actions.at(s); }
  std::size_t num_states() const { return actions.size(); }
  friend bool operator==(const Policy&, const Policy&) = default;
};

/**
 * Finite discounted MDP with a generative model.
 *
 * Transitions are stored densely as P[(s * A + a) * S + s']. Rows are validated
 * to sum to one within 1e-12 at construction and then renormalized.
 */
class TabularMdp {
 public:
  static constexpr double kRowTolerance = 1e-12;

  TabularMdp(std::size_t num_states, std::size_t num_actions, std::vector<double> transitions,
             std::vector<RewardModel> rewards, double discount)
      : num_states_(num_states),
        num_actions_(num_actions),
        transitions_(std::move(transitions)),
        rewards_(std::move(rewards)),
        discount_(discount) {
    if (num_states_ == 0 || num_actions_ == 0)
      throw MdpError("MDP needs at least one state and one action");
    if (!(discount_ > 0.0 && discount_ < 1.0))
      throw MdpError("discount must lie strictly inside (0, 1)");
    if (transitions_.size() != num_pairs() * num_states_)
      throw MdpError("transition tensor has " + std::to_string(transitions_.size()) +
                     " entries, expected " + std::to_string(num_pairs() * num_states_));
    if (rewards_.size() != num_pairs())
      throw MdpError("expected one reward model per state-action pair");

    cdf_.resize(transitions_.size());
    means_.resize(num_pairs());
    for (std::size_t i = 0; i < num_pairs(); ++i) {
      auto row = std::span<double>(transitions_).subspan(i * num_states_, num_states_);
      double total = 0.0;
      for (double p : row) {
        if (!(p >= 0.0) || !std::isfinite(p)) throw MdpError(row_message(i, "has a negative or non-finite entry"));
        total += p;
      }
      if (std::abs(total - 1.0) > kRowTolerance) {
        std::ostringstream os;
        os.precision(17);
        os << "sums to " << total;
        throw MdpError(row_message(i, os.str()));
      }
      double running = 0.0;
      for (std::size_t k = 0; k < num_states_; ++k) {
        row[k] /= total;
        running += row[k];
        cdf_[i * num_states_ + k] = running;
      }
      means_[i] = rewards_[i].mean();
    }
  }

  std::size_t num_states() const { return num_states_; }
  std::size_t num_actions() const { return num_actions_; }
  std::size_t num_pairs() const { return num_states_ * num_actions_; }
  double discount() const { return discount_; }

  std::size_t pair_index(State s, Action a) const { return s * num_actions_ + a; }

  double transition(State s, Action a, State next) const {
    return transitions_[pair_index(s, a) * num_states_ + next];
  }

  std::span<const double> transition_row(State s, Action a) const {
    return std::span<const double>(transitions_).subspan(pair_index(s, a) * num_states_, num_states_);
  }

  std::span<const double> transitions() const { return transitions_; }

  const RewardModel& reward(State s, Action a) const { return rewards_[pair_index(s, a)]; }
  std::span<const RewardModel> rewards() const { return rewards_; }

  /// Exact expected reward R(s,a), indexed by pair.
  std::span<const double> mean_rewards() const { return means_; }
  double mean_reward(State s, Action a) const { return means_[pair_index(s, a)]; }

  double max_abs_mean_reward() const {
    double m = 0.0;
    for (double r : means_) m = std::max(m, std::abs(r));
    return m;
  }

  /// Draws s' ~ P(.|s,a) by inverting the row CDF with one uniform draw.
  State sample_next_state(State s, Action a, RandomStream& rng) const {
    const auto begin = cdf_.begin() + static_cast<std::ptrdiff_t>(pair_index(s, a) * num_states_);
    const auto end = begin + static_cast<std::ptrdiff_t>(num_states_);
    const double u = uniform01(rng);
    auto it = std::upper_bound(begin, end, u);
    // Guard against a final CDF entry a hair below one; also skip zero-mass tails.
    if (it == end) it = end - 1;
    while (it != begin && transitions_[static_cast<std::size_t>(it - cdf_.begin())] == 0.0) --it;
    return static_cast<State>(it - begin);
  }

 private:
  std::string row_message(std::size_t pair, const std::string& what) const {
    return "transitions row " + std::to_string(pair) + " (state " + std::to_string(pair / num_actions_) +
           ", action " + std::to_string(pair % num_actions_) + ") " + what;
  }

  std::size_t num_states_;
  std::size_t num_actions_;
  std::vector<double> transitions_;
  std::vector<RewardModel> rewards_;
  double discount_;
  std::vector<double> cdf_;
  std::vector<double> means_;
};

inline State sample_next_state(const TabularMdp& mdp, State s, Action a, RandomStream& rng) {
  return mdp.sample_next_state(s, a, rng);
}

}  // namespace rql
