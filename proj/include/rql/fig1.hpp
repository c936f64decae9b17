#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "rql/mdp.hpp"
#include "rql/reward_model.hpp"

namespace rql::fig1 {

// The five-state, two-action counterexample. State k of the construction is index k-1.
inline constexpr State kStart = 0;     // state 1
inline constexpr State kUpperL = 1;    // state 2, reached by L
inline constexpr State kUpperR = 2;    // state 3, reached by R
inline constexpr State kSinkR = 3;     // state 4
inline constexpr State kSinkL = 4;     // state 5
inline constexpr Action kLeft = 0;
inline constexpr Action kRight = 1;
inline constexpr std::size_t kNumStates = 5;
inline constexpr std::size_t kNumActions = 2;

struct Params {
  double p = 0.5;
  double d = 1.0;
  double kappa = 1.0;
  double epsilon = 0.1;
  double gamma = 0.9;

  void validate() const {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("fig1: p must lie in (0, 1)");
    if (!(d > 0.0)) throw std::invalid_argument("fig1: d must be positive");
    if (!(kappa > 0.0)) throw std::invalid_argument("fig1: kappa must be positive");
    if (!(epsilon > 0.0 && epsilon < 0.5))
      throw std::invalid_argument("fig1: epsilon must lie in (0, 1/2); the corruption signal divides by it");
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("fig1: gamma must lie in (0, 1)");
  }

  /// Corruption magnitude C = ((2 - eps) d + kappa) / eps.
  double corruption_signal() const { return ((2.0 - epsilon) * d + kappa) / epsilon; }
  double beta() const { return p * gamma / (1.0 - gamma * p); }
  /// ||Q~*_c - Q*||_inf under the Huber attack with the signal above.
  double gap() const { return 2.0 * d + kappa; }
};

/**
 * Dynamics and rewards only. With `reward_noise` w > 0 every deterministic reward v
 * becomes uniform(v - w, v + w); means and hence Q* are unchanged.
 */
inline TabularMdp make_mdp(double p, double d, double gamma, double reward_noise = 0.0) {
  const std::size_t S = kNumStates;
  std::vector<double> P(S * kNumActions * S, 0.0);
  auto set = [&](State s, Action a, State next, double prob) { P[(s * kNumActions + a) * S + next] = prob; };

  set(kStart, kLeft, kUpperL, p);
  set(kStart, kLeft, kSinkL, 1.0 - p);
  set(kStart, kRight, kUpperR, p);
  set(kStart, kRight, kSinkR, 1.0 - p);
  for (Action a : {kLeft, kRight}) {
    set(kUpperL, a, kUpperL, p);
    set(kUpperL, a, kSinkL, 1.0 - p);
    set(kUpperR, a, kUpperR, p);
    set(kUpperR, a, kSinkR, 1.0 - p);
    set(kSinkR, a, kSinkR, 1.0);
    set(kSinkL, a, kSinkL, 1.0);
  }

  auto reward = [&](double v) {
    return reward_noise > 0.0 ? RewardModel::uniform(v - reward_noise, v + reward_noise)
                              : RewardModel::deterministic(v);
  };
  std::vector<RewardModel> R;
  R.reserve(S * kNumActions);
  for (State s = 0; s < S; ++s) {
    for (Action a = 0; a < kNumActions; ++a) {
      if (s == kStart) R.push_back(reward(a == kLeft ? d : -d));
      else if (s == kUpperL || s == kUpperR) R.push_back(reward(1.0));
      else R.push_back(reward(0.0));
    }
  }
  return TabularMdp(S, kNumActions, std::move(P), std::move(R), gamma);
}

/// Closed-form Q* of the construction.
inline QTable q_star_closed_form(double p, double d, double gamma) {
  const double upper = 1.0 / (1.0 - gamma * p);
  const double beta = p * gamma * upper;
  QTable q(kNumStates, kNumActions);
  q(kStart, kLeft) = d + beta;
  q(kStart, kRight) = -d + beta;
  for (Action a : {kLeft, kRight}) {
    q(kUpperL, a) = upper;
    q(kUpperR, a) = upper;
  }
  return q;
}

/// Per-pair Huber corruption: state 1 observes -C under L and +C under R; other pairs pass through.
inline std::vector<std::optional<RewardModel>> huber_corruption(double corruption_signal) {
  std::vector<std::optional<RewardModel>> c(kNumStates * kNumActions);
  c[kStart * kNumActions + kLeft] = RewardModel::deterministic(-corruption_signal);
  c[kStart * kNumActions + kRight] = RewardModel::deterministic(corruption_signal);
  return c;
}

/// Reward means of the Huber mixture (1 - eps) R + eps m_c, pair-indexed.
inline std::vector<double> huber_mixture_means(const TabularMdp& mdp,
                                               const std::vector<std::optional<RewardModel>>& corruption,
                                               double epsilon) {
  std::vector<double> means(mdp.mean_rewards().begin(), mdp.mean_rewards().end());
  for (std::size_t i = 0; i < means.size(); ++i)
    if (corruption[i]) means[i] = (1.0 - epsilon) * means[i] + epsilon * corruption[i]->mean();
  return means;
}

struct Instance {
  TabularMdp mdp;
  QTable q_star;
  QTable q_tilde;  ///< fixed point of the attacked Bellman operator
  double corruption_signal;
};

inline Instance build(const Params& params) {
  params.validate();
  const double C = params.corruption_signal();
  const double beta = params.beta();
  QTable q_star = q_star_closed_form(params.p, params.d, params.gamma);
  QTable q_tilde = q_star;
  q_tilde(kStart, kLeft) = -params.d - params.kappa + beta;
  q_tilde(kStart, kRight) = params.d + params.kappa + beta;
  return {make_mdp(params.p, params.d, params.gamma), std::move(q_star), std::move(q_tilde), C};
}

}  // namespace rql::fig1

namespace rql {

using Fig1Params = fig1::Params;

inline fig1::Instance build_fig1_mdp(const Fig1Params& params) { return fig1::build(params); }

}  // namespace rql
