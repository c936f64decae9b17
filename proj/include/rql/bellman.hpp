#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rql/mdp.hpp"

namespace rql {

/// Value iteration hit its iteration cap before reaching the requested residual.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual, std::size_t iterations)
      : std::runtime_error(what), residual_(residual), iterations_(iterations) {}

  double residual() const { return residual_; }
  std::size_t iterations() const { return iterations_; }

 private:
  double residual_;
  std::size_t iterations_;
};

/// (T*Q)(s,a) = R(s,a) + gamma * sum_s' P(s'|s,a) max_a' Q(s',a'), with exact mean rewards.
inline QTable bellman_apply(const QTable& q, const TabularMdp& mdp) {
  if (q.num_states() != mdp.num_states() || q.num_actions() != mdp.num_actions())
    throw std::invalid_argument("bellman_apply: Q-table dimensions do not match the MDP");

  std::vector<double> v(mdp.num_states());
  for (State s = 0; s < mdp.num_states(); ++s) v[s] = q.max_in_row(s);

  QTable out(mdp.num_states(), mdp.num_actions());
  const double gamma = mdp.discount();
  for (State s = 0; s < mdp.num_states(); ++s) {
    for (Action a = 0; a < mdp.num_actions(); ++a) {
      const auto row = mdp.transition_row(s, a);
      double expected = 0.0;
      for (State next = 0; next < row.size(); ++next) expected += row[next] * v[next];
      out(s, a) = mdp.mean_reward(s, a) + gamma * expected;
    }
  }
  return out;
}

struct ValueIterationReport {
  QTable q;
  double residual = 0.0;  ///< ||T*(q) - q||_inf at exit
  std::size_t iterations = 0;
};

/// Iteration cap: steps needed for the contraction to shrink ||R||/(1-gamma) to tol*(1-gamma), plus slack.
inline std::size_t value_iteration_cap(const TabularMdp& mdp, double tol) {
  constexpr std::size_t kMargin = 100;
  const double gamma = mdp.discount();
  const double r = mdp.max_abs_mean_reward();
  if (r == 0.0) return kMargin;
  const double ratio = r / (tol * (1.0 - gamma) * (1.0 - gamma));
  const double steps = std::ceil(std::log(std::max(ratio, 1.0)) / std::log(1.0 / gamma));
  return static_cast<std::size_t>(steps) + kMargin;
}

/**
 * Value iteration from the zero table. Stops once ||T*(Q) - Q||_inf <= tol*(1-gamma)
 * and returns T*(Q), which then lies within gamma * tol of Q*.
 */
inline ValueIterationReport value_iteration(const TabularMdp& mdp, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("value_iteration: tol must be positive");
  const double target = tol * (1.0 - mdp.discount());
  const std::size_t cap = value_iteration_cap(mdp, tol);

  QTable q(mdp.num_states(), mdp.num_actions());
  double residual = 0.0;
  for (std::size_t it = 0; it <= cap; ++it) {
    QTable next = bellman_apply(q, mdp);
    residual = linf_distance(next, q);
    if (residual <= target) return {std::move(next), residual, it + 1};
    q = std::move(next);
  }
  std::ostringstream os;
  os << "value iteration did not reach residual " << target << " within " << cap
     << " iterations (achieved " << residual << ")";
  throw SolverError(os.str(), residual, cap);
}

inline QTable solve_q_star(const TabularMdp& mdp, double tol) {
  return value_iteration(mdp, tol).q;
}

/// Row-wise argmax; ties go to the lowest action index.
inline Policy greedy_policy(const QTable& q) {
  Policy policy;
  policy.actions.resize(q.num_states());
  for (State s = 0; s < q.num_states(); ++s) {
    const auto row = q.row(s);
    Action best = 0;
    for (Action a = 1; a < row.size(); ++a)
      if (row[a] > row[best]) best = a;
    policy.actions[s] = best;
  }
  return policy;
}

/// Same dynamics and discount, rewards replaced by point masses at `perturbed_means` (pair-indexed).
inline TabularMdp perturbed_mdp(const TabularMdp& mdp, std::span<const double> perturbed_means) {
  if (perturbed_means.size() != mdp.num_pairs())
    throw std::invalid_argument("perturbed_mdp: need one mean per state-action pair");
  std::vector<RewardModel> rewards;
  rewards.reserve(perturbed_means.size());
  for (double m : perturbed_means) rewards.push_back(RewardModel::deterministic(m));
  return TabularMdp(mdp.num_states(), mdp.num_actions(),
                    std::vector<double>(mdp.transitions().begin(), mdp.transitions().end()),
                    std::move(rewards), mdp.discount());
}

}  // namespace rql
