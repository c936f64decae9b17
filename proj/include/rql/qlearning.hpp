#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rql/attack.hpp"
#include "rql/bellman.hpp"
#include "rql/mdp.hpp"
#include "rql/random.hpp"
#include "rql/trimmed_mean.hpp"

namespace rql {

/// Step sizes for vanilla Q-learning: constant alpha, or alpha_t = a / (t + b).
struct StepSchedule {
  enum class Kind { constant, robbins_monro };

  Kind kind = Kind::robbins_monro;
  double alpha = 0.1;
  double a = 1.0;
  double b = 10.0;

  static StepSchedule constant(double alpha) { return {Kind::constant, alpha, 0.0, 0.0}; }
  static StepSchedule robbins_monro(double a, double b) { return {Kind::robbins_monro, 0.0, a, b}; }

  double at(std::size_t t) const {
    return kind == Kind::constant ? alpha : a / (static_cast<double>(t) + b);
  }

  void validate() const {
    if (kind == Kind::constant) {
      if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("constant step size must lie in (0, 1)");
    } else if (!(a > 0.0 && b > 0.0 && a < b)) {
      // alpha_0 = a / b is the largest step.
      throw std::invalid_argument("robbins-monro schedule needs 0 < a < b so that every step lies in (0, 1)");
    }
  }
};

struct VanillaConfig {
  StepSchedule schedule = StepSchedule::robbins_monro(1.0, 10.0);
  std::size_t horizon = 1000;
  std::uint64_t seed = 0;
};

struct RobustConfig {
  double epsilon = 0.0;
  double delta = 0.05;
  std::size_t horizon = 1000;
  double universal_constant = 1.0;  ///< C >= 1 in the threshold
  double reward_scale = 1.0;        ///< r-bar >= 1
  std::optional<double> step_size;  ///< defaults to log T / ((1 - gamma) T)
  std::uint64_t seed = 0;
  std::size_t retrim_every = 1;
  std::optional<QTable> initial;

  double delta1(std::size_t num_pairs) const {
    return delta / (2.0 * static_cast<double>(num_pairs) * static_cast<double>(horizon));
  }

  double alpha(double gamma) const {
    if (step_size) return *step_size;
    const double T = static_cast<double>(horizon);
    return std::log(T) / ((1.0 - gamma) * T);
  }

  void validate(const TabularMdp& mdp) const {
    if (!(epsilon >= 0.0 && epsilon < 0.5)) throw std::invalid_argument("robust: epsilon must lie in [0, 1/2)");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("robust: delta must lie in (0, 1)");
    if (horizon == 0) throw std::invalid_argument("robust: horizon must be positive");
    if (!(universal_constant >= 1.0)) throw std::invalid_argument("robust: universal constant must be >= 1");
    if (!(reward_scale >= 1.0)) throw std::invalid_argument("robust: reward scale must be >= 1");
    if (retrim_every == 0) throw std::invalid_argument("robust: retrim_every must be positive");
    const double d1 = delta1(mdp.num_pairs());
    if (!(d1 > 0.0 && d1 < 1.0)) throw std::invalid_argument("robust: delta1 must lie in (0, 1)");
    const double a = alpha(mdp.discount());
    if (!(a > 0.0 && a < 1.0))
      throw std::invalid_argument("robust: step size " + std::to_string(a) + " outside (0, 1); increase the horizon");
    if (initial && (initial->num_states() != mdp.num_states() || initial->num_actions() != mdp.num_actions()))
      throw std::invalid_argument("robust: initial table does not match the MDP");
  }
};

/// r-bar for rewards with unbounded support: max(bound on |means|, standard-deviation bound).
inline double heavy_tailed_reward_scale(double mean_bound, double sd_bound) {
  return std::max(mean_bound, sd_bound);
}

/// Number of samples below which the trimmed-mean bound is not relied on: ceil(2 log(4 / delta1)).
/// Defined for any delta1 in (0, 4); learner configs additionally keep delta1 below 1.
inline std::size_t t_lim(double delta1) {
  if (!(delta1 > 0.0 && delta1 < 4.0)) throw std::invalid_argument("t_lim: delta1 must lie in (0, 4)");
  return static_cast<std::size_t>(std::ceil(2.0 * std::log(4.0 / delta1)));
}

/// G_t = 2 r for t <= T_lim; C r (sqrt(log(4/delta1) / t) + sqrt(eps)) + r afterwards.
inline double threshold_g(std::size_t t, double epsilon, double delta1, double universal_constant,
                          double reward_scale) {
  if (t <= t_lim(delta1)) return 2.0 * reward_scale;
  const double concentration = std::sqrt(std::log(4.0 / delta1) / static_cast<double>(t));
  return universal_constant * reward_scale * (concentration + std::sqrt(epsilon)) + reward_scale;
}

/// Parameters of the filtering and thresholding stage, fixed for a run.
struct ThresholdSchedule {
  double epsilon = 0.0;
  double delta1 = 0.0;
  double universal_constant = 1.0;
  double reward_scale = 1.0;
  std::size_t limit = 0;  ///< T_lim

  static ThresholdSchedule make(const RobustConfig& cfg, std::size_t num_pairs) {
    const double d1 = cfg.delta1(num_pairs);
    return {cfg.epsilon, d1, cfg.universal_constant, cfg.reward_scale, t_lim(d1)};
  }

  double operator()(std::size_t t) const {
    return threshold_g(t, epsilon, delta1, universal_constant, reward_scale);
  }

  /// Deterministic bound on every iterate started from zero: 3 C r / (1 - gamma).
  double iterate_bound(double gamma) const { return 3.0 * universal_constant * reward_scale / (1.0 - gamma); }
};

namespace detail {

inline double td_blend(double q, double reward, double next_value, double alpha, double gamma) {
  return (1.0 - alpha) * q + alpha * (reward + gamma * next_value);
}

inline void check_step_shapes(const QTable& q, std::size_t rewards, std::size_t next_states) {
  if (rewards != q.size() || next_states != q.size())
    throw std::invalid_argument("Q-learning step: reward and next-state vectors must have one entry per pair");
}

}  // namespace detail

/// Synchronous update with the observed rewards used as is.
inline QTable vanilla_step(const QTable& q, std::span<const double> observed, std::span<const State> next_states,
                           double alpha, double gamma) {
  detail::check_step_shapes(q, observed.size(), next_states.size());
  QTable out(q.num_states(), q.num_actions());
  for (State s = 0; s < q.num_states(); ++s) {
    for (Action a = 0; a < q.num_actions(); ++a) {
      const std::size_t i = s * q.num_actions() + a;
      out(s, a) = detail::td_blend(q(s, a), observed[i], q.max_in_row(next_states[i]), alpha, gamma);
    }
  }
  return out;
}

struct RobustStep {
  QTable q;
  std::size_t clamps = 0;  ///< pairs whose filtered reward exceeded G_t in magnitude
};

/// Thresholds already-filtered rewards at +-g_t and applies the synchronous update.
inline RobustStep robust_update(const QTable& q, std::span<const double> filtered, std::span<const State> next_states,
                                double g_t, double alpha, double gamma) {
  detail::check_step_shapes(q, filtered.size(), next_states.size());
  RobustStep step{QTable(q.num_states(), q.num_actions()), 0};
  for (State s = 0; s < q.num_states(); ++s) {
    for (Action a = 0; a < q.num_actions(); ++a) {
      const std::size_t i = s * q.num_actions() + a;
      double r = filtered[i];
      if (std::abs(r) > g_t) {
        r = std::copysign(g_t, r);
        ++step.clamps;
      }
      step.q(s, a) = detail::td_blend(q(s, a), r, q.max_in_row(next_states[i]), alpha, gamma);
    }
  }
  return step;
}

/**
 * One robust iteration from raw histories: trim each pair's history y_0..y_t,
 * clamp at G_t, update. Every history must hold exactly t + 1 observations.
 */
inline RobustStep robust_step(const QTable& q, std::span<const std::vector<double>> histories,
                              std::span<const State> next_states, std::size_t t, const ThresholdSchedule& schedule,
                              double alpha, double gamma) {
  if (histories.size() != q.size()) throw std::invalid_argument("robust_step: need one history per pair");
  std::vector<double> filtered(histories.size());
  for (std::size_t i = 0; i < histories.size(); ++i) {
    if (histories[i].size() != t + 1)
      throw std::invalid_argument("robust_step: history length " + std::to_string(histories[i].size()) +
                                  " does not match iteration " + std::to_string(t));
    filtered[i] = trim(histories[i], schedule.epsilon, schedule.delta1);
  }
  return robust_update(q, filtered, next_states, schedule(t), alpha, gamma);
}

struct TraceRow {
  std::size_t t = 0;
  double error = 0.0;       ///< d_t = ||Q_t - reference||_inf
  std::size_t clamps = 0;   ///< threshold activations in the step that produced Q_t
  bool corrupted = false;   ///< whether the observation that produced Q_t was corrupted
  double max_abs_q = 0.0;
};

/**
 * Per-iteration record of a run. Row t describes Q_t; rows 1..T also carry the
 * clamp count and corruption flag of the step that produced them (row 0 has none).
 */
struct RunTrace {
  std::vector<TraceRow> rows;
  QTable final_q;
  std::string config;
  std::uint64_t seed = 0;
  double iterate_bound = std::numeric_limits<double>::infinity();
  std::size_t bound_violations = 0;

  double final_error() const { return rows.empty() ? 0.0 : rows.back().error; }
  std::size_t total_clamps() const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.clamps;
    return n;
  }
};

namespace detail {

/// Draws per-pair substreams: pair i uses stream i + 1, the adversary stream 0.
struct SamplingStreams {
  std::vector<RandomStream> pairs;
  RandomStream adversary;

  SamplingStreams(std::uint64_t seed, std::size_t num_pairs) : adversary(make_stream(seed, 0)) {
    pairs.reserve(num_pairs);
    for (std::size_t i = 0; i < num_pairs; ++i) pairs.push_back(make_stream(seed, i + 1));
  }

  void draw(const TabularMdp& mdp, std::span<double> rewards, std::span<State> next) {
    for (State s = 0; s < mdp.num_states(); ++s) {
      for (Action a = 0; a < mdp.num_actions(); ++a) {
        const std::size_t i = mdp.pair_index(s, a);
        rewards[i] = mdp.rewards()[i].sample(pairs[i]);
        next[i] = mdp.sample_next_state(s, a, pairs[i]);
      }
    }
  }
};

inline TraceRow make_row(std::size_t t, const QTable& q, const QTable& reference, std::size_t clamps,
                         bool corrupted) {
  return {t, linf_distance(q, reference), clamps, corrupted, q.max_abs()};
}

inline void check_reference(const TabularMdp& mdp, const QTable& reference) {
  if (reference.num_states() != mdp.num_states() || reference.num_actions() != mdp.num_actions())
    throw std::invalid_argument("reference table does not match the MDP");
}

}  // namespace detail

inline std::string describe(const VanillaConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "vanilla horizon=" << cfg.horizon << " seed=" << cfg.seed;
  if (cfg.schedule.kind == StepSchedule::Kind::constant) os << " alpha=" << cfg.schedule.alpha;
  else os << " robbins-monro a=" << cfg.schedule.a << " b=" << cfg.schedule.b;
  return os.str();
}

inline std::string describe(const RobustConfig& cfg, double gamma) {
  std::ostringstream os;
  os.precision(17);
  os << "robust horizon=" << cfg.horizon << " seed=" << cfg.seed << " epsilon=" << cfg.epsilon
     << " delta=" << cfg.delta << " C=" << cfg.universal_constant << " r_bar=" << cfg.reward_scale
     << " alpha=" << cfg.alpha(gamma) << " retrim_every=" << cfg.retrim_every;
  return os.str();
}

/// Vanilla synchronous Q-learning from the zero table for cfg.horizon steps; d_t measured against `reference`.
inline RunTrace run_vanilla(const TabularMdp& mdp, Adversary adversary, const VanillaConfig& cfg,
                            const QTable& reference) {
  cfg.schedule.validate();
  detail::check_reference(mdp, reference);
  const std::size_t n = mdp.num_pairs();
  detail::SamplingStreams streams(cfg.seed, n);
  std::vector<double> clean(n);
  std::vector<State> next(n);

  RunTrace trace;
  trace.seed = cfg.seed;
  trace.config = describe(cfg);
  trace.rows.reserve(cfg.horizon + 1);

  QTable q(mdp.num_states(), mdp.num_actions());
  trace.rows.push_back(detail::make_row(0, q, reference, 0, false));
  for (std::size_t t = 0; t < cfg.horizon; ++t) {
    streams.draw(mdp, clean, next);
    const ObservationRecord obs = adversary.observe(clean, q, streams.adversary);
    q = vanilla_step(q, obs.observed, next, cfg.schedule.at(t), mdp.discount());
    trace.rows.push_back(detail::make_row(t + 1, q, reference, 0, obs.corrupted));
  }
  trace.final_q = std::move(q);
  return trace;
}

/**
 * Robust Q-learning. Each pair keeps its full observation history; at iteration t
 * the history y_0..y_t is trimmed, thresholded at G_t and used in the update.
 * The trimmed mean is maintained incrementally (StreamingTrim), which matches a
 * from-scratch trim of the history. The deterministic iterate bound is checked
 * after every step and violations are counted in the trace.
 */
inline RunTrace run_robust(const TabularMdp& mdp, Adversary adversary, const RobustConfig& cfg,
                           const QTable& reference) {
  cfg.validate(mdp);
  detail::check_reference(mdp, reference);
  const std::size_t n = mdp.num_pairs();
  const double gamma = mdp.discount();
  const double alpha = cfg.alpha(gamma);
  const ThresholdSchedule schedule = ThresholdSchedule::make(cfg, n);
  const TrimConfig trim_cfg{schedule.epsilon, schedule.delta1};

  detail::SamplingStreams streams(cfg.seed, n);
  std::vector<double> clean(n);
  std::vector<State> next(n);
  std::vector<StreamingTrim> histories(n);
  std::vector<double> filtered(n);

  RunTrace trace;
  trace.seed = cfg.seed;
  trace.config = describe(cfg, gamma);
  trace.rows.reserve(cfg.horizon + 1);

  QTable q = cfg.initial ? *cfg.initial : QTable(mdp.num_states(), mdp.num_actions());
  trace.iterate_bound = std::max(schedule.iterate_bound(gamma), q.max_abs());
  trace.rows.push_back(detail::make_row(0, q, reference, 0, false));
  for (std::size_t t = 0; t < cfg.horizon; ++t) {
    streams.draw(mdp, clean, next);
    const ObservationRecord obs = adversary.observe(clean, q, streams.adversary);
    const bool retrim = t % cfg.retrim_every == 0;
    for (std::size_t i = 0; i < n; ++i) {
      histories[i].push(obs.observed[i]);
      if (retrim) filtered[i] = histories[i].estimate(trim_cfg).estimate;
    }
    RobustStep step = robust_update(q, filtered, next, schedule(t), alpha, gamma);
    q = std::move(step.q);
    const TraceRow row = detail::make_row(t + 1, q, reference, step.clamps, obs.corrupted);
    if (row.max_abs_q > trace.iterate_bound) ++trace.bound_violations;
    trace.rows.push_back(row);
  }
  trace.final_q = std::move(q);
  return trace;
}

/// Robust run with d_t measured against Q* from value iteration at tolerance 1e-10.
inline RunTrace run_robust(const TabularMdp& mdp, Adversary adversary, const RobustConfig& cfg) {
  const QTable reference = solve_q_star(mdp, 1e-10);
  return run_robust(mdp, std::move(adversary), cfg, reference);
}

}  // namespace rql
