#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include "rql/random.hpp"

namespace rql {

enum class RewardKind {
  deterministic,
  uniform,
  truncated_gaussian,
  bernoulli_scaled,
  lognormal,
  pareto,
};

inline std::string_view to_string(RewardKind kind) {
  switch (kind) {
    case RewardKind::deterministic: return "deterministic";
    case RewardKind::uniform: return "uniform";
    case RewardKind::truncated_gaussian: return "truncated-gaussian";
    case RewardKind::bernoulli_scaled: return "bernoulli-scaled";
    case RewardKind::lognormal: return "lognormal";
    case RewardKind::pareto: return "pareto";
  }
  return "unknown";
}

/**
 * Distribution of the immediate reward of one state-action pair.
 *
 * Parameters are stored positionally in the order of the factory arguments.
 * Mean and variance are analytic; the unbounded kinds (lognormal, pareto)
 * report an infinite support bound.
 */
class RewardModel {
 public:
  static RewardModel deterministic(double value) {
    return RewardModel(RewardKind::deterministic, {value, 0.0, 0.0});
  }

  static RewardModel uniform(double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("uniform reward: lo > hi");
    return RewardModel(RewardKind::uniform, {lo, hi, 0.0});
  }

  /// Gaussian(mean, sd) conditioned on [mean - bound, mean + bound].
  static RewardModel truncated_gaussian(double mean, double sd, double bound) {
    if (!(sd > 0.0) || !(bound > 0.0))
      throw std::invalid_argument("truncated-gaussian reward: sd and bound must be positive");
    return RewardModel(RewardKind::truncated_gaussian, {mean, sd, bound});
  }

  /// `hi` with probability p, `lo` otherwise.
  static RewardModel bernoulli_scaled(double p, double hi, double lo) {
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("bernoulli-scaled reward: p outside [0,1]");
    return RewardModel(RewardKind::bernoulli_scaled, {p, hi, lo});
  }

  static RewardModel lognormal(double mu, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("lognormal reward: sigma must be positive");
    return RewardModel(RewardKind::lognormal, {mu, sigma, 0.0});
  }

  /// Shape must exceed 2 so that the variance is finite.
  static RewardModel pareto(double scale, double shape) {
    if (!(scale > 0.0)) throw std::invalid_argument("pareto reward: scale must be positive");
    if (!(shape > 2.0)) throw std::invalid_argument("pareto reward: shape must exceed 2");
    return RewardModel(RewardKind::pareto, {scale, shape, 0.0});
  }

  RewardKind kind() const { return kind_; }
  const std::array<double, 3>& params() const { return params_; }

  double mean() const {
    const auto [a, b, c] = params_;
    switch (kind_) {
      case RewardKind::deterministic: return a;
      case RewardKind::uniform: return 0.5 * (a + b);
      case RewardKind::truncated_gaussian: return a;
      case RewardKind::bernoulli_scaled: return a * b + (1.0 - a) * c;
      case RewardKind::lognormal: return std::exp(a + 0.5 * b * b);
      case RewardKind::pareto: return b * a / (b - 1.0);
    }
    return 0.0;
  }

  double variance() const {
    const auto [a, b, c] = params_;
    switch (kind_) {
      case RewardKind::deterministic: return 0.0;
      case RewardKind::uniform: return (b - a) * (b - a) / 12.0;
      case RewardKind::truncated_gaussian: {
        const double z = c / b;
        const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
        const double mass = std::erf(z / std::numbers::sqrt2);
        return b * b * (1.0 - 2.0 * z * pdf / mass);
      }
      case RewardKind::bernoulli_scaled: return a * (1.0 - a) * (b - c) * (b - c);
      case RewardKind::lognormal: return std::expm1(b * b) * std::exp(2.0 * a + b * b);
      case RewardKind::pareto: return a * a * b / ((b - 1.0) * (b - 1.0) * (b - 2.0));
    }
    return 0.0;
  }

  bool bounded() const {
    return kind_ != RewardKind::lognormal && kind_ != RewardKind::pareto;
  }

  /// Smallest r such that every draw lies in [-r, r].
  double support_bound() const {
    const auto [a, b, c] = params_;
    switch (kind_) {
      case RewardKind::deterministic: return std::abs(a);
      case RewardKind::uniform: return std::max(std::abs(a), std::abs(b));
      case RewardKind::truncated_gaussian: return std::abs(a) + c;
      case RewardKind::bernoulli_scaled:
        if (a == 0.0) return std::abs(c);
        if (a == 1.0) return std::abs(b);
        return std::max(std::abs(b), std::abs(c));
      case RewardKind::lognormal:
      case RewardKind::pareto: return std::numeric_limits<double>::infinity();
    }
    return 0.0;
  }

  double sample(RandomStream& rng) const {
    const auto [a, b, c] = params_;
    switch (kind_) {
      case RewardKind::deterministic: return a;
      case RewardKind::uniform: return a + (b - a) * uniform01(rng);
      case RewardKind::truncated_gaussian: {
        std::normal_distribution<double> normal(a, b);
        for (;;) {
          const double x = normal(rng);
          if (std::abs(x - a) <= c) return x;
        }
      }
      case RewardKind::bernoulli_scaled: return uniform01(rng) < a ? b : c;
      case RewardKind::lognormal: return std::lognormal_distribution<double>(a, b)(rng);
      case RewardKind::pareto: {
        // 1 - U lies in (0, 1], keeping the power finite.
        const double u = 1.0 - uniform01(rng);
        return a * std::pow(u, -1.0 / b);
      }
    }
    return 0.0;
  }

  friend bool operator==(const RewardModel&, const RewardModel&) = default;

 private:
  RewardModel(RewardKind kind, std::array<double, 3> params) : kind_(kind), params_(params) {
    for (double p : params_)
      if (!std::isfinite(p)) throw std::invalid_argument("reward model parameters must be finite");
  }

  RewardKind kind_;
  std::array<double, 3> params_;
};

}  // namespace rql
