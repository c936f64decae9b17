#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "rql/order_statistic_tree.hpp"

namespace rql {

/// phi_{lo,hi}(x): clamp x into [lo, hi].
inline double phi_clamp(double x, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("phi_clamp: lo > hi");
  if (x > hi) return hi;
  if (x < lo) return lo;
  return x;
}

struct TrimConfig {
  double epsilon = 0.0;  ///< assumed corruption fraction
  double delta = 0.05;   ///< failure probability

  /// Accepts epsilon in [0, 1/2); the concentration guarantee itself needs epsilon < 1/16.
  void validate() const {
    if (!(epsilon >= 0.0 && epsilon < 0.5)) throw std::invalid_argument("TrimConfig: epsilon must lie in [0, 1/2)");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("TrimConfig: delta must lie in (0, 1)");
  }

  /// Trimming level zeta = 8 eps + 24 log(4/delta) / M.
  double zeta(std::size_t sample_size) const {
    return 8.0 * epsilon + 24.0 * std::log(4.0 / delta) / static_cast<double>(sample_size);
  }

  /// Preconditions of the high-probability error bound for a sample of this size.
  bool guarantee_applies(std::size_t sample_size) const {
    return epsilon < 1.0 / 16.0 && delta >= 4.0 * std::exp(-0.5 * static_cast<double>(sample_size));
  }
};

struct TrimOutput {
  double estimate = 0.0;
  double zeta = 0.0;
  double lower = 0.0;  ///< lower quantile of the quantile half (median of the averaging half on fallback)
  double upper = 0.0;
  bool fallback = false;           ///< zeta >= 1/2 or empty quantile window: median of the averaging half
  bool guarantee_applies = false;  ///< sample size and epsilon meet the error-bound preconditions
};

/// 1-based quantile ranks into a sorted half of size m; `usable` is false in the degenerate regime.
struct QuantileRanks {
  std::size_t lo = 0;
  std::size_t hi = 0;
  bool usable = false;
};

inline QuantileRanks quantile_ranks(double zeta, std::size_t m) {
  QuantileRanks r;
  if (zeta >= 0.5 || m == 0) return r;
  const double md = static_cast<double>(m);
  const auto clamp_rank = [m](double k) {
    return static_cast<std::size_t>(std::clamp(k, 1.0, static_cast<double>(m)));
  };
  r.lo = clamp_rank(std::ceil(zeta * md));
  r.hi = clamp_rank(std::floor((1.0 - zeta) * md));
  r.usable = r.lo <= r.hi;
  return r;
}

namespace detail {

inline double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  const double upper = *mid;
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

}  // namespace detail

/**
 * Split-sample trimmed mean.
 *
 * Even positions form the quantile half, odd positions the averaging half (for odd M
 * the quantile half holds the extra point; zeta still uses the full M). The quantile
 * half supplies the clamp bounds at ranks ceil(zeta m) and floor((1 - zeta) m); the
 * estimate is the mean of the clamped averaging half. When zeta >= 1/2 the window is
 * empty and the median of the averaging half is returned instead.
 */
inline TrimOutput trimmed_mean(std::span<const double> data, const TrimConfig& cfg) {
  cfg.validate();
  const std::size_t M = data.size();
  if (M < 2) throw std::invalid_argument("trimmed_mean: need at least two samples");

  std::vector<double> quantile_half;
  std::vector<double> average_half;
  quantile_half.reserve(M / 2 + 1);
  average_half.reserve(M / 2);
  for (std::size_t i = 0; i < M; ++i) {
    if (std::isnan(data[i])) throw std::invalid_argument("trimmed_mean: NaN in data");
    (i % 2 == 0 ? quantile_half : average_half).push_back(data[i]);
  }

  TrimOutput out;
  out.zeta = cfg.zeta(M);
  const QuantileRanks ranks = quantile_ranks(out.zeta, quantile_half.size());
  if (!ranks.usable) {
    out.estimate = detail::median_of(average_half);
    out.lower = out.upper = out.estimate;
    out.fallback = true;
    return out;
  }

  std::sort(quantile_half.begin(), quantile_half.end());
  out.lower = quantile_half[ranks.lo - 1];
  out.upper = quantile_half[ranks.hi - 1];

  // Averaging relative to the first element keeps constant data exact.
  const double ref = average_half.front();
  double acc = 0.0;
  for (double x : average_half) acc += phi_clamp(x, out.lower, out.upper) - ref;
  out.estimate = ref + acc / static_cast<double>(average_half.size());
  out.guarantee_applies = cfg.guarantee_applies(M);
  return out;
}

/// Robust reward estimate from a full observation history. A single observation is returned as is.
inline double trim(std::span<const double> history, double epsilon, double delta1) {
  if (history.empty()) throw std::invalid_argument("trim: empty history");
  if (history.size() == 1) return history.front();
  return trimmed_mean(history, TrimConfig{epsilon, delta1}).estimate;
}

/**
 * Incremental form of trimmed_mean over a growing sequence: after pushing y_0..y_n,
 * estimate() equals trimmed_mean({y_0..y_n}) up to floating-point summation order,
 * at O(log n) cost per push and per estimate.
 */
class StreamingTrim {
 public:
  void push(double y) {
    if (std::isnan(y)) throw std::invalid_argument("StreamingTrim: NaN observation");
    if (count_ == 0) first_ = y;
    (count_ % 2 == 0 ? quantile_half_ : average_half_).insert(y);
    ++count_;
  }

  std::size_t size() const { return count_; }

  TrimOutput estimate(const TrimConfig& cfg) const {
    if (count_ == 0) throw std::invalid_argument("StreamingTrim: no observations");
    TrimOutput out;
    if (count_ == 1) {
      out.estimate = out.lower = out.upper = first_;
      out.fallback = true;
      out.zeta = cfg.zeta(1);
      return out;
    }
    out.zeta = cfg.zeta(count_);
    const QuantileRanks ranks = quantile_ranks(out.zeta, quantile_half_.size());
    if (!ranks.usable) {
      out.estimate = median(average_half_);
      out.lower = out.upper = out.estimate;
      out.fallback = true;
      return out;
    }
    out.lower = quantile_half_.kth(ranks.lo);
    out.upper = quantile_half_.kth(ranks.hi);

    const double ref = average_half_.offset();
    const auto below = static_cast<double>(average_half_.count_below(out.lower));
    const auto above = static_cast<double>(average_half_.count_above(out.upper));
    const double acc = below * (out.lower - ref) + above * (out.upper - ref) +
                       average_half_.shifted_sum_between(out.lower, out.upper);
    out.estimate = ref + acc / static_cast<double>(average_half_.size());
    out.guarantee_applies = cfg.guarantee_applies(count_);
    return out;
  }

 private:
  static double median(const OrderStatisticTree& tree) {
    const std::size_t n = tree.size();
    const double upper = tree.kth(n / 2 + 1);
    if (n % 2 == 1) return upper;
    return 0.5 * (tree.kth(n / 2) + upper);
  }

  OrderStatisticTree quantile_half_;
  OrderStatisticTree average_half_;
  std::size_t count_ = 0;
  double first_ = 0.0;
};

}  // namespace rql
