#pragma once

// Reference computations written independently of the library: plain loops over raw
// arrays, no shared helpers. Tests compare library output against these.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

/// (T Q)(s,a) = R(s,a) + gamma * sum_{s'} P(s'|s,a) max_{a'} Q(s',a'), written as a triple loop.
/// P is laid out [s][a][s'], R and Q as [s][a].
inline std::vector<double> bellman(const std::vector<double>& P, const std::vector<double>& R, double gamma,
                                   const std::vector<double>& Q, std::size_t S, std::size_t A) {
  std::vector<double> out(S * A, 0.0);
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t a = 0; a < A; ++a) {
      double expected = 0.0;
      for (std::size_t n = 0; n < S; ++n) {
        double best = Q[n * A];
        for (std::size_t b = 1; b < A; ++b)
          if (Q[n * A + b] > best) best = Q[n * A + b];
        expected += P[(s * A + a) * S + n] * best;
      }
      out[s * A + a] = R[s * A + a] + gamma * expected;
    }
  }
  return out;
}

/// k-th smallest (1-based) by counting: the x with #{y < x} < k <= #{y <= x}.
inline double kth_by_counting(const std::vector<double>& v, std::size_t k) {
  for (double x : v) {
    std::size_t less = 0;
    std::size_t less_equal = 0;
    for (double y : v) {
      if (y < x) ++less;
      if (y <= x) ++less_equal;
    }
    if (less < k && k <= less_equal) return x;
  }
  return v.front();
}

inline double median_by_counting(const std::vector<double>& v) {
  const std::size_t n = v.size();
  if (n % 2 == 1) return kth_by_counting(v, n / 2 + 1);
  return (kth_by_counting(v, n / 2) + kth_by_counting(v, n / 2 + 1)) / 2.0;
}

/**
 * Literal split-sample trimmed mean. Half A = entries at even positions (quantiles),
 * half B = entries at odd positions (averaged). zeta = 8 eps + 24 log(4/delta) / M;
 * bounds are the ceil(zeta m)-th and floor((1 - zeta) m)-th smallest of A (clamped to
 * valid ranks); if zeta >= 1/2 or the lower rank exceeds the upper, the median of B.
 */
inline double trimmed_mean(const std::vector<double>& data, double eps, double delta) {
  const std::size_t M = data.size();
  std::vector<double> half_a;
  std::vector<double> half_b;
  for (std::size_t i = 0; i < M; ++i) {
    if (i % 2 == 0) half_a.push_back(data[i]);
    else half_b.push_back(data[i]);
  }
  const double zeta = 8.0 * eps + 24.0 * std::log(4.0 / delta) / static_cast<double>(M);
  const double m = static_cast<double>(half_a.size());
  double lo_rank = std::ceil(zeta * m);
  double hi_rank = std::floor((1.0 - zeta) * m);
  if (lo_rank < 1.0) lo_rank = 1.0;
  if (lo_rank > m) lo_rank = m;
  if (hi_rank < 1.0) hi_rank = 1.0;
  if (hi_rank > m) hi_rank = m;
  if (zeta >= 0.5 || lo_rank > hi_rank) return median_by_counting(half_b);

  const double a = kth_by_counting(half_a, static_cast<std::size_t>(lo_rank));
  const double b = kth_by_counting(half_a, static_cast<std::size_t>(hi_rank));
  double total = 0.0;
  for (double x : half_b) total += x < a ? a : (x > b ? b : x);
  return total / static_cast<double>(half_b.size());
}

/// Counterexample closed forms, states in 1-based order 1..5, actions L then R.
struct Fig1Closed {
  std::array<std::array<double, 2>, 5> q_star;
  std::array<std::array<double, 2>, 5> q_tilde;
  double signal;
  double gap;
};

inline Fig1Closed fig1_closed(double p, double d, double kappa, double eps, double gamma) {
  const double beta = p * gamma / (1.0 - gamma * p);
  const double upper = 1.0 / (1.0 - gamma * p);  // states 2 and 3: reward 1, self-loop w.p. p, else absorb at 0
  Fig1Closed f{};
  f.q_star[0] = {d + beta, -d + beta};
  f.q_star[1] = {upper, upper};
  f.q_star[2] = {upper, upper};
  f.q_star[3] = {0.0, 0.0};
  f.q_star[4] = {0.0, 0.0};
  f.q_tilde = f.q_star;
  f.q_tilde[0] = {-d - kappa + beta, d + kappa + beta};
  f.signal = ((2.0 - eps) * d + kappa) / eps;
  f.gap = 2.0 * d + kappa;
  return f;
}

/// Upper quantile of the chi-square distribution (Wilson-Hilferty), z the normal quantile.
inline double chi_square_quantile(double dof, double z) {
  const double h = 2.0 / (9.0 * dof);
  const double c = 1.0 - h + z * std::sqrt(h);
  return dof * c * c * c;
}

/// Exact T_lim and G_t from their definitions.
inline std::size_t t_lim(double delta1) { return static_cast<std::size_t>(std::ceil(2.0 * std::log(4.0 / delta1))); }

inline double threshold(std::size_t t, double eps, double delta1, double C, double rbar) {
  if (t <= t_lim(delta1)) return 2.0 * rbar;
  return C * rbar * (std::sqrt(std::log(4.0 / delta1) / static_cast<double>(t)) + std::sqrt(eps)) + rbar;
}

/// Percentile by linear interpolation on the sorted sample (type 7).
inline double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const double lo = std::floor(h);
  const double hi = std::ceil(h);
  return v[static_cast<std::size_t>(lo)] + (h - lo) * (v[static_cast<std::size_t>(hi)] - v[static_cast<std::size_t>(lo)]);
}

}  // namespace oracle
