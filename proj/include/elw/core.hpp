#pragma once

// Empirical likelihood weights for a biased sample with known selection
// probabilities. The profiled likelihood reduces to the scalar equation
// K(alpha) = sum_i (pi_i - alpha) / (xi_i - alpha) = 0 over observed units,
// with xi_i = n/N + (1 - n/N) pi_i. K is strictly decreasing on
// [min pi, min xi) and has exactly one root there.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "elw/errors.hpp"
#include "elw/sample.hpp"

namespace elw {

struct ElwSolution {
  double alpha_hat = 0.0;
  double lambda = 0.0;
  /// One weight per sample row; zero on unobserved rows.
  Eigen::VectorXd weights;
  double zeta_l = 0.0;
  double zeta_u = 0.0;
};

namespace detail {

/// Neumaier-compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline constexpr std::size_t kCompensateAbove = 10000;

inline void check_counts(std::size_t n, std::size_t N) {
  if (n == 0) throw InvalidSample("no observed units");
  if (n > N) throw InvalidSample("observed count exceeds n_total");
}

/// K(alpha) with the shrink ratio r = n/N precomputed; caller guarantees alpha < min xi.
inline double k_unchecked(double alpha, std::span<const double> pi, double r) {
  if (pi.size() > kCompensateAbove) {
    CompensatedSum acc;
    for (double p : pi) acc.add((p - alpha) / (r + (1.0 - r) * p - alpha));
    return acc.value();
  }
  double acc = 0.0;
  for (double p : pi) acc += (p - alpha) / (r + (1.0 - r) * p - alpha);
  return acc;
}

}  // namespace detail

/// Shrunk scores xi_i = n/N + (1 - n/N) pi_i.
inline std::vector<double> xi_values(std::span<const double> pi_obs, std::size_t n, std::size_t N) {
  detail::check_counts(n, N);
  const double r = static_cast<double>(n) / static_cast<double>(N);
  std::vector<double> xi(pi_obs.size());
  std::transform(pi_obs.begin(), pi_obs.end(), xi.begin(),
                 [r](double p) { return r + (1.0 - r) * p; });
  return xi;
}

/// K(alpha) = sum (pi_i - alpha) / (xi_i - alpha). Throws DomainError for alpha >= min xi.
inline double k_function(double alpha, std::span<const double> pi_obs, std::size_t n, std::size_t N) {
  detail::check_counts(n, N);
  if (pi_obs.empty()) throw InvalidSample("no observed probabilities");
  const double r = static_cast<double>(n) / static_cast<double>(N);
  const double min_pi = *std::min_element(pi_obs.begin(), pi_obs.end());
  const double min_xi = r + (1.0 - r) * min_pi;
  if (!(alpha < min_xi)) throw DomainError("K(alpha) is undefined for alpha >= min xi");
  return detail::k_unchecked(alpha, pi_obs, r);
}

struct AlphaRoot {
  double alpha = 0.0;
  double zeta_l = 0.0;
  double zeta_u = 0.0;
};

namespace detail {

inline constexpr double kEqualPiSpread = 1e-12;
inline constexpr double kBracketWidth = 1e-12;
inline constexpr double kRootResidual = 1e-9;

inline AlphaRoot solve_alpha_bracketed(std::span<const double> pi_obs, std::size_t n, std::size_t N) {
  if (pi_obs.empty()) throw InvalidSample("no observed units");
  detail::check_counts(n, N);
  const auto [lo_it, hi_it] = std::minmax_element(pi_obs.begin(), pi_obs.end());
  const double r = static_cast<double>(n) / static_cast<double>(N);
  AlphaRoot root;
  root.zeta_l = *lo_it;
  root.zeta_u = r + (1.0 - r) * root.zeta_l;

  if (*hi_it - *lo_it < kEqualPiSpread || n == N) {
    // Equal scores: K vanishes at the common value. n == N: xi == 1 and K is
    // linear in the numerators, so the root is the mean.
    root.alpha = std::accumulate(pi_obs.begin(), pi_obs.end(), 0.0) / static_cast<double>(pi_obs.size());
    return root;
  }

  double lo = root.zeta_l;
  double hi = root.zeta_u - 1e-14 * std::max(1.0, root.zeta_u);
  if (std::abs(k_unchecked(lo, pi_obs, r)) <= kRootResidual) {
    root.alpha = lo;
    return root;
  }
  while (hi - lo > kBracketWidth) {
    const double mid = 0.5 * (lo + hi);
    const double k = k_unchecked(mid, pi_obs, r);
    if (std::abs(k) <= kRootResidual) {
      root.alpha = mid;
      return root;
    }
    (k > 0.0 ? lo : hi) = mid;
  }
  root.alpha = 0.5 * (lo + hi);
  return root;
}

}  // namespace detail

/// Unique root of K in [min pi, min xi).
inline double solve_alpha(std::span<const double> pi_obs, std::size_t n, std::size_t N) {
  return detail::solve_alpha_bracketed(pi_obs, n, N).alpha;
}

/// ELW weights for every row of the sample.
inline ElwSolution elw_weights(const Sample& s) {
  validate(s);
  const std::vector<double> pi_obs = s.observed_pi();
  const std::size_t n = pi_obs.size();
  const std::size_t N = s.n_total;
  const AlphaRoot root = detail::solve_alpha_bracketed(pi_obs, n, N);

  ElwSolution sol;
  sol.alpha_hat = root.alpha;
  sol.zeta_l = root.zeta_l;
  sol.zeta_u = root.zeta_u;
  if (n < N && !(sol.alpha_hat < 1.0))
    throw Degenerate("alpha_hat reached one with unobserved units present; the likelihood is degenerate");
  sol.lambda = n == N ? 0.0
                      : static_cast<double>(N - n) / (static_cast<double>(n) * (1.0 - sol.alpha_hat));

  sol.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.rows()));
  const double inv_n = 1.0 / static_cast<double>(n);
  const bool equal = *std::max_element(pi_obs.begin(), pi_obs.end()) - root.zeta_l < detail::kEqualPiSpread;
  for (std::size_t i = 0; i < s.rows(); ++i) {
    if (!s.observed[i]) continue;
    sol.weights[static_cast<Eigen::Index>(i)] =
        equal ? inv_n : inv_n / (1.0 + sol.lambda * (s.pi[i] - sol.alpha_hat));
  }
  // the root residual leaves sum(p) - 1 = -K (1 - n/N) / n
  sol.weights /= sol.weights.sum();
  return sol;
}

/// (max xi - alpha_hat) / (min xi - alpha_hat) over observed units.
inline double max_weight_ratio(const ElwSolution& sol, std::span<const double> pi_obs, std::size_t n,
                               std::size_t N) {
  const auto xi = xi_values(pi_obs, n, N);
  if (xi.empty()) throw InvalidSample("no observed units");
  const auto [lo, hi] = std::minmax_element(xi.begin(), xi.end());
  const double den = *lo - sol.alpha_hat;
  if (den <= 0.0) return 1.0;  // all scores equal: every weight is 1/n
  return (*hi - sol.alpha_hat) / den;
}

/// Weighted mean sum_i p_i g_i over observed rows.
inline Eigen::VectorXd weighted_mean(const Sample& s, const Eigen::VectorXd& weights) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(s.g.cols());
  for (std::size_t i = 0; i < s.rows(); ++i)
    if (s.observed[i]) acc += weights[static_cast<Eigen::Index>(i)] * s.g.row(static_cast<Eigen::Index>(i)).transpose();
  return acc;
}

}  // namespace elw
