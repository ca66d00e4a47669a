#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "elw/core.hpp"
#include "elw/errors.hpp"
#include "elw/sample.hpp"

namespace elw {

enum class Method { kIpw, kSipw, kElw, kZzz, kChim, kMwTrim };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::kIpw: return "IPW";
    case Method::kSipw: return "SIPW";
    case Method::kElw: return "ELW";
    case Method::kZzz: return "ZZZ";
    case Method::kChim: return "CHIM";
    case Method::kMwTrim: return "MW-trim";
  }
  return "?";
}

struct EstimatorReport {
  Eigen::VectorXd theta_hat;
  Method method = Method::kElw;
  std::size_t n = 0;
  std::size_t n_total = 0;
  std::optional<Eigen::MatrixXd> variance;
  /// Threshold used by ZZZ (floor), CHIM (alpha) or MW (b_N); NaN otherwise.
  double threshold = std::numeric_limits<double>::quiet_NaN();
  /// Set by the trimmed estimator when no observed unit survives the threshold.
  bool trimmed_everything = false;
};

namespace detail {

inline EstimatorReport make_report(const Sample& s, Method m, Eigen::VectorXd theta) {
  EstimatorReport r;
  r.theta_hat = std::move(theta);
  r.method = m;
  r.n = s.observed_count();
  r.n_total = s.n_total;
  return r;
}

inline void require_positive_observed_pi(const Sample& s, const char* who) {
  for (std::size_t i = 0; i < s.rows(); ++i)
    if (s.observed[i] && !(s.pi[i] > 0.0))
      throw ZeroProbability(i, std::string(who) + ": observed unit has zero probability");
}

inline Eigen::VectorXd row(const Sample& s, std::size_t i) {
  return s.g.row(static_cast<Eigen::Index>(i)).transpose();
}

}  // namespace detail

/// Horvitz-Thompson / Hansen-Hurwitz: (1/N) sum_{D=1} g / pi.
inline EstimatorReport ipw_mean(const Sample& s) {
  validate(s);
  detail::require_positive_observed_pi(s, "IPW");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(s.g.cols());
  for (std::size_t i = 0; i < s.rows(); ++i)
    if (s.observed[i]) acc += detail::row(s, i) / s.pi[i];
  return detail::make_report(s, Method::kIpw, acc / static_cast<double>(s.n_total));
}

/// Hajek estimator: IPW weights normalised to sum to one.
inline EstimatorReport sipw_mean(const Sample& s) {
  validate(s);
  detail::require_positive_observed_pi(s, "SIPW");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(s.g.cols());
  double den = 0.0;
  for (std::size_t i = 0; i < s.rows(); ++i) {
    if (!s.observed[i]) continue;
    acc += detail::row(s, i) / s.pi[i];
    den += 1.0 / s.pi[i];
  }
  return detail::make_report(s, Method::kSipw, acc / den);
}

struct ElwFit {
  ElwSolution solution;
  EstimatorReport report;
};

inline ElwFit elw_fit(const Sample& s) {
  ElwFit fit;
  fit.solution = elw_weights(s);
  fit.report = detail::make_report(s, Method::kElw, weighted_mean(s, fit.solution.weights));
  return fit;
}

/// sum_i p_i g_i with empirical likelihood weights.
inline EstimatorReport elw_mean(const Sample& s) { return elw_fit(s).report; }

// ---------------------------------------------------------------------------
// Thresholded IPW: probabilities below pi_(K) are raised to pi_(K), where K is
// the largest i with pi_(i) <= 1/(i+1) among all N sorted probabilities.

struct ZzzThreshold {
  std::size_t k = 0;  ///< 1-based order index; 0 means no thresholding
  double floor = 0.0;
};

inline ZzzThreshold zzz_threshold(std::span<const double> pi_all) {
  std::vector<double> sorted(pi_all.begin(), pi_all.end());
  std::stable_sort(sorted.begin(), sorted.end());
  ZzzThreshold t;
  for (std::size_t i = 1; i <= sorted.size(); ++i)
    if (sorted[i - 1] <= 1.0 / static_cast<double>(i + 1)) {
      t.k = i;
      t.floor = sorted[i - 1];
    }
  return t;
}

inline EstimatorReport zzz_mean(const Sample& s, std::span<const double> pi_all) {
  validate(s);
  const ZzzThreshold t = zzz_threshold(pi_all);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(s.g.cols());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    if (!s.observed[i]) continue;
    const double p = std::max(t.floor, s.pi[i]);
    if (!(p > 0.0)) throw ZeroProbability(i, "ZZZ: thresholded probability is zero");
    acc += detail::row(s, i) / p;
  }
  auto r = detail::make_report(s, Method::kZzz, acc / static_cast<double>(s.n_total));
  r.threshold = t.floor;
  return r;
}

inline EstimatorReport zzz_mean(const Sample& s) { return zzz_mean(s, s.all_pi()); }

// ---------------------------------------------------------------------------
// Trimmed IPW with the overlap rule of Crump, Hotz, Imbens and Mitnik:
// alpha = 0 when max 1/(pi(1-pi)) <= 2 mean 1/(pi(1-pi)); otherwise the
// smallest candidate alpha in (0, 0.5] among the probabilities with
// 1/(alpha(1-alpha)) <= 2 mean{1/(pi(1-pi)) : alpha <= pi <= 1-alpha}.
// Units with pi in {0, 1} do not enter the rule's means.

inline double chim_alpha(std::span<const double> pi_all) {
  std::vector<double> inner;
  inner.reserve(pi_all.size());
  for (double p : pi_all)
    if (p > 0.0 && p < 1.0) inner.push_back(p);
  if (inner.empty()) return 0.0;
  std::sort(inner.begin(), inner.end());

  auto cost = [](double p) { return 1.0 / (p * (1.0 - p)); };
  double total = 0.0, worst = 0.0;
  for (double p : inner) {
    total += cost(p);
    worst = std::max(worst, cost(p));
  }
  if (worst <= 2.0 * total / static_cast<double>(inner.size())) return 0.0;

  // prefix sums of cost over the sorted probabilities
  std::vector<double> prefix(inner.size() + 1, 0.0);
  for (std::size_t i = 0; i < inner.size(); ++i) prefix[i + 1] = prefix[i] + cost(inner[i]);

  for (std::size_t c = 0; c < inner.size(); ++c) {
    const double a = inner[c];
    if (a > 0.5) break;
    if (c > 0 && inner[c - 1] == a) continue;
    const auto lo = static_cast<std::size_t>(std::lower_bound(inner.begin(), inner.end(), a) - inner.begin());
    const auto hi = static_cast<std::size_t>(std::upper_bound(inner.begin(), inner.end(), 1.0 - a) - inner.begin());
    if (hi <= lo) continue;
    const double mean = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
    if (cost(a) <= 2.0 * mean) return a;
  }
  throw Degenerate("CHIM: no admissible trimming level in (0, 0.5]");
}

/// Denominator of the trimmed estimator.
enum class ChimNormalization {
  /// Sum of retained inverse probabilities over observed units; weights sum to one.
  kInverseProbability,
  /// Count of all N units with alpha <= pi <= 1 - alpha.
  kUnitCount,
};

inline EstimatorReport chim_mean(const Sample& s, std::span<const double> pi_all,
                                 ChimNormalization norm = ChimNormalization::kInverseProbability) {
  validate(s);
  const double a = chim_alpha(pi_all);
  auto keep = [a](double p) { return a <= p && p <= 1.0 - a; };
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(s.g.cols());
  double den = 0.0;
  for (std::size_t i = 0; i < s.rows(); ++i) {
    if (!s.observed[i] || !keep(s.pi[i])) continue;
    if (!(s.pi[i] > 0.0)) throw ZeroProbability(i, "CHIM: retained unit has zero probability");
    acc += detail::row(s, i) / s.pi[i];
    if (norm == ChimNormalization::kInverseProbability) den += 1.0 / s.pi[i];
  }
  if (norm == ChimNormalization::kUnitCount)
    for (double p : pi_all) den += keep(p) ? 1.0 : 0.0;
  if (!(den > 0.0)) throw Degenerate("CHIM: retained set is empty");
  auto r = detail::make_report(s, Method::kChim, acc / den);
  r.threshold = a;
  return r;
}

inline EstimatorReport chim_mean(const Sample& s,
                                 ChimNormalization norm = ChimNormalization::kInverseProbability) {
  return chim_mean(s, s.all_pi(), norm);
}

// ---------------------------------------------------------------------------
// Trimming thresholds of Ma and Wang: b_N solves b^s count(pi <= b) = 1/2 and
// h_N solves h^5 count(pi <= h) = 1. The left sides are right-continuous and
// increasing, so we return inf{t > 0 : lhs(t) >= target}, which is the exact
// root whenever one exists and the jump point otherwise.

struct MwThresholds {
  double b = 1.0;
  double h = 1.0;
};

namespace detail {

inline double step_power_root(const std::vector<double>& sorted, double power, double target) {
  std::size_t j = 0;
  while (j < sorted.size()) {
    const double v = sorted[j];
    std::size_t k = j;
    while (k < sorted.size() && sorted[k] == v) ++k;  // count(pi <= v) == k
    if (v > 1.0) break;
    const double count = static_cast<double>(k);
    if (v > 0.0 && std::pow(v, power) * count >= target) return v;
    const double cand = std::pow(target / count, 1.0 / power);
    const double next = k < sorted.size() ? sorted[k] : std::numeric_limits<double>::infinity();
    if (cand < next && cand <= 1.0 && cand >= v) return cand;
    j = k;
  }
  return 1.0;
}

}  // namespace detail

inline MwThresholds mw_thresholds(std::span<const double> pi_all, int s) {
  if (s != 1 && s != 2) throw DomainError("MW trimming order must be 1 or 2");
  if (pi_all.empty()) throw InvalidSample("no probabilities");
  std::vector<double> sorted(pi_all.begin(), pi_all.end());
  std::sort(sorted.begin(), sorted.end());
  MwThresholds t;
  t.b = detail::step_power_root(sorted, static_cast<double>(s), 0.5);
  t.h = detail::step_power_root(sorted, 5.0, 1.0);
  return t;
}

/// Uncorrected trimmed IPW: (1/N) sum over observed units with pi > b_N.
inline EstimatorReport mw_trim_mean(const Sample& s, int order) {
  validate(s);
  const MwThresholds t = mw_thresholds(s.all_pi(), order);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(s.g.cols());
  std::size_t kept = 0;
  for (std::size_t i = 0; i < s.rows(); ++i) {
    if (!s.observed[i] || !(s.pi[i] > t.b)) continue;
    acc += detail::row(s, i) / s.pi[i];
    ++kept;
  }
  auto r = detail::make_report(s, Method::kMwTrim, acc / static_cast<double>(s.n_total));
  r.threshold = t.b;
  r.trimmed_everything = kept == 0;
  return r;
}

}  // namespace elw
