#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "elw/errors.hpp"

namespace elw {

/// How the probabilities attached to a sample were generated.
///
/// kMissing and kWithoutReplacement share the same data layout (one row per
/// population unit, or one row per observed unit plus N). kWithReplacement
/// holds one row per draw, with pi = n * q, which may exceed one.
enum class Regime { kMissing, kWithoutReplacement, kWithReplacement };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::kMissing: return "missing";
    case Regime::kWithoutReplacement: return "wor";
    case Regime::kWithReplacement: return "wr";
  }
  return "?";
}

/// Biased sample with known selection probabilities.
///
/// Row i carries the indicator D_i, the q-vector g(Z_i) (NaN when D_i = 0)
/// and the probability pi_i. `n_total` is the population or full-data size N;
/// it may exceed rows() when only observed rows were supplied.
struct Sample {
  std::vector<std::uint8_t> observed;
  Eigen::MatrixXd g;
  std::vector<double> pi;
  std::size_t n_total = 0;
  Regime regime = Regime::kMissing;
  /// Probabilities for every population unit, when rows() < n_total.
  /// Only thresholding rules (ZZZ, CHIM, MW) read this.
  std::vector<double> population_pi;

  std::size_t rows() const { return pi.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(g.cols()); }
  bool has_all_rows() const { return rows() == n_total; }

  std::size_t observed_count() const {
    std::size_t n = 0;
    for (auto d : observed) n += d ? 1 : 0;
    return n;
  }

  std::vector<std::size_t> observed_index() const {
    std::vector<std::size_t> idx;
    idx.reserve(rows());
    for (std::size_t i = 0; i < rows(); ++i)
      if (observed[i]) idx.push_back(i);
    return idx;
  }

  std::vector<double> observed_pi() const {
    std::vector<double> out;
    out.reserve(rows());
    for (std::size_t i = 0; i < rows(); ++i)
      if (observed[i]) out.push_back(pi[i]);
    return out;
  }

  /// Probabilities of all N population units, from the rows or population_pi.
  std::span<const double> all_pi() const {
    if (has_all_rows()) return pi;
    if (population_pi.size() == n_total) return population_pi;
    throw InvalidSample("probabilities for all " + std::to_string(n_total) +
                        " units are required but only " + std::to_string(rows()) +
                        " rows are present");
  }
};

/// Throws InvalidSample when a structural invariant is broken.
inline void validate(const Sample& s) {
  const auto rows = s.rows();
  if (s.observed.size() != rows || static_cast<std::size_t>(s.g.rows()) != rows)
    throw InvalidSample("indicator, response and probability columns differ in length");
  if (s.g.cols() < 1) throw InvalidSample("response dimension must be at least one");
  if (s.n_total < rows && s.regime != Regime::kWithReplacement)
    throw InvalidSample("n_total is smaller than the number of rows");
  const auto n = s.observed_count();
  if (n == 0) throw InvalidSample("no observed units");
  if (n > s.n_total) throw InvalidSample("more observed units than n_total");
  for (std::size_t i = 0; i < rows; ++i) {
    const double p = s.pi[i];
    if (!(p >= 0.0) || !std::isfinite(p))
      throw InvalidSample("probability of row " + std::to_string(i) + " is negative or not finite");
    if (p > 1.0 && s.regime != Regime::kWithReplacement)
      throw InvalidSample("probability of row " + std::to_string(i) + " exceeds one");
    if (s.observed[i] && !s.g.row(static_cast<Eigen::Index>(i)).allFinite())
      throw InvalidSample("observed row " + std::to_string(i) + " has a missing response");
  }
  if (!s.population_pi.empty() && s.population_pi.size() != s.n_total)
    throw InvalidSample("population_pi must have n_total entries");
}

namespace detail {
inline void blank_unobserved(Sample& s) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < s.rows(); ++i)
    if (!s.observed[i]) s.g.row(static_cast<Eigen::Index>(i)).setConstant(nan);
}
}  // namespace detail

/// Full-data form: one row per unit; n_total defaults to the row count.
inline Sample make_sample(std::vector<std::uint8_t> d, Eigen::MatrixXd g, std::vector<double> pi,
                          std::optional<std::size_t> n_total = std::nullopt,
                          Regime regime = Regime::kMissing) {
  Sample s;
  s.observed = std::move(d);
  s.g = std::move(g);
  s.pi = std::move(pi);
  s.n_total = n_total.value_or(s.pi.size());
  s.regime = regime;
  detail::blank_unobserved(s);
  validate(s);
  return s;
}

/// Scalar-response convenience overload.
inline Sample make_sample(std::vector<std::uint8_t> d, const std::vector<double>& y,
                          std::vector<double> pi,
                          std::optional<std::size_t> n_total = std::nullopt,
                          Regime regime = Regime::kMissing) {
  Eigen::MatrixXd g(static_cast<Eigen::Index>(y.size()), 1);
  for (std::size_t i = 0; i < y.size(); ++i) g(static_cast<Eigen::Index>(i), 0) = y[i];
  return make_sample(std::move(d), std::move(g), std::move(pi), n_total, regime);
}

/// Observed-rows-only form: every row has D = 1 and N is given separately.
inline Sample make_observed_sample(Eigen::MatrixXd g, std::vector<double> pi, std::size_t n_total,
                                   Regime regime = Regime::kMissing) {
  std::vector<std::uint8_t> d(pi.size(), 1);
  return make_sample(std::move(d), std::move(g), std::move(pi), n_total, regime);
}

/// With-replacement draws: g and per-draw probabilities q; pi_i = n q_i.
/// `q_population`, when given, holds q* for all N units.
inline Sample make_wr_sample(Eigen::MatrixXd g, const std::vector<double>& q, std::size_t n_total,
                             const std::vector<double>& q_population = {}) {
  const double n = static_cast<double>(q.size());
  std::vector<double> pi(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (!(q[i] > 0.0)) throw InvalidSample("draw probability must be positive");
    pi[i] = n * q[i];
  }
  Sample s = make_observed_sample(std::move(g), std::move(pi), n_total, Regime::kWithReplacement);
  if (!q_population.empty()) {
    s.population_pi.resize(q_population.size());
    for (std::size_t i = 0; i < q_population.size(); ++i) s.population_pi[i] = n * q_population[i];
    validate(s);
  }
  return s;
}

/// Rows `idx` of `s` as a new sample with n_total = idx.size().
inline Sample subsample(const Sample& s, std::span<const std::size_t> idx) {
  Sample out;
  out.regime = s.regime;
  out.n_total = idx.size();
  out.observed.resize(idx.size());
  out.pi.resize(idx.size());
  out.g.resize(static_cast<Eigen::Index>(idx.size()), s.g.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out.observed[k] = s.observed[idx[k]];
    out.pi[k] = s.pi[idx[k]];
    out.g.row(static_cast<Eigen::Index>(k)) = s.g.row(static_cast<Eigen::Index>(idx[k]));
  }
  return out;
}

}  // namespace elw
