#pragma once

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "elw/designs.hpp"
#include "elw/errors.hpp"
#include "elw/estimators.hpp"
#include "elw/inference.hpp"
#include "elw/parallel.hpp"
#include "elw/propensity.hpp"
#include "elw/rng.hpp"
#include "elw/sample.hpp"

namespace elw::sim {

inline const std::vector<std::string>& point_tags() {
  static const std::vector<std::string> tags{"IPW", "SIPW", "ELW", "ZZZ", "CHIM", "MW1", "MW2"};
  return tags;
}

inline const std::vector<std::string>& interval_tags() {
  static const std::vector<std::string> tags{"IPW-an", "SIPW-an", "ELW-an", "IPW-re", "SIPW-re", "ELW-re"};
  return tags;
}

inline bool is_point_tag(const std::string& t) {
  return std::find(point_tags().begin(), point_tags().end(), t) != point_tags().end();
}
inline bool is_interval_tag(const std::string& t) {
  return std::find(interval_tags().begin(), interval_tags().end(), t) != interval_tags().end();
}

struct SimulationConfig {
  int example = 1;
  int model = 1;
  double gamma = 2.5;  // example 1
  double c = 1.0;      // example 1
  double rho = 0.2;    // example 2
  std::size_t N = 2000;
  std::size_t n = 500;  // example 2
  std::size_t reps = 1000;
  std::uint64_t seed = 42;
  std::vector<std::string> estimators{"IPW", "SIPW", "ELW", "ZZZ", "CHIM"};
  Design design = Design::kPoisson;  // example 2
  double level = 0.95;
  std::size_t B = 1000;
  std::size_t M = 0;
  unsigned threads = 0;
  /// Example 1 only: fit a logistic score on logit(pi) instead of using the true pi.
  bool estimated_score = false;
  /// Example 2 only: replaces the default noise sd sqrt(3 (1 - rho^2)).
  std::optional<double> noise_sd;
  ChimNormalization chim_normalization = ChimNormalization::kInverseProbability;
};

inline void validate(const SimulationConfig& c) {
  if (c.example != 1 && c.example != 2) throw DomainError("example must be 1 or 2");
  if (c.model < 1 || c.model > 4) throw DomainError("model must be in 1..4");
  if (c.example == 1 && !(c.gamma > 1.0)) throw DomainError("gamma must exceed 1");
  if (c.example == 2 && !(std::abs(c.rho) < 1.0)) throw DomainError("rho must lie in (-1, 1)");
  if (c.example == 2 && (c.n == 0 || c.n > c.N)) throw DomainError("need 0 < n <= N");
  if (c.example == 2 && c.estimated_score) throw DomainError("estimated scores apply to example 1 only");
  if (c.noise_sd && !(*c.noise_sd >= 0.0)) throw DomainError("noise sd must be non-negative");
  if (c.N < 2) throw DomainError("N must be at least 2");
  if (c.reps == 0) throw DomainError("reps must be positive");
  if (!(c.level > 0.0 && c.level < 1.0)) throw DomainError("level must lie in (0, 1)");
  if (c.estimators.empty()) throw DomainError("no estimators requested");
  for (const auto& t : c.estimators)
    if (!is_point_tag(t) && !is_interval_tag(t)) throw DomainError("unknown estimator tag '" + t + "'");
}

// ---------------------------------------------------------------------------
// Example 1: missing data with a known score

inline double mu_example1(int model, double t) {
  switch (model) {
    case 1: return std::cos(2.0 * std::numbers::pi * t);
    case 2: return 1.0 - t;
    case 3: return std::cos(2.0 * std::numbers::pi * t) + 5.0;
    case 4: return 6.0 - t;
  }
  throw DomainError("model must be in 1..4");
}

struct Example1Data {
  Sample sample;
  Eigen::MatrixXd covariates;  ///< N x 2: intercept, logit(pi)
};

/// Open-interval uniform so that pi never hits 0.
inline double uniform_open01(Rng& rng) { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; }

inline Example1Data gen_example1(double gamma, double c, int model, std::size_t N, Rng& rng) {
  if (!(gamma > 1.0)) throw DomainError("gamma must exceed 1");
  std::normal_distribution<double> normal;
  std::vector<std::uint8_t> d(N);
  std::vector<double> y(N), pi(N);
  Example1Data out;
  out.covariates.resize(static_cast<Eigen::Index>(N), 2);
  const double expo = 1.0 / (gamma - 1.0);
  for (std::size_t i = 0; i < N; ++i) {
    pi[i] = std::pow(uniform_open01(rng), expo);
    double eta = 0.0;
    for (int k = 0; k < 4; ++k) {
      const double z = normal(rng);
      eta += z * z;
    }
    y[i] = mu_example1(model, pi[i]) + c * (eta - 4.0) / std::sqrt(8.0);
    d[i] = uniform01(rng) < pi[i] ? 1 : 0;
    out.covariates(static_cast<Eigen::Index>(i), 0) = 1.0;
    out.covariates(static_cast<Eigen::Index>(i), 1) = std::log(pi[i]) - std::log1p(-pi[i]);
  }
  out.sample = make_sample(std::move(d), y, std::move(pi), N, Regime::kMissing);
  return out;
}

/// E(Y) = int_0^1 mu(v^{1/(gamma-1)}) dv (substitution u = v^{1/(gamma-1)}).
inline double true_theta_example1(double gamma, int model) {
  if (!(gamma > 1.0)) throw DomainError("gamma must exceed 1");
  const double expo = 1.0 / (gamma - 1.0);
  auto f = [&](double v) { return mu_example1(model, std::pow(v, expo)); };
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, 1.0, 20, 1e-13, &err);
}

// ---------------------------------------------------------------------------
// Example 2: finite population, unequal probability designs

inline double mu_example2(int model, double rho, double x) {
  const double s = std::sqrt(3.0) * rho;
  switch (model) {
    case 1: return s * x;
    case 2: return s * (x + x * x);
    case 3: return s * x + 5.0;
    case 4: return s * (x + x * x) + 5.0;
  }
  throw DomainError("model must be in 1..4");
}

struct Population {
  std::vector<double> x;
  std::vector<double> y;
  double theta = 0.0;  ///< mean of y over the realised population
};

/// Noise standard deviation sqrt(3 (1 - rho^2)) unless `noise_sd` overrides it.
inline Population gen_population_example2(double rho, int model, std::size_t N, Rng& rng,
                                          std::optional<double> noise_sd = std::nullopt) {
  if (!(std::abs(rho) < 1.0)) throw DomainError("rho must lie in (-1, 1)");
  std::normal_distribution<double> normal;
  Population p;
  p.x.resize(N);
  p.y.resize(N);
  const double scale = noise_sd.value_or(std::sqrt(3.0 * (1.0 - rho * rho)));
  double total = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    p.x[i] = 2.0 * uniform_open01(rng);
    p.y[i] = mu_example2(model, rho, p.x[i]) + scale * normal(rng);
    total += p.y[i];
  }
  p.theta = total / static_cast<double>(N);
  return p;
}

/// Draw one sample from the population under the design.
inline Sample draw_design_sample(const Population& pop, std::size_t n, Design design, Rng& rng) {
  const std::size_t N = pop.x.size();
  switch (design) {
    case Design::kPoisson:
    case Design::kPivotal: {
      auto pi = inclusion_probs_proportional(pop.x, n);
      auto d = design == Design::kPoisson ? poisson_sample(pi, rng) : pivotal_sample(pi, rng);
      if (std::none_of(d.begin(), d.end(), [](auto v) { return v != 0; }))
        throw InvalidSample("design produced an empty sample");
      return make_sample(std::move(d), pop.y, std::move(pi), N,
                         design == Design::kPoisson ? Regime::kMissing : Regime::kWithoutReplacement);
    }
    case Design::kSrswor: {
      const auto idx = srswor(N, n, rng);
      std::vector<std::uint8_t> d(N, 0);
      for (auto i : idx) d[i] = 1;
      return make_sample(std::move(d), pop.y, std::vector<double>(N, static_cast<double>(n) / N), N,
                         Regime::kWithoutReplacement);
    }
    case Design::kPpsWr: {
      const auto q = draw_probs_proportional(pop.x);
      const auto idx = pps_wr_sample(q, n, rng);
      Eigen::MatrixXd g(static_cast<Eigen::Index>(n), 1);
      std::vector<double> qs(n);
      for (std::size_t k = 0; k < n; ++k) {
        g(static_cast<Eigen::Index>(k), 0) = pop.y[idx[k]];
        qs[k] = q[idx[k]];
      }
      return make_wr_sample(std::move(g), qs, N, q);
    }
  }
  throw DomainError("unknown design");
}

// ---------------------------------------------------------------------------
// Metrics

/// sqrt(N) * sqrt(mean(err^2)).
inline double scaled_rmse(std::span<const double> errors, std::size_t N) {
  if (errors.empty()) throw DomainError("no estimates");
  double ss = 0.0;
  for (double e : errors) ss += e * e;
  return std::sqrt(static_cast<double>(N)) * std::sqrt(ss / static_cast<double>(errors.size()));
}

inline double scaled_rmse(std::span<const double> estimates, double theta, std::size_t N) {
  std::vector<double> err(estimates.size());
  for (std::size_t i = 0; i < err.size(); ++i) err[i] = estimates[i] - theta;
  return scaled_rmse(err, N);
}

struct CoverageLength {
  double coverage = 0.0;
  double avg_length = 0.0;
};

inline CoverageLength coverage_and_length(std::span<const ConfidenceRegion> regions, double theta) {
  if (regions.empty()) throw DomainError("no regions");
  CoverageLength out;
  Eigen::VectorXd t(1);
  t[0] = theta;
  for (const auto& r : regions) {
    out.coverage += r.contains(t) ? 1.0 : 0.0;
    out.avg_length += r.length();
  }
  out.coverage /= static_cast<double>(regions.size());
  out.avg_length /= static_cast<double>(regions.size());
  return out;
}

struct MetricsRow {
  std::string estimator;
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double bias = std::numeric_limits<double>::quiet_NaN();
  double coverage = std::numeric_limits<double>::quiet_NaN();
  double avg_length = std::numeric_limits<double>::quiet_NaN();
  std::size_t reps_used = 0;
};

/// Per-replicate raw output. Entries follow config.estimators; NaN marks a failure.
struct ReplicateRecord {
  double theta = 0.0;
  std::vector<double> estimate;  ///< point tags: theta_hat; interval tags: NaN
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<std::string> error;  ///< empty when the estimator succeeded
};

struct MetricsTable {
  SimulationConfig config;
  std::vector<MetricsRow> rows;
  std::vector<ReplicateRecord> replicates;

  const MetricsRow& row(const std::string& tag) const {
    for (const auto& r : rows)
      if (r.estimator == tag) return r;
    throw DomainError("no row for estimator '" + tag + "'");
  }
};

// ---------------------------------------------------------------------------
// Replication runner

namespace detail {

struct ReplicateData {
  Sample sample;
  double theta = 0.0;
  std::optional<LogisticModel> score_model;
  Eigen::MatrixXd covariates;
};

inline ReplicateData generate(const SimulationConfig& c, std::size_t rep) {
  ReplicateData out;
  if (c.example == 1) {
    Rng rng = make_stream(c.seed, Purpose::kReplicate, rep);
    auto data = gen_example1(c.gamma, c.c, c.model, c.N, rng);
    out.sample = std::move(data.sample);
    out.covariates = std::move(data.covariates);
    if (c.estimated_score) {
      out.score_model = fit_logistic(out.covariates, out.sample.observed);
      const Eigen::VectorXd fitted = out.score_model->predict_all(out.covariates);
      for (std::size_t i = 0; i < out.sample.rows(); ++i) out.sample.pi[i] = fitted[static_cast<Eigen::Index>(i)];
    }
    return out;
  }
  Rng pop_rng = make_stream(c.seed, Purpose::kPopulation, rep);
  const Population pop = gen_population_example2(c.rho, c.model, c.N, pop_rng, c.noise_sd);
  Rng design_rng = make_stream(c.seed, Purpose::kDesign, rep);
  out.sample = draw_design_sample(pop, c.n, c.design, design_rng);
  out.theta = pop.theta;
  return out;
}

inline double point_estimate(const SimulationConfig& c, const std::string& tag, const Sample& s) {
  if (tag == "IPW") return ipw_mean(s).theta_hat[0];
  if (tag == "SIPW") return sipw_mean(s).theta_hat[0];
  if (tag == "ELW") return elw_mean(s).theta_hat[0];
  if (tag == "ZZZ") return zzz_mean(s).theta_hat[0];
  if (tag == "CHIM") return chim_mean(s, c.chim_normalization).theta_hat[0];
  if (tag == "MW1") return mw_trim_mean(s, 1).theta_hat[0];
  if (tag == "MW2") return mw_trim_mean(s, 2).theta_hat[0];
  throw DomainError("unknown estimator tag '" + tag + "'");
}

/// Variance of the named estimator under the sample's regime.
inline PointAndVariance point_and_variance(const std::string& base, const Sample& s,
                                           const ReplicateData* known_score = nullptr) {
  const bool estimated = known_score && known_score->score_model;
  if (base == "ELW") {
    const ElwFit fit = elw_fit(s);
    const Eigen::VectorXd& t = fit.report.theta_hat;
    if (estimated)
      return {t, elw_variance_estimated_score(s, fit.solution, t, *known_score->score_model, known_score->covariates)};
    switch (s.regime) {
      case Regime::kMissing: return {t, elw_variance_missing(s, fit.solution, t)};
      case Regime::kWithoutReplacement: return {t, elw_variance_wor(s, fit.solution, t)};
      case Regime::kWithReplacement: return {t, elw_variance_wr(s, fit.solution, t)};
    }
  }
  if (base == "IPW") {
    const Eigen::VectorXd t = ipw_mean(s).theta_hat;
    if (estimated) return {t, ipw_variance_estimated_score(s, t, *known_score->score_model, known_score->covariates)};
    switch (s.regime) {
      case Regime::kMissing: return {t, ipw_variance_missing(s, t)};
      case Regime::kWithoutReplacement: return {t, ipw_variance_wor(s, t)};
      case Regime::kWithReplacement: return {t, ipw_variance_wr(s, t)};
    }
  }
  if (base == "SIPW") {
    const Eigen::VectorXd t = sipw_mean(s).theta_hat;
    if (estimated) return {t, sipw_variance_estimated_score(s, t, *known_score->score_model, known_score->covariates)};
    switch (s.regime) {
      case Regime::kMissing: return {t, sipw_variance_missing(s, t)};
      case Regime::kWithoutReplacement: return {t, sipw_variance_wor(s, t)};
      case Regime::kWithReplacement: return {t, sipw_variance_wr(s, t)};
    }
  }
  throw DomainError("no variance for estimator '" + base + "'");
}

inline ConfidenceRegion interval_estimate(const SimulationConfig& c, const std::string& tag, const ReplicateData& d,
                                          std::size_t rep) {
  const auto dash = tag.find('-');
  const std::string base = tag.substr(0, dash);
  const std::string kind = tag.substr(dash + 1);
  const Sample& s = d.sample;
  if (kind == "an") {
    const PointAndVariance pv = point_and_variance(base, s, &d);
    return wald_interval(pv.theta, pv.sigma, variance_scale(s), c.level);
  }
  if (s.regime != Regime::kMissing) throw DomainError("resampling intervals are defined for missing data only");
  if (d.score_model) throw DomainError("resampling intervals assume known scores");
  ResampleOptions opt;
  opt.replicates = c.B;
  opt.subsample = c.M;
  opt.level = c.level;
  opt.seed = derive_seed(c.seed, Purpose::kResample, rep);
  opt.threads = 1;
  auto proc = [&base](const Sample& sub) { return point_and_variance(base, sub); };
  return resample_interval(s, proc, opt);
}

}  // namespace detail

/// Runs config.reps independent replicates in parallel; the result depends
/// only on the configuration (including the seed), not on the thread count.
inline MetricsTable run_replications(const SimulationConfig& config) {
  validate(config);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const auto& tags = config.estimators;
  const std::size_t k = tags.size();
  const double theta1 = config.example == 1 ? true_theta_example1(config.gamma, config.model) : 0.0;

  MetricsTable table;
  table.config = config;
  table.replicates.resize(config.reps);
  parallel_for(config.reps, config.threads, [&](std::size_t rep) {
    ReplicateRecord& rec = table.replicates[rep];
    rec.estimate.assign(k, nan);
    rec.lower.assign(k, nan);
    rec.upper.assign(k, nan);
    rec.error.assign(k, std::string{});
    detail::ReplicateData data;
    try {
      data = detail::generate(config, rep);
    } catch (const std::exception& e) {
      rec.theta = config.example == 1 ? theta1 : nan;
      rec.error.assign(k, std::string("data generation: ") + e.what());
      return;
    }
    rec.theta = config.example == 1 ? theta1 : data.theta;
    for (std::size_t j = 0; j < k; ++j) {
      try {
        if (is_point_tag(tags[j])) {
          rec.estimate[j] = detail::point_estimate(config, tags[j], data.sample);
          if (!std::isfinite(rec.estimate[j])) throw Degenerate("non-finite estimate");
        } else {
          const auto region = detail::interval_estimate(config, tags[j], data, rep);
          rec.lower[j] = region.lower[0];
          rec.upper[j] = region.upper[0];
        }
      } catch (const std::exception& e) {
        rec.estimate[j] = nan;
        rec.lower[j] = rec.upper[j] = nan;
        rec.error[j] = e.what();
      }
    }
  });

  for (std::size_t j = 0; j < k; ++j) {
    MetricsRow row;
    row.estimator = tags[j];
    if (is_point_tag(tags[j])) {
      std::vector<double> err;
      for (const auto& r : table.replicates)
        if (r.error[j].empty()) err.push_back(r.estimate[j] - r.theta);
      row.reps_used = err.size();
      if (!err.empty()) {
        row.rmse = scaled_rmse(err, config.N);
        double b = 0.0;
        for (double e : err) b += e;
        row.bias = b / static_cast<double>(err.size());
      }
    } else {
      double cover = 0.0, len = 0.0;
      for (const auto& r : table.replicates) {
        if (!r.error[j].empty()) continue;
        ++row.reps_used;
        cover += (r.lower[j] <= r.theta && r.theta <= r.upper[j]) ? 1.0 : 0.0;
        len += r.upper[j] - r.lower[j];
      }
      if (row.reps_used) {
        row.coverage = cover / static_cast<double>(row.reps_used);
        row.avg_length = len / static_cast<double>(row.reps_used);
      }
    }
    table.rows.push_back(row);
  }
  return table;
}

}  // namespace elw::sim
