#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "elw/core.hpp"
#include "elw/designs.hpp"
#include "elw/errors.hpp"
#include "elw/estimators.hpp"
#include "elw/parallel.hpp"
#include "elw/rng.hpp"
#include "elw/sample.hpp"

namespace elw {

/// Plug-in moments B11 = E(1/pi), Bg1 = E(g/pi), Bgg = E(g g^T / pi) and,
/// for finite populations, B2 = mean of g g^T. G = (Bg1 - theta)/(B11 - 1).
struct MomentSet {
  double b11 = 0.0;
  Eigen::VectorXd bg1;
  Eigen::MatrixXd bgg;
  std::optional<Eigen::MatrixXd> b2;
  Eigen::VectorXd G;
};

namespace detail {

inline constexpr double kB11Guard = 1e-10;

inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

inline void fill_G(MomentSet& m, const Eigen::VectorXd& theta) {
  m.G = m.b11 > 1.0 ? Eigen::VectorXd((m.bg1 - theta) / (m.b11 - 1.0))
                    : Eigen::VectorXd::Constant(theta.size(), std::numeric_limits<double>::quiet_NaN());
}

inline void require_b11_above_one(double b11, const char* who) {
  if (!(b11 > 1.0 + kB11Guard))
    throw Degenerate(std::string(who) + ": B11 <= 1, the variance correction is undefined");
}

}  // namespace detail

/// ELW plug-ins: B_fh = N sum p_i^2 f h^T; B2 = sum p_i g g^T.
inline MomentSet elw_moments(const Sample& s, const ElwSolution& sol, const Eigen::VectorXd& theta) {
  const auto q = s.g.cols();
  MomentSet m;
  m.bg1 = Eigen::VectorXd::Zero(q);
  m.bgg = Eigen::MatrixXd::Zero(q, q);
  Eigen::MatrixXd b2 = Eigen::MatrixXd::Zero(q, q);
  for (std::size_t i = 0; i < s.rows(); ++i) {
    if (!s.observed[i]) continue;
    const double p = sol.weights[static_cast<Eigen::Index>(i)];
    const Eigen::VectorXd g = s.g.row(static_cast<Eigen::Index>(i)).transpose();
    m.b11 += p * p;
    m.bg1 += p * p * g;
    m.bgg += p * p * g * g.transpose();
    b2 += p * g * g.transpose();
  }
  const double N = static_cast<double>(s.n_total);
  m.b11 *= N;
  m.bg1 *= N;
  m.bgg *= N;
  m.b2 = b2;
  detail::fill_G(m, theta);
  return m;
}

/// Inverse-probability plug-ins: B_fh = (1/N) sum_{D=1} f h^T / pi^2; B2 = (1/N) sum g g^T / pi.
inline MomentSet ipw_moments(const Sample& s, const Eigen::VectorXd& theta) {
  detail::require_positive_observed_pi(s, "IPW variance");
  const auto q = s.g.cols();
  MomentSet m;
  m.bg1 = Eigen::VectorXd::Zero(q);
  m.bgg = Eigen::MatrixXd::Zero(q, q);
  Eigen::MatrixXd b2 = Eigen::MatrixXd::Zero(q, q);
  for (std::size_t i = 0; i < s.rows(); ++i) {
    if (!s.observed[i]) continue;
    const double w = 1.0 / s.pi[i];
    const Eigen::VectorXd g = s.g.row(static_cast<Eigen::Index>(i)).transpose();
    m.b11 += w * w;
    m.bg1 += w * w * g;
    m.bgg += w * w * g * g.transpose();
    b2 += w * g * g.transpose();
  }
  const double inv_N = 1.0 / static_cast<double>(s.n_total);
  m.b11 *= inv_N;
  m.bg1 *= inv_N;
  m.bgg *= inv_N;
  m.b2 = b2 * inv_N;
  detail::fill_G(m, theta);
  return m;
}

// ---------------------------------------------------------------------------
// Missing data (and Poisson sampling viewed as missing data); scale by N.

inline Eigen::MatrixXd elw_variance_missing(const Sample& s, const ElwSolution& sol, const Eigen::VectorXd& theta) {
  const MomentSet m = elw_moments(s, sol, theta);
  detail::require_b11_above_one(m.b11, "ELW variance");
  const Eigen::VectorXd c = m.bg1 - theta;
  return detail::symmetrize(m.bgg - theta * theta.transpose() - c * c.transpose() / (m.b11 - 1.0));
}

inline Eigen::MatrixXd ipw_variance_missing(const Sample& s, const Eigen::VectorXd& theta) {
  const MomentSet m = ipw_moments(s, theta);
  return detail::symmetrize(m.bgg - theta * theta.transpose());
}

inline Eigen::MatrixXd sipw_variance_missing(const Sample& s, const Eigen::VectorXd& theta) {
  const MomentSet m = ipw_moments(s, theta);
  const Eigen::VectorXd c = m.bg1 - theta;
  const Eigen::MatrixXd tt = theta * theta.transpose();
  return detail::symmetrize(m.bgg - tt - theta * c.transpose() - c * theta.transpose() + tt * (m.b11 - 1.0));
}

// ---------------------------------------------------------------------------
// Unequal probability sampling without replacement; scale by N.

inline Eigen::MatrixXd elw_variance_wor(const Sample& s, const ElwSolution& sol, const Eigen::VectorXd& theta) {
  if (s.observed_count() < 2) throw Degenerate("ELW variance: fewer than two observed units");
  const MomentSet m = elw_moments(s, sol, theta);
  detail::require_b11_above_one(m.b11, "ELW variance");
  const Eigen::VectorXd c = m.bg1 - theta;
  return detail::symmetrize(m.bgg - *m.b2 - c * c.transpose() / (m.b11 - 1.0));
}

inline Eigen::MatrixXd ipw_variance_wor(const Sample& s, const Eigen::VectorXd& theta) {
  const MomentSet m = ipw_moments(s, theta);
  return detail::symmetrize(m.bgg - *m.b2);
}

/// Sigma_IPW - (Bg1 - t)^2/(B11 - 1) + (Bg1 - t B11)^2/(B11 - 1), expanded so
/// that the (B11 - 1) factor cancels: Sigma_IPW - Bg1 t^T - t Bg1^T + (B11 + 1) t t^T.
inline Eigen::MatrixXd sipw_variance_wor(const Sample& s, const Eigen::VectorXd& theta) {
  const MomentSet m = ipw_moments(s, theta);
  const Eigen::MatrixXd tt = theta * theta.transpose();
  return detail::symmetrize(m.bgg - *m.b2 - m.bg1 * theta.transpose() - theta * m.bg1.transpose() +
                            (m.b11 + 1.0) * tt);
}

// ---------------------------------------------------------------------------
// Unequal probability sampling with replacement; alpha0 = n/N and scale by n.

namespace detail {
inline bool equal_observed_pi(const Sample& s) {
  const auto pi = s.observed_pi();
  const auto [lo, hi] = std::minmax_element(pi.begin(), pi.end());
  return *hi - *lo < kEqualPiSpread;
}

/// Sample covariance of observed g (divisor n - 1), the equal-probability fallback.
inline Eigen::MatrixXd observed_covariance(const Sample& s) {
  const auto idx = s.observed_index();
  const auto q = s.g.cols();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(q);
  for (auto i : idx) mean += s.g.row(static_cast<Eigen::Index>(i)).transpose();
  mean /= static_cast<double>(idx.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(q, q);
  for (auto i : idx) {
    const Eigen::VectorXd d = s.g.row(static_cast<Eigen::Index>(i)).transpose() - mean;
    cov += d * d.transpose();
  }
  return cov / std::max<double>(1.0, static_cast<double>(idx.size()) - 1.0);
}
}  // namespace detail

/// ELW variance under with-replacement sampling. When every draw has the same
/// probability the formula's denominators vanish (alpha0 B11 = 1) and the
/// plain sample covariance is returned instead.
inline Eigen::MatrixXd elw_variance_wr(const Sample& s, const ElwSolution& sol, const Eigen::VectorXd& theta) {
  if (detail::equal_observed_pi(s)) return detail::observed_covariance(s);
  const MomentSet m = elw_moments(s, sol, theta);
  const double a0 = static_cast<double>(s.observed_count()) / static_cast<double>(s.n_total);
  const double d1 = a0 * m.b11 - 1.0;
  const double d2 = m.b11 - 1.0;
  if (!(d1 > detail::kB11Guard) || !(d2 > detail::kB11Guard))
    throw Degenerate("ELW variance (with replacement): alpha0 B11 <= 1 or B11 <= 1");
  const Eigen::VectorXd u = theta * m.b11 - m.bg1;
  const Eigen::VectorXd v = a0 * m.bg1 - theta;
  return detail::symmetrize(a0 * m.bgg - theta * theta.transpose() +
                            (1.0 - a0) * (1.0 - a0) * u * u.transpose() / (d1 * d2 * d2) -
                            v * v.transpose() / d1);
}

inline Eigen::MatrixXd ipw_variance_wr(const Sample& s, const Eigen::VectorXd& theta) {
  const MomentSet m = ipw_moments(s, theta);
  const double a0 = static_cast<double>(s.observed_count()) / static_cast<double>(s.n_total);
  return detail::symmetrize(a0 * m.bgg - theta * theta.transpose());
}

inline Eigen::MatrixXd sipw_variance_wr(const Sample& s, const Eigen::VectorXd& theta) {
  const MomentSet m = ipw_moments(s, theta);
  const double a0 = static_cast<double>(s.observed_count()) / static_cast<double>(s.n_total);
  return detail::symmetrize(a0 * (m.bgg - theta * m.bg1.transpose() - m.bg1 * theta.transpose() +
                                  theta * theta.transpose() * m.b11));
}

/// Number the variance is divided by before taking square roots.
inline double variance_scale(const Sample& s) {
  return s.regime == Regime::kWithReplacement ? static_cast<double>(s.observed_count())
                                              : static_cast<double>(s.n_total);
}

// ---------------------------------------------------------------------------
// Confidence regions

enum class IntervalKind { kAsymptoticNormal, kResampling };

inline const char* to_string(IntervalKind k) {
  return k == IntervalKind::kAsymptoticNormal ? "an" : "re";
}

/// {theta : || whitening (center - theta) - recentering || <= radius}.
/// For scalar parameters lower/upper are the exact interval; for vectors they
/// are the bounding box of the ellipsoid.
struct ConfidenceRegion {
  Eigen::VectorXd center;
  double level = 0.95;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  double radius = 0.0;
  Eigen::MatrixXd whitening;
  Eigen::VectorXd recentering;
  IntervalKind kind = IntervalKind::kAsymptoticNormal;

  bool contains(const Eigen::VectorXd& theta) const {
    if (center.size() == 1) return lower[0] <= theta[0] && theta[0] <= upper[0];
    return (whitening * (center - theta) - recentering).norm() <= radius;
  }
  double length() const { return (upper - lower)[0]; }
};

namespace detail {

inline constexpr double kEigenFloor = 1e-12;

struct SymmetricRoots {
  Eigen::MatrixXd root;
  Eigen::MatrixXd inv_root;
};

/// Sigma^{1/2} and Sigma^{-1/2} with eigenvalues floored at kEigenFloor.
inline SymmetricRoots symmetric_roots(const Eigen::MatrixXd& sigma) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(sigma));
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(kEigenFloor);
  SymmetricRoots r;
  r.root = es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
  r.inv_root = es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  return r;
}

}  // namespace detail

inline Eigen::MatrixXd inverse_sqrt_psd(const Eigen::MatrixXd& sigma) {
  return detail::symmetric_roots(sigma).inv_root;
}

/// Wald region theta_hat +/- z sqrt(Sigma / scale_count); chi-square ellipsoid when q > 1.
/// Negative eigenvalues of Sigma (possible for plug-in estimates) are set to zero.
inline ConfidenceRegion wald_interval(const Eigen::VectorXd& theta, const Eigen::MatrixXd& sigma,
                                      double scale_count, double level) {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("confidence level must lie in (0, 1)");
  if (!(scale_count >= 1.0)) throw DomainError("scale count must be at least one");
  if (!sigma.allFinite() || !theta.allFinite()) throw DomainError("non-finite estimate or variance");
  const auto q = theta.size();
  ConfidenceRegion r;
  r.center = theta;
  r.level = level;
  r.kind = IntervalKind::kAsymptoticNormal;
  r.recentering = Eigen::VectorXd::Zero(q);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(detail::symmetrize(sigma));
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  const Eigen::MatrixXd psd = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  if (q == 1) {
    r.radius = boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 * (1.0 + level));
  } else {
    r.radius = std::sqrt(boost::math::quantile(
        boost::math::chi_squared_distribution<double>(static_cast<double>(q)), level));
  }
  const Eigen::VectorXd half = r.radius * (psd.diagonal() / scale_count).cwiseSqrt();
  r.lower = theta - half;
  r.upper = theta + half;
  r.whitening = std::sqrt(scale_count) * detail::symmetric_roots(psd).inv_root;
  return r;
}

/// Order statistic ceil(level * B) (1-based) of the values.
inline double empirical_quantile(std::vector<double> values, double level) {
  if (values.empty()) throw DomainError("empirical quantile of an empty set");
  std::sort(values.begin(), values.end());
  const auto B = static_cast<double>(values.size());
  auto k = static_cast<std::size_t>(std::ceil(level * B - 1e-12));
  k = std::clamp<std::size_t>(k, 1, values.size());
  return values[k - 1];
}

// ---------------------------------------------------------------------------
// Subsampling (m out of n without replacement) Wald region.

struct PointAndVariance {
  Eigen::VectorXd theta;
  Eigen::MatrixXd sigma;
};

template <class P>
concept EstimatorProcedure = requires(const P& p, const Sample& s) {
  { p(s) } -> std::convertible_to<PointAndVariance>;
};

struct ElwMissingProcedure {
  PointAndVariance operator()(const Sample& s) const {
    const ElwFit fit = elw_fit(s);
    return {fit.report.theta_hat, elw_variance_missing(s, fit.solution, fit.report.theta_hat)};
  }
};

struct IpwMissingProcedure {
  PointAndVariance operator()(const Sample& s) const {
    auto theta = ipw_mean(s).theta_hat;
    return {theta, ipw_variance_missing(s, theta)};
  }
};

struct SipwMissingProcedure {
  PointAndVariance operator()(const Sample& s) const {
    auto theta = sipw_mean(s).theta_hat;
    return {theta, sipw_variance_missing(s, theta)};
  }
};

struct ResampleOptions {
  std::size_t replicates = 1000;  ///< B
  std::size_t subsample = 0;      ///< M; 0 means floor(sqrt(N))
  double level = 0.95;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct ResampleDiagnostics {
  std::size_t redraws = 0;
};

/// Subsampling Wald region. Every replicate draws M of the N rows (observed or
/// not) without replacement; a replicate whose statistic cannot be computed
/// (no observed unit, equal probabilities, B11 <= 1) is redrawn, at most 10 B
/// draws in total.
template <EstimatorProcedure P>
ConfidenceRegion resample_interval(const Sample& s, const P& procedure, const ResampleOptions& opt,
                                   ResampleDiagnostics* diag = nullptr) {
  if (!s.has_all_rows()) throw InvalidSample("resampling needs every one of the N rows");
  const std::size_t N = s.n_total;
  const std::size_t M = opt.subsample ? opt.subsample
                                      : static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(N))));
  if (M < 2 || M >= N) throw DomainError("subsample size must satisfy 2 <= M < N");
  if (opt.replicates == 0) throw DomainError("at least one replicate is required");

  const PointAndVariance full = procedure(s);
  const auto q = full.theta.size();
  const detail::SymmetricRoots full_roots = detail::symmetric_roots(full.sigma);

  const std::size_t B = opt.replicates;
  const std::size_t budget = 10 * B;
  std::atomic<std::size_t> draws{0};
  std::vector<Eigen::VectorXd> stats(B);
  parallel_for(B, opt.threads, [&](std::size_t b) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      if (draws.fetch_add(1) >= budget)
        throw Degenerate("resampling: too many degenerate subsamples");
      Rng rng = make_stream(opt.seed, Purpose::kResample, b, attempt);
      const auto idx = srswor(N, M, rng);
      Sample sub = subsample(s, idx);
      if (sub.observed_count() == 0 || detail::equal_observed_pi(sub)) continue;
      try {
        const PointAndVariance est = procedure(sub);
        if (!est.theta.allFinite() || !est.sigma.allFinite()) continue;
        stats[b] = std::sqrt(static_cast<double>(M)) * inverse_sqrt_psd(est.sigma) * (est.theta - full.theta);
        return;
      } catch (const Error&) {
        continue;
      }
    }
  });
  if (diag) diag->redraws = draws.load() - B;

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(q);
  for (const auto& t : stats) mean += t;
  mean /= static_cast<double>(B);
  std::vector<double> dist(B);
  for (std::size_t b = 0; b < B; ++b) dist[b] = (stats[b] - mean).norm();

  ConfidenceRegion r;
  r.center = full.theta;
  r.level = opt.level;
  r.kind = IntervalKind::kResampling;
  r.recentering = mean;
  r.radius = empirical_quantile(std::move(dist), opt.level);
  const double sqrtN = std::sqrt(static_cast<double>(N));
  r.whitening = sqrtN * full_roots.inv_root;
  // theta = center - root (T + u) / sqrt(N) with ||u|| <= radius
  const Eigen::VectorXd shift = full_roots.root * mean / sqrtN;
  Eigen::VectorXd half(q);
  for (Eigen::Index j = 0; j < q; ++j) half[j] = r.radius * full_roots.root.row(j).norm() / sqrtN;
  r.lower = full.theta - shift - half;
  r.upper = full.theta - shift + half;
  return r;
}

}  // namespace elw
