#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "elw/core.hpp"
#include "elw/errors.hpp"
#include "elw/inference.hpp"
#include "elw/sample.hpp"

namespace elw {

/// Logistic selection model pi(x) = 1 / (1 + exp(-x^T beta)). The design
/// matrix carries its own intercept column.
struct LogisticModel {
  Eigen::VectorXd beta;
  std::size_t design_dim = 0;
  std::size_t iterations = 0;

  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    const double eta = x.dot(beta);
    return eta >= 0.0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
  }

  Eigen::VectorXd predict_all(const Eigen::MatrixXd& X) const {
    Eigen::VectorXd out(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) out[i] = predict(X.row(i).transpose());
    return out;
  }
};

struct ScoreDerivatives {
  double pi = 0.0;
  Eigen::VectorXd grad;  ///< d pi / d beta = pi (1 - pi) x
};

inline ScoreDerivatives score_derivatives(const LogisticModel& m, const Eigen::Ref<const Eigen::VectorXd>& x) {
  ScoreDerivatives d;
  d.pi = m.predict(x);
  d.grad = d.pi * (1.0 - d.pi) * x;
  return d;
}

namespace detail {
inline double log1pexp(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }
}  // namespace detail

/// sum_i [D_i log pi_i + (1 - D_i) log(1 - pi_i)].
inline double logistic_log_likelihood(const Eigen::VectorXd& beta, const Eigen::MatrixXd& X,
                                      std::span<const std::uint8_t> D) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double eta = X.row(i).dot(beta);
    ll += (D[static_cast<std::size_t>(i)] ? eta : 0.0) - detail::log1pexp(eta);
  }
  return ll;
}

/// Score vector sum_i (D_i - pi_i) x_i.
inline Eigen::VectorXd logistic_gradient(const Eigen::VectorXd& beta, const Eigen::MatrixXd& X,
                                         std::span<const std::uint8_t> D) {
  LogisticModel m{beta, static_cast<std::size_t>(beta.size())};
  Eigen::VectorXd g = Eigen::VectorXd::Zero(beta.size());
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    g += (static_cast<double>(D[static_cast<std::size_t>(i)]) - m.predict(X.row(i).transpose())) * X.row(i).transpose();
  return g;
}

struct LogisticOptions {
  std::size_t max_iterations = 100;
  /// Convergence on the norm of the average score (1/N) sum (D - pi) x.
  double gradient_tolerance = 1e-8;
  double separation_norm = 1e3;
};

/// Maximum likelihood by damped Newton-Raphson with step halving.
inline LogisticModel fit_logistic(const Eigen::MatrixXd& X, std::span<const std::uint8_t> D,
                                  const LogisticOptions& opt = {}) {
  const auto N = X.rows();
  const auto p = X.cols();
  if (static_cast<std::size_t>(N) != D.size()) throw InvalidSample("design and response lengths differ");
  if (N < p || p == 0) throw InvalidSample("need at least as many rows as covariates");
  int constant_cols = 0;
  for (Eigen::Index j = 0; j < p; ++j)
    if ((X.col(j).array() == X(0, j)).all()) ++constant_cols;
  if (constant_cols > 1) throw Degenerate("more than one constant covariate column");

  LogisticModel m;
  m.beta = Eigen::VectorXd::Zero(p);
  m.design_dim = static_cast<std::size_t>(p);
  double ll = logistic_log_likelihood(m.beta, X, D);
  const double inv_N = 1.0 / static_cast<double>(N);

  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
    double worst_residual = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
      const Eigen::VectorXd x = X.row(i).transpose();
      const double pi = m.predict(x);
      const double r = static_cast<double>(D[static_cast<std::size_t>(i)]) - pi;
      worst_residual = std::max(worst_residual, std::abs(r));
      grad += r * x;
      info.selfadjointView<Eigen::Lower>().rankUpdate(x, pi * (1.0 - pi));
    }
    info = info.selfadjointView<Eigen::Lower>();
    m.iterations = it;
    if (grad.norm() * inv_N <= opt.gradient_tolerance) {
      // every unit fitted to within 1e-6 of its indicator: complete separation
      if (worst_residual <= 1e-6) throw Separation("logistic fit: responses are perfectly separated");
      return m;
    }
    if (m.beta.norm() > opt.separation_norm)
      throw Separation("logistic fit diverges: coefficients exceed the separation bound");

    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    const double dmax = ldlt.vectorD().cwiseAbs().maxCoeff();
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 1e-13 * std::max(dmax, 1e-300))) {
      if (m.beta.norm() > 10.0) throw Separation("logistic fit: information matrix collapsed (separation)");
      throw Degenerate("logistic fit: singular information matrix");
    }
    const Eigen::VectorXd step = ldlt.solve(grad);
    double t = 1.0;
    for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
      const Eigen::VectorXd cand = m.beta + t * step;
      const double cand_ll = logistic_log_likelihood(cand, X, D);
      if (cand_ll >= ll - 1e-12 * std::abs(ll)) {
        m.beta = cand;
        ll = cand_ll;
        break;
      }
    }
  }
  if (m.beta.norm() > opt.separation_norm) throw Separation("logistic fit diverges");
  throw Degenerate("logistic fit did not converge");
}

struct Influence {
  Eigen::MatrixXd h;        ///< N x p, row i is h(D_i, Z_i)
  Eigen::MatrixXd b_tilde;  ///< (1/N) sum grad grad^T / (pi (1 - pi))
  std::vector<std::size_t> flagged;  ///< units with pi (1 - pi) <= 1e-12
};

/// Influence function of the logistic MLE, h = (D - pi) / (pi (1 - pi)) B~^{-1} grad pi,
/// which for the logistic link equals B~^{-1} (D - pi) x.
inline Influence influence_mle(const LogisticModel& m, const Eigen::MatrixXd& X, std::span<const std::uint8_t> D) {
  const auto N = X.rows();
  const auto p = X.cols();
  Influence out;
  out.b_tilde = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd resid(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const Eigen::VectorXd x = X.row(i).transpose();
    const double pi = m.predict(x);
    const double v = pi * (1.0 - pi);
    if (v <= 1e-12) out.flagged.push_back(static_cast<std::size_t>(i));
    out.b_tilde += v * x * x.transpose();
    resid[i] = static_cast<double>(D[static_cast<std::size_t>(i)]) - pi;
  }
  out.b_tilde /= static_cast<double>(N);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(out.b_tilde);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0))
    throw Degenerate("influence function: singular information matrix");
  const Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  out.h = (resid.asDiagonal() * X) * inv.transpose();
  return out;
}

namespace detail {

struct ScoreGradients {
  Eigen::MatrixXd grad;  ///< N x p, row i is d pi_i / d beta
  Eigen::MatrixXd b_tilde;
};

inline ScoreGradients score_gradients(const LogisticModel& m, const Eigen::MatrixXd& X) {
  ScoreGradients out;
  out.grad.resize(X.rows(), X.cols());
  out.b_tilde = Eigen::MatrixXd::Zero(X.cols(), X.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const auto d = score_derivatives(m, X.row(i).transpose());
    out.grad.row(i) = d.grad.transpose();
    const double v = d.pi * (1.0 - d.pi);
    if (v > 0.0) out.b_tilde += d.grad * d.grad.transpose() / v;
  }
  out.b_tilde /= static_cast<double>(X.rows());
  return out;
}

inline Eigen::MatrixXd solve_spd(const Eigen::MatrixXd& a, const Eigen::MatrixXd& rhs) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0))
    throw Degenerate("singular propensity information matrix");
  return ldlt.solve(rhs);
}

inline void require_full_design(const Sample& s, const Eigen::MatrixXd& X) {
  if (!s.has_all_rows() || static_cast<std::size_t>(X.rows()) != s.rows())
    throw InvalidSample("estimated-score variance needs covariates for all N rows");
}

}  // namespace detail

/// ELW variance accounting for an estimated logistic score:
/// Bgg - t t^T - G (B11 - 1) G^T - C B~^{-1} C^T with C = G B_{1pi'} - B_{g pi'}.
inline Eigen::MatrixXd elw_variance_estimated_score(const Sample& s, const ElwSolution& sol,
                                                    const Eigen::VectorXd& theta, const LogisticModel& model,
                                                    const Eigen::MatrixXd& X) {
  detail::require_full_design(s, X);
  const MomentSet m = elw_moments(s, sol, theta);
  detail::require_b11_above_one(m.b11, "ELW estimated-score variance");
  const auto sg = detail::score_gradients(model, X);
  const double N = static_cast<double>(s.n_total);
  Eigen::RowVectorXd b1p = Eigen::RowVectorXd::Zero(X.cols());
  Eigen::MatrixXd bgp = Eigen::MatrixXd::Zero(s.g.cols(), X.cols());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    if (!s.observed[i]) continue;
    const auto r = static_cast<Eigen::Index>(i);
    const double w = N * sol.weights[r] * sol.weights[r];
    b1p += w * sg.grad.row(r);
    bgp += w * s.g.row(r).transpose() * sg.grad.row(r);
  }
  const Eigen::MatrixXd C = m.G * b1p - bgp;
  const Eigen::VectorXd c = m.bg1 - theta;
  const Eigen::MatrixXd sandwich = C * detail::solve_spd(sg.b_tilde, C.transpose());
  return detail::symmetrize(m.bgg - theta * theta.transpose() - c * c.transpose() / (m.b11 - 1.0) - sandwich);
}

namespace detail {

/// Empirical covariance (1/N) sum (psi_i - mean)(psi_i - mean)^T of per-unit influence rows.
inline Eigen::MatrixXd influence_covariance(const Eigen::MatrixXd& psi) {
  const Eigen::RowVectorXd mean = psi.colwise().mean();
  const Eigen::MatrixXd c = psi.rowwise() - mean;
  return symmetrize(c.transpose() * c / static_cast<double>(psi.rows()));
}

struct IpwScoreTerms {
  Eigen::MatrixXd bgp;    ///< q x p, (1/N) sum_{D=1} g grad^T / pi^2
  Eigen::RowVectorXd b1p; ///< 1 x p, (1/N) sum_{D=1} grad^T / pi^2
  Influence infl;
};

inline IpwScoreTerms ipw_score_terms(const Sample& s, const LogisticModel& model, const Eigen::MatrixXd& X) {
  require_full_design(s, X);
  require_positive_observed_pi(s, "IPW estimated-score variance");
  const auto sg = score_gradients(model, X);
  IpwScoreTerms t;
  t.bgp = Eigen::MatrixXd::Zero(s.g.cols(), X.cols());
  t.b1p = Eigen::RowVectorXd::Zero(X.cols());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    if (!s.observed[i]) continue;
    const auto r = static_cast<Eigen::Index>(i);
    const double w = 1.0 / (s.pi[i] * s.pi[i]);
    t.bgp += w * s.g.row(r).transpose() * sg.grad.row(r);
    t.b1p += w * sg.grad.row(r);
  }
  t.bgp /= static_cast<double>(s.n_total);
  t.b1p /= static_cast<double>(s.n_total);
  t.infl = influence_mle(model, X, s.observed);
  return t;
}

}  // namespace detail

/// Var{(D g / pi - theta) - B_{g pi'} h}, estimated by its empirical covariance.
inline Eigen::MatrixXd ipw_variance_estimated_score(const Sample& s, const Eigen::VectorXd& theta,
                                                    const LogisticModel& model, const Eigen::MatrixXd& X) {
  const auto t = detail::ipw_score_terms(s, model, X);
  Eigen::MatrixXd psi(static_cast<Eigen::Index>(s.rows()), s.g.cols());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    Eigen::VectorXd v = -theta - t.bgp * t.infl.h.row(r).transpose();
    if (s.observed[i]) v += s.g.row(r).transpose() / s.pi[i];
    psi.row(r) = v.transpose();
  }
  return detail::influence_covariance(psi);
}

/// Var{D (g - theta) / pi + (theta B_{1 pi'} - B_{g pi'}) h}.
inline Eigen::MatrixXd sipw_variance_estimated_score(const Sample& s, const Eigen::VectorXd& theta,
                                                     const LogisticModel& model, const Eigen::MatrixXd& X) {
  const auto t = detail::ipw_score_terms(s, model, X);
  const Eigen::MatrixXd C = theta * t.b1p - t.bgp;
  Eigen::MatrixXd psi(static_cast<Eigen::Index>(s.rows()), s.g.cols());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    Eigen::VectorXd v = C * t.infl.h.row(r).transpose();
    if (s.observed[i]) v += (s.g.row(r).transpose() - theta) / s.pi[i];
    psi.row(r) = v.transpose();
  }
  return detail::influence_covariance(psi);
}

}  // namespace elw
