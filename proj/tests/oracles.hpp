#pragma once

// Independent reference computations used only by the tests. Everything here
// is written from the defining formulas with plain loops and long double
// accumulators; nothing calls into the production solver or moment code.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

using ld = long double;

inline ld k_value(ld alpha, const std::vector<double>& pi, std::size_t n, std::size_t N) {
  const ld r = static_cast<ld>(n) / static_cast<ld>(N);
  ld s = 0;
  for (double p : pi) s += (p - alpha) / (r + (1 - r) * p - alpha);
  return s;
}

/// Root of K on [min pi, min xi): uniform grid scan for the sign change, then
/// long-double bisection to machine precision.
inline double alpha(const std::vector<double>& pi, std::size_t n, std::size_t N, std::size_t grid = 2000) {
  const ld lo0 = *std::min_element(pi.begin(), pi.end());
  const ld r = static_cast<ld>(n) / static_cast<ld>(N);
  const ld hi0 = r + (1 - r) * lo0;
  if (n == N) {
    ld s = 0;
    for (double p : pi) s += p;
    return static_cast<double>(s / pi.size());
  }
  if (k_value(lo0, pi, n, N) <= 0) return static_cast<double>(lo0);
  ld lo = lo0, hi = hi0;
  for (std::size_t k = 1; k < grid; ++k) {
    const ld a = lo0 + (hi0 - lo0) * static_cast<ld>(k) / static_cast<ld>(grid);
    if (k_value(a, pi, n, N) < 0) {
      hi = a;
      break;
    }
    lo = a;
  }
  for (int it = 0; it < 200 && hi - lo > 0; ++it) {
    const ld mid = (lo + hi) / 2;
    if (mid == lo || mid == hi) break;
    (k_value(mid, pi, n, N) > 0 ? lo : hi) = mid;
  }
  return static_cast<double>((lo + hi) / 2);
}

/// p_i = 1 / (n (1 + lambda (pi_i - alpha))).
inline std::vector<double> weights(const std::vector<double>& pi, std::size_t n, std::size_t N, double a) {
  const ld lambda = n == N ? 0 : static_cast<ld>(N - n) / (static_cast<ld>(n) * (1 - static_cast<ld>(a)));
  std::vector<double> w;
  for (double p : pi) w.push_back(static_cast<double>(1 / (static_cast<ld>(n) * (1 + lambda * (p - a)))));
  return w;
}

/// Scalar missing-data ELW variance from observed (y, p) pairs.
inline double elw_var_missing(const std::vector<double>& y, const std::vector<double>& p, std::size_t N) {
  ld b11 = 0, bg1 = 0, bgg = 0, th = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    th += p[i] * y[i];
    b11 += static_cast<ld>(N) * p[i] * p[i];
    bg1 += static_cast<ld>(N) * p[i] * p[i] * y[i];
    bgg += static_cast<ld>(N) * p[i] * p[i] * y[i] * y[i];
  }
  return static_cast<double>(bgg - th * th - (bg1 - th) * (bg1 - th) / (b11 - 1));
}

struct IpwMoments {
  ld b11 = 0, bg1 = 0, bgg = 0, theta = 0;
};

inline IpwMoments ipw_moments(const std::vector<double>& y, const std::vector<double>& pi, std::size_t N) {
  IpwMoments m;
  for (std::size_t i = 0; i < y.size(); ++i) {
    m.theta += y[i] / pi[i];
    m.b11 += 1 / (static_cast<ld>(pi[i]) * pi[i]);
    m.bg1 += y[i] / (static_cast<ld>(pi[i]) * pi[i]);
    m.bgg += y[i] * y[i] / (static_cast<ld>(pi[i]) * pi[i]);
  }
  m.theta /= N;
  m.b11 /= N;
  m.bg1 /= N;
  m.bgg /= N;
  return m;
}

/// Largest 1-based i with sorted pi_(i) <= 1/(i+1), by direct enumeration.
inline std::size_t zzz_k(std::vector<double> pi) {
  std::sort(pi.begin(), pi.end());
  std::size_t k = 0;
  for (std::size_t i = 1; i <= pi.size(); ++i)
    if (pi[i - 1] * static_cast<double>(i + 1) <= 1.0) k = i;
  return k;
}

/// Trimming level by scanning candidate alphas {0} U {pi <= 0.5} in increasing order.
inline double chim_alpha(const std::vector<double>& pi) {
  std::vector<double> in;
  for (double p : pi)
    if (p > 0 && p < 1) in.push_back(p);
  auto cost = [](ld p) { return 1 / (p * (1 - p)); };
  auto ok = [&](double a) {
    ld s = 0, worst = 0;
    std::size_t c = 0;
    for (double p : in)
      if (p >= a && p <= 1 - a) {
        s += cost(p);
        worst = std::max(worst, cost(p));
        ++c;
      }
    if (c == 0) return false;
    if (a == 0) return worst <= 2 * s / c;
    return cost(a) <= 2 * s / c;
  };
  if (ok(0.0)) return 0.0;
  std::vector<double> cand;
  for (double p : in)
    if (p <= 0.5) cand.push_back(p);
  std::sort(cand.begin(), cand.end());
  for (double a : cand)
    if (ok(a)) return a;
  return -1;
}

/// inf{t on a grid of step h : t^power count(pi <= t) >= target}, else 1.
inline double mw_grid(const std::vector<double>& pi, double power, double target, double h = 1e-6) {
  std::vector<double> s(pi);
  std::sort(s.begin(), s.end());
  const auto steps = static_cast<std::size_t>(std::llround(1.0 / h));
  for (std::size_t k = 1; k <= steps; ++k) {
    const double t = static_cast<double>(k) * h;
    const auto count = static_cast<double>(std::upper_bound(s.begin(), s.end(), t) - s.begin());
    if (std::pow(t, power) * count >= target) return t;
  }
  return 1.0;
}

/// Central finite-difference gradient.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                   double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

/// Sorted-sum in long double.
inline double sum(const std::vector<double>& v) {
  ld s = 0;
  for (double x : v) s += x;
  return static_cast<double>(s);
}

}  // namespace oracle
