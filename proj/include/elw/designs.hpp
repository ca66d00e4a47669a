#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "elw/errors.hpp"
#include "elw/rng.hpp"

namespace elw {

enum class Design { kPoisson, kPivotal, kPpsWr, kSrswor };

inline const char* to_string(Design d) {
  switch (d) {
    case Design::kPoisson: return "poisson";
    case Design::kPivotal: return "pivotal";
    case Design::kPpsWr: return "pps";
    case Design::kSrswor: return "srswor";
  }
  return "?";
}

inline Design parse_design(const std::string& s) {
  if (s == "poisson") return Design::kPoisson;
  if (s == "pivotal") return Design::kPivotal;
  if (s == "pps" || s == "pps-wr") return Design::kPpsWr;
  if (s == "srswor") return Design::kSrswor;
  throw DomainError("unknown design '" + s + "'");
}

/// pi_i = n x_i / sum x. Probabilities above one are an error, never clipped.
inline std::vector<double> inclusion_probs_proportional(std::span<const double> x, std::size_t n) {
  if (n > x.size()) throw InvalidSample("sample size exceeds population size");
  double total = 0.0;
  for (double v : x) {
    if (!(v > 0.0)) throw InvalidSample("size variable must be positive");
    total += v;
  }
  std::vector<double> pi(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    pi[i] = static_cast<double>(n) * x[i] / total;
    if (pi[i] > 1.0 + 1e-12)
      throw InvalidSample("size variable too large: unit " + std::to_string(i) + " would have pi > 1");
    pi[i] = std::min(pi[i], 1.0);
  }
  return pi;
}

/// Draw probabilities q_i = x_i / sum x for with-replacement sampling.
inline std::vector<double> draw_probs_proportional(std::span<const double> x) {
  const double total = std::accumulate(x.begin(), x.end(), 0.0);
  std::vector<double> q(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0)) throw InvalidSample("size variable must be positive");
    q[i] = x[i] / total;
  }
  return q;
}

/// Independent Bernoulli(pi_i) indicators.
inline std::vector<std::uint8_t> poisson_sample(std::span<const double> pi, Rng& rng) {
  std::vector<std::uint8_t> d(pi.size());
  for (std::size_t i = 0; i < pi.size(); ++i) d[i] = uniform01(rng) < pi[i] ? 1 : 0;
  return d;
}

/// Sequential (ordered) pivotal method: the current active unit duels the
/// next fractional unit; one of them is settled and the other carries the
/// combined probability forward. Fixed size sum(pi) with exact marginals.
inline std::vector<std::uint8_t> pivotal_sample(std::span<const double> pi, Rng& rng) {
  constexpr double eps = 1e-12;
  const double total = std::accumulate(pi.begin(), pi.end(), 0.0);
  if (std::abs(total - std::round(total)) > 1e-8)
    throw InvalidSample("pivotal sampling needs an integer sum of inclusion probabilities");
  std::vector<std::uint8_t> d(pi.size(), 0);
  std::ptrdiff_t active = -1;
  double pa = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    const double pb = pi[i];
    if (pb < 0.0 || pb > 1.0) throw InvalidSample("inclusion probability outside [0, 1]");
    if (pb <= eps) continue;
    if (pb >= 1.0 - eps) {
      d[i] = 1;
      continue;
    }
    if (active < 0) {
      active = static_cast<std::ptrdiff_t>(i);
      pa = pb;
      continue;
    }
    const double s = pa + pb;
    const double u = uniform01(rng);
    if (s < 1.0) {
      if (u < pb / s) {  // active loses, i carries s
        d[static_cast<std::size_t>(active)] = 0;
        active = static_cast<std::ptrdiff_t>(i);
      } else {
        d[i] = 0;
      }
      pa = s;
    } else {
      if (u < (1.0 - pb) / (2.0 - s)) {  // active selected, i carries s - 1
        d[static_cast<std::size_t>(active)] = 1;
        active = static_cast<std::ptrdiff_t>(i);
      } else {
        d[i] = 1;
      }
      pa = s - 1.0;
    }
    if (pa <= eps || pa >= 1.0 - eps) {
      d[static_cast<std::size_t>(active)] = pa >= 0.5 ? 1 : 0;
      active = -1;
    }
  }
  if (active >= 0) d[static_cast<std::size_t>(active)] = pa >= 0.5 ? 1 : 0;
  return d;
}

/// n independent categorical draws with probabilities q (duplicates allowed).
inline std::vector<std::size_t> pps_wr_sample(std::span<const double> q, std::size_t n, Rng& rng) {
  if (q.empty()) throw InvalidSample("empty draw-probability vector");
  std::vector<double> cdf(q.size());
  std::partial_sum(q.begin(), q.end(), cdf.begin());
  const double total = cdf.back();
  std::vector<std::size_t> out(n);
  for (auto& idx : out) {
    const double u = uniform01(rng) * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    idx = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), q.size() - 1);
    while (q[idx] <= 0.0 && idx + 1 < q.size()) ++idx;  // skip zero-width cells hit at boundaries
  }
  return out;
}

/// Simple random sample of M distinct indices from [0, N), sorted ascending.
inline std::vector<std::size_t> srswor(std::size_t N, std::size_t M, Rng& rng) {
  if (M > N) throw InvalidSample("subsample larger than population");
  std::vector<std::size_t> out;
  out.reserve(M);
  if (M * 4 < N) {
    // Floyd's algorithm
    std::unordered_set<std::size_t> chosen;
    chosen.reserve(M * 2);
    for (std::size_t j = N - M; j < N; ++j) {
      std::uniform_int_distribution<std::size_t> pick(0, j);
      const std::size_t t = pick(rng);
      out.push_back(chosen.insert(t).second ? t : (chosen.insert(j), j));
    }
  } else {
    std::vector<std::size_t> all(N);
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (std::size_t k = 0; k < M; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, N - 1);
      std::swap(all[k], all[pick(rng)]);
    }
    out.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(M));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace elw
