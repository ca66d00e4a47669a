// Acceptance run: one PASS/FAIL line per criterion, with the measured values.
// The process exits non-zero only when the run itself breaks.

#include <elw/elw.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"

namespace {

using elw::sim::MetricsTable;
using elw::sim::SimulationConfig;

struct Check {
  std::string what;
  bool ok;
};

struct Criterion {
  int id;
  std::vector<Check> checks;

  void add(bool ok, const std::string& what) { checks.push_back({what, ok}); }
  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.ok; });
  }
};

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

bool within(double got, double want, double tol) { return std::abs(got - want) <= tol; }

void report(const Criterion& c, double seconds) {
  std::cout << (c.passed() ? "PASS" : "FAIL") << " criterion " << c.id << ":";
  for (const auto& k : c.checks) std::cout << ' ' << (k.ok ? "" : "!") << k.what << ';';
  std::cout << " (" << fmt(seconds, 1) << " s)" << std::endl;
}

SimulationConfig example1(double gamma, double c, int model, std::vector<std::string> tags, std::size_t reps) {
  SimulationConfig cfg;
  cfg.example = 1;
  cfg.gamma = gamma;
  cfg.c = c;
  cfg.model = model;
  cfg.N = 2000;
  cfg.reps = reps;
  cfg.seed = 42;
  cfg.estimators = std::move(tags);
  return cfg;
}

SimulationConfig example2(int model, std::vector<std::string> tags) {
  SimulationConfig cfg;
  cfg.example = 2;
  cfg.rho = 0.2;
  cfg.model = model;
  cfg.design = elw::Design::kPoisson;
  cfg.N = 3000;
  cfg.n = 500;
  cfg.reps = 5000;
  cfg.seed = 42;
  cfg.estimators = std::move(tags);
  return cfg;
}

Criterion criterion1() {
  Criterion c{1, {}};
  const auto t = elw::sim::run_replications(example1(2.5, 1.0, 2, {"IPW", "SIPW", "ZZZ", "CHIM", "ELW"}, 5000));
  const std::vector<std::pair<std::string, double>> want{
      {"IPW", 2.06}, {"SIPW", 1.81}, {"ZZZ", 1.90}, {"CHIM", 1.81}, {"ELW", 1.72}};
  for (const auto& [tag, v] : want) {
    const double got = t.row(tag).rmse;
    c.add(within(got, v, 0.10), tag + " rmse " + fmt(got) + " vs " + fmt(v, 2) + "+-0.10");
  }
  return c;
}

Criterion criterion2() {
  Criterion c{2, {}};
  const auto t = elw::sim::run_replications(example1(1.5, 0.1, 4, {"IPW", "SIPW", "ZZZ", "ELW"}, 5000));
  const double ipw = t.row("IPW").rmse, sipw = t.row("SIPW").rmse, zzz = t.row("ZZZ").rmse, el = t.row("ELW").rmse;
  c.add(within(el, 0.74, 0.15), "ELW rmse " + fmt(el) + " vs 0.74+-0.15");
  c.add(el < sipw && sipw < zzz, "ELW " + fmt(el) + " < SIPW " + fmt(sipw) + " < ZZZ " + fmt(zzz));
  c.add(ipw > 10.0 * el, "IPW " + fmt(ipw) + " > 10 x ELW");
  return c;
}

Criterion criterion3() {
  Criterion c{3, {}};
  const auto an = elw::sim::run_replications(example1(2.5, 0.1, 4, {"ELW-an"}, 5000));
  const auto& a = an.row("ELW-an");
  c.add(within(100.0 * a.coverage, 94.38, 1.0), "ELW-an coverage " + fmt(100.0 * a.coverage, 2) + " vs 94.38+-1.0");
  c.add(within(a.avg_length, 0.035, 0.003), "ELW-an length " + fmt(a.avg_length, 4) + " vs 0.035+-0.003");
  auto cfg = example1(2.5, 0.1, 4, {"ELW-re"}, 1000);
  cfg.B = 1000;
  const auto re = elw::sim::run_replications(cfg);
  const auto& r = re.row("ELW-re");
  c.add(r.reps_used >= 1000, "ELW-re reps " + std::to_string(r.reps_used));
  c.add(within(100.0 * r.coverage, 94.32, 2.0), "ELW-re coverage " + fmt(100.0 * r.coverage, 2) + " vs 94.32+-2.0");
  return c;
}

Criterion criterion4(const MetricsTable& m1) {
  Criterion c{4, {}};
  const auto m3 = elw::sim::run_replications(example2(3, {"IPW", "SIPW", "ELW"}));
  const double el = m1.row("ELW").rmse, ipw = m1.row("IPW").rmse, sipw = m1.row("SIPW").rmse;
  c.add(within(el, 3.93, 0.25), "ELW rmse " + fmt(el) + " vs 3.93+-0.25");
  c.add(within(ipw, 9.04, 0.904), "IPW rmse " + fmt(ipw) + " vs 9.04+-10%");
  c.add(within(sipw, 4.34, 0.25), "SIPW rmse " + fmt(sipw) + " vs 4.34+-0.25");
  const double d_el = std::abs(m3.row("ELW").rmse - el), d_sipw = std::abs(m3.row("SIPW").rmse - sipw);
  c.add(d_el <= 1e-6, "ELW model 3 - model 1 = " + fmt(d_el, 9));
  c.add(d_sipw <= 1e-6, "SIPW model 3 - model 1 = " + fmt(d_sipw, 9));
  const double ratio = m3.row("IPW").rmse / ipw;
  c.add(within(ratio, 4.0, 0.4), "IPW model 3 / model 1 = " + fmt(ratio, 2) + " vs 4+-10%");
  return c;
}

Criterion criterion5(const MetricsTable& m1) {
  Criterion c{5, {}};
  const auto& r = m1.row("ELW-an");
  c.add(within(100.0 * r.coverage, 93.86, 1.0), "ELW-an coverage " + fmt(100.0 * r.coverage, 2) + " vs 93.86+-1.0");
  c.add(within(r.avg_length, 0.251, 0.01), "ELW-an length " + fmt(r.avg_length, 4) + " vs 0.251+-0.01");
  return c;
}

// Samples from both simulation examples and every design.
std::vector<elw::Sample> generated_samples() {
  std::vector<elw::Sample> out;
  elw::Rng rng(elw::derive_seed(7, elw::Purpose::kUser, 0, 0));
  for (double gamma : {1.5, 2.5})
    for (int r = 0; r < 100; ++r) out.push_back(elw::sim::gen_example1(gamma, 1.0, 1 + r % 4, 2000, rng).sample);
  for (auto design : {elw::Design::kPoisson, elw::Design::kPivotal, elw::Design::kPpsWr})
    for (double rho : {0.2, 0.8})
      for (int r = 0; r < 40; ++r) {
        const auto pop = elw::sim::gen_population_example2(rho, 1 + r % 4, 3000, rng);
        out.push_back(elw::sim::draw_design_sample(pop, 500, design, rng));
      }
  return out;
}

Criterion criterion6() {
  Criterion c{6, {}};
  elw::Rng rng(elw::derive_seed(6, elw::Purpose::kUser, 0, 0));

  {
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
      const std::size_t n = 2 + rng() % 199;
      const std::size_t N = n + 1 + rng() % (9 * n);
      std::vector<double> pi(n);
      for (auto& p : pi) p = elw::uniform01(rng);
      worst = std::max(worst, std::abs(elw::solve_alpha(pi, n, N) - oracle::alpha(pi, n, N, 1000)));
    }
    c.add(worst <= 1e-8, "solver vs oracle max " + fmt(worst * 1e9, 3) + "e-9 over 1000");
  }

  const auto samples = generated_samples();
  {
    double sum_err = 0.0, moment_err = 0.0, shift_err = 0.0, shadow_excess = -1e300;
    std::size_t shadow_cases = 0;
    for (const auto& s : samples) {
      const auto sol = elw::elw_weights(s);
      const auto pi = s.pi;
      long double total = 0, moment = 0;
      for (Eigen::Index i = 0; i < sol.weights.size(); ++i) {
        total += sol.weights[i];
        moment += static_cast<long double>(sol.weights[i]) * (pi[static_cast<std::size_t>(i)] - sol.alpha_hat);
      }
      sum_err = std::max(sum_err, static_cast<double>(std::abs(total - 1)));
      moment_err = std::max(moment_err, static_cast<double>(std::abs(moment)));

      elw::Sample moved = s;
      const double shift = 5.0;
      for (Eigen::Index i = 0; i < moved.g.rows(); ++i)
        if (moved.observed[static_cast<std::size_t>(i)]) moved.g(i, 0) += shift;
      shift_err = std::max(shift_err, std::abs(elw::elw_mean(moved).theta_hat[0] - elw::elw_mean(s).theta_hat[0] - shift));
      shift_err =
          std::max(shift_err, std::abs(elw::sipw_mean(moved).theta_hat[0] - elw::sipw_mean(s).theta_hat[0] - shift));

      const Eigen::VectorXd theta = elw::weighted_mean(s, sol.weights);
      const auto m = elw::elw_moments(s, sol, theta);
      if (m.b11 > 1.0 + elw::detail::kB11Guard) {
        ++shadow_cases;
        const double sigma = elw::elw_variance_missing(s, sol, theta)(0, 0);
        const double bound = m.bgg(0, 0) - theta[0] * theta[0];
        shadow_excess = std::max(shadow_excess, (sigma - bound) / std::max(1.0, std::abs(bound)));
      }
    }
    const std::string count = " over " + std::to_string(samples.size()) + " samples";
    c.add(sum_err <= 1e-10, "|sum p - 1| max " + fmt(sum_err * 1e12, 3) + "e-12" + count);
    c.add(moment_err <= 1e-8, "|sum p (pi - alpha)| max " + fmt(moment_err * 1e12, 3) + "e-12");
    c.add(shift_err <= 1e-10, "shift identity max " + fmt(shift_err * 1e12, 3) + "e-12");
    c.add(shadow_cases > 0 && shadow_excess <= 1e-12,
          "efficiency shadow on " + std::to_string(shadow_cases) + " samples, max relative excess " +
              fmt(shadow_excess, 6));
  }

  {
    int tested = 0, violated = 0;
    for (int t = 0; t < 2000; ++t) {
      const std::size_t n = 2 + rng() % 199;
      const std::size_t N = n + 1 + rng() % (9 * n);
      std::vector<double> pi(n);
      for (auto& p : pi) p = elw::uniform01(rng);
      if (t % 2 == 0)
        for (auto& p : pi) p = std::round(p * 5.0) / 5.0;
      const double lo = *std::min_element(pi.begin(), pi.end());
      const double hi = *std::max_element(pi.begin(), pi.end());
      const auto n1 = static_cast<double>(std::count(pi.begin(), pi.end(), lo));
      Eigen::MatrixXd g = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), 1);
      const auto sol = elw::elw_weights(elw::make_observed_sample(g, pi, N));
      const double kappa = elw::max_weight_ratio(sol, pi, n, N);
      for (double eps : {0.1, 0.2, 0.3})
        if (hi - lo > eps && n1 / static_cast<double>(n) < 1.0 - eps) {
          ++tested;
          if (kappa > static_cast<double>(n) / (eps * eps * eps)) ++violated;
        }
    }
    c.add(tested > 0 && violated == 0,
          "kappa <= n/eps^3 on " + std::to_string(tested) + " cases, " + std::to_string(violated) + " violations");
  }

  {
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      const Eigen::Index N = 200, p = 3;
      Eigen::MatrixXd X(N, p);
      std::vector<std::uint8_t> D(static_cast<std::size_t>(N));
      for (Eigen::Index i = 0; i < N; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = 4.0 * elw::uniform01(rng) - 2.0;
        X(i, 2) = elw::uniform01(rng);
        D[static_cast<std::size_t>(i)] = elw::uniform01(rng) < 0.5;
      }
      Eigen::VectorXd beta(p);
      for (Eigen::Index k = 0; k < p; ++k) beta[k] = 2.0 * elw::uniform01(rng) - 1.0;
      const Eigen::VectorXd an = elw::logistic_gradient(beta, X, D);
      const Eigen::VectorXd fd = oracle::fd_gradient(
          [&](const Eigen::VectorXd& b) { return elw::logistic_log_likelihood(b, X, D); }, beta);
      worst = std::max(worst, (an - fd).norm() / std::max(1.0, an.norm()));
    }
    c.add(worst <= 1e-5, "logistic gradient vs FD relative " + fmt(worst * 1e8, 3) + "e-8");
  }

  {
    std::vector<double> x(50);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 1.0 + std::fmod(static_cast<double>(i) * 0.37, 2.0);
    const auto pi = elw::inclusion_probs_proportional(x, 12);
    const int reps = 100000;
    std::vector<double> hits(pi.size(), 0.0);
    bool fixed = true;
    for (int r = 0; r < reps; ++r) {
      const auto d = elw::pivotal_sample(pi, rng);
      int size = 0;
      for (std::size_t i = 0; i < d.size(); ++i) {
        hits[i] += d[i];
        size += d[i];
      }
      fixed = fixed && size == 12;
    }
    double worst_z = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i)
      worst_z = std::max(worst_z, std::abs(hits[i] / reps - pi[i]) / std::sqrt(pi[i] * (1 - pi[i]) / reps));
    c.add(fixed, "pivotal fixed size over 1e5 draws");
    c.add(worst_z <= 4.0, "pivotal max |z| " + fmt(worst_z, 2));
  }
  return c;
}

}  // namespace

int main() {
  using clock = std::chrono::steady_clock;
  int passed = 0;
  auto timed = [&](auto&& fn) {
    const auto t0 = clock::now();
    const Criterion c = fn();
    report(c, std::chrono::duration<double>(clock::now() - t0).count());
    passed += c.passed();
  };
  try {
    timed(criterion1);
    timed(criterion2);
    timed(criterion3);
    const auto t0 = clock::now();
    const auto m1 = elw::sim::run_replications(example2(1, {"IPW", "SIPW", "ELW", "ELW-an"}));
    const double shared = std::chrono::duration<double>(clock::now() - t0).count();
    timed([&] { return criterion4(m1); });
    timed([&] { return criterion5(m1); });
    std::cout << "  (criteria 4 and 5 share a " << fmt(shared, 1) << " s model 1 run)" << std::endl;
    timed(criterion6);
  } catch (const std::exception& e) {
    std::cout << "ERROR acceptance run aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << passed << "/6 criteria passed" << std::endl;
  return 0;
}
