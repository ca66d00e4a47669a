#include <catch2/catch_amalgamated.hpp>

#include <elw/core.hpp>
#include <elw/rng.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"

using Catch::Approx;

namespace {

struct RandomInstance {
  std::vector<double> pi;
  std::size_t n = 0;
  std::size_t N = 0;
};

RandomInstance random_instance(elw::Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick_n(2, 200);
  RandomInstance r;
  r.n = pick_n(rng);
  std::uniform_int_distribution<std::size_t> pick_N(r.n + 1, 10 * r.n);
  r.N = pick_N(rng);
  r.pi.resize(r.n);
  for (auto& p : r.pi) p = elw::uniform01(rng);
  return r;
}

elw::Sample observed_only(const std::vector<double>& pi, std::size_t N) {
  Eigen::MatrixXd g(static_cast<Eigen::Index>(pi.size()), 1);
  for (std::size_t i = 0; i < pi.size(); ++i) g(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i);
  return elw::make_observed_sample(g, pi, N);
}

}  // namespace

TEST_CASE("xi values", "[core]") {
  auto xi = elw::xi_values(std::vector<double>{0.2, 0.5, 0.8}, 3, 6);
  CHECK(xi[0] == Approx(0.6).margin(1e-15));
  CHECK(xi[1] == Approx(0.75).margin(1e-15));
  CHECK(xi[2] == Approx(0.9).margin(1e-15));

  xi = elw::xi_values(std::vector<double>{0.3, 0.3}, 2, 2);
  CHECK(xi[0] == 1.0);
  CHECK(xi[1] == 1.0);

  xi = elw::xi_values(std::vector<double>{0.0, 0.4}, 2, 10);
  CHECK(xi[0] == Approx(0.2).margin(1e-15));
  CHECK(xi[1] == Approx(0.52).margin(1e-15));

  CHECK_THROWS_AS(elw::xi_values(std::vector<double>{0.5}, 0, 4), elw::InvalidSample);
  CHECK_THROWS_AS(elw::xi_values(std::vector<double>{0.5}, 5, 4), elw::InvalidSample);
}

TEST_CASE("K function values and domain", "[core]") {
  const std::vector<double> equal(7, 0.3);
  CHECK(elw::k_function(0.3, equal, 7, 40) == 0.0);

  const std::vector<double> pi{0.2, 0.5, 0.8};
  CHECK(elw::k_function(0.2, pi, 3, 6) == Approx(1.40260).margin(1e-5));
  CHECK(elw::k_function(0.4, std::vector<double>{0.2, 0.6}, 2, 2) == Approx(0.0).margin(1e-15));

  CHECK_THROWS_AS(elw::k_function(0.6, pi, 3, 6), elw::DomainError);
  CHECK_THROWS_AS(elw::k_function(0.7, pi, 3, 6), elw::DomainError);
}

TEST_CASE("K is strictly decreasing on the bracket", "[core]") {
  elw::Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    const auto inst = random_instance(rng);
    const double lo = *std::min_element(inst.pi.begin(), inst.pi.end());
    const double r = static_cast<double>(inst.n) / static_cast<double>(inst.N);
    const double hi = r + (1 - r) * lo;
    double a1 = lo + (hi - lo) * elw::uniform01(rng);
    double a2 = lo + (hi - lo) * elw::uniform01(rng);
    if (a1 > a2) std::swap(a1, a2);
    if (a1 == a2) continue;
    CHECK(elw::k_function(a1, inst.pi, inst.n, inst.N) > elw::k_function(a2, inst.pi, inst.n, inst.N));
    CHECK(elw::k_function(lo, inst.pi, inst.n, inst.N) >= 0.0);
    CHECK(elw::k_function(hi - 1e-8, inst.pi, inst.n, inst.N) < -1e3);
  }
}

TEST_CASE("solve_alpha degenerate branches", "[core]") {
  CHECK(elw::solve_alpha(std::vector<double>(30, 0.3), 30, 100) == Approx(0.3).margin(1e-15));
  CHECK(elw::solve_alpha(std::vector<double>{0.2, 0.6, 0.7}, 3, 3) == Approx(0.5).margin(1e-15));
  CHECK_THROWS_AS(elw::solve_alpha(std::vector<double>{}, 1, 3), elw::InvalidSample);
}

TEST_CASE("solve_alpha matches the fine-grid oracle on the worked example", "[core]") {
  const std::vector<double> pi{0.2, 0.5, 0.8};
  const double oracle_alpha = oracle::alpha(pi, 3, 6, 400000);
  const double a = elw::solve_alpha(pi, 3, 6);
  CHECK(a >= 0.2);
  CHECK(a < 0.6);
  CHECK(a == Approx(oracle_alpha).margin(1e-10));
}

TEST_CASE("solve_alpha agrees with the oracle on random instances", "[core]") {
  elw::Rng rng(2024);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto inst = random_instance(rng);
    const double a = elw::solve_alpha(inst.pi, inst.n, inst.N);
    worst = std::max(worst, std::abs(a - oracle::alpha(inst.pi, inst.n, inst.N, 1000)));
  }
  INFO("max deviation " << worst);
  CHECK(worst <= 1e-8);
}

TEST_CASE("ELW weights on the worked example", "[core]") {
  const std::vector<double> pi{0.2, 0.5, 0.8};
  const auto s = observed_only(pi, 6);
  const auto sol = elw::elw_weights(s);
  const double a = oracle::alpha(pi, 3, 6, 400000);
  const auto w = oracle::weights(pi, 3, 6, a);
  for (int i = 0; i < 3; ++i) CHECK(sol.weights[i] == Approx(w[static_cast<std::size_t>(i)]).margin(1e-10));
  CHECK(sol.weights.sum() == Approx(1.0).margin(1e-10));
  double moment = 0.0;
  for (int i = 0; i < 3; ++i) moment += sol.weights[i] * (pi[static_cast<std::size_t>(i)] - sol.alpha_hat);
  CHECK(std::abs(moment) <= 1e-8);
  CHECK(elw::max_weight_ratio(sol, pi, 3, 6) == Approx((0.9 - a) / (0.6 - a)).epsilon(1e-8));
}

TEST_CASE("ELW weights collapse for equal probabilities and n = N", "[core]") {
  std::vector<std::uint8_t> d(20, 0);
  std::vector<double> y(20, 1.0), pi(20, 0.3);
  for (int i = 0; i < 5; ++i) d[static_cast<std::size_t>(3 * i)] = 1;
  const auto sol = elw::elw_weights(elw::make_sample(d, y, pi));
  for (std::size_t i = 0; i < 20; ++i) CHECK(sol.weights[static_cast<Eigen::Index>(i)] == (d[i] ? 0.2 : 0.0));
  CHECK(elw::max_weight_ratio(sol, std::vector<double>(5, 0.3), 5, 20) == 1.0);

  const auto full = elw::elw_weights(observed_only({0.1, 0.4, 0.9, 0.7}, 4));
  CHECK(full.lambda == 0.0);
  for (int i = 0; i < 4; ++i) CHECK(full.weights[i] == Approx(0.25).margin(1e-15));
}

TEST_CASE("alpha_hat of one with unobserved units is degenerate", "[core]") {
  std::vector<std::uint8_t> d{1, 1, 0};
  CHECK_THROWS_AS(elw::elw_weights(elw::make_sample(d, std::vector<double>{1, 2, 0}, {1.0, 1.0, 1.0})),
                  elw::Degenerate);
}

TEST_CASE("observed zero probability keeps weights finite", "[core]") {
  const auto sol = elw::elw_weights(observed_only({0.0, 0.3, 0.7}, 10));
  for (int i = 0; i < 3; ++i) {
    CHECK(sol.weights[i] > 0.0);
    CHECK(sol.weights[i] <= 1.0);
  }
  CHECK(sol.weights.sum() == Approx(1.0).margin(1e-10));
}

TEST_CASE("ElwSolution invariants on random samples", "[core]") {
  elw::Rng rng(7);
  for (int t = 0; t < 300; ++t) {
    const std::size_t N = 10 + rng() % 400;
    std::vector<std::uint8_t> d(N);
    std::vector<double> pi(N), y(N);
    std::size_t n = 0;
    for (std::size_t i = 0; i < N; ++i) {
      pi[i] = elw::uniform01(rng);
      d[i] = elw::uniform01(rng) < pi[i] ? 1 : 0;
      y[i] = elw::uniform01(rng);
      n += d[i];
    }
    if (n == 0) continue;
    const auto s = elw::make_sample(d, y, pi);
    const auto sol = elw::elw_weights(s);
    double total = 0.0, moment = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      const double w = sol.weights[static_cast<Eigen::Index>(i)];
      if (d[i]) {
        CHECK(w > 0.0);
      } else {
        CHECK(w == 0.0);
      }
      total += w;
      moment += w * (pi[i] - sol.alpha_hat);
    }
    CHECK(std::abs(total - 1.0) <= 1e-10);
    CHECK(std::abs(moment) <= 1e-8);
    CHECK(sol.zeta_l <= sol.alpha_hat);
    CHECK(sol.alpha_hat < sol.zeta_u);
    if (n < N) {
      const double expected = static_cast<double>(N - n) / (static_cast<double>(n) * (1.0 - sol.alpha_hat));
      CHECK(std::abs(sol.lambda - expected) <= 1e-10 * std::max(1.0, expected));
    }
  }
}

TEST_CASE("weight ratio bound n / eps^3", "[core]") {
  elw::Rng rng(99);
  int tested = 0;
  for (int t = 0; t < 2000; ++t) {
    auto inst = random_instance(rng);
    // discrete scores make repeated minima (n1 > 1) common
    if (t % 2 == 0)
      for (auto& p : inst.pi) p = std::round(p * 5.0) / 5.0;
    const double lo = *std::min_element(inst.pi.begin(), inst.pi.end());
    const double hi = *std::max_element(inst.pi.begin(), inst.pi.end());
    const auto n1 = static_cast<double>(std::count(inst.pi.begin(), inst.pi.end(), lo));
    const auto s = observed_only(inst.pi, inst.N);
    const auto sol = elw::elw_weights(s);
    const double kappa = elw::max_weight_ratio(sol, inst.pi, inst.n, inst.N);
    CHECK(kappa >= 1.0);
    for (double eps : {0.1, 0.2, 0.3}) {
      if (hi - lo > eps && n1 / static_cast<double>(inst.n) < 1.0 - eps) {
        ++tested;
        CHECK(kappa <= static_cast<double>(inst.n) / (eps * eps * eps));
      }
    }
  }
  CHECK(tested > 1000);
}

TEST_CASE("large samples use the compensated sum and stay accurate", "[core]") {
  elw::Rng rng(5);
  const std::size_t n = 20000;
  std::vector<double> pi(n);
  for (auto& p : pi) p = 0.05 + 0.9 * elw::uniform01(rng);
  const double a = elw::solve_alpha(pi, n, 50000);
  CHECK(a == Approx(oracle::alpha(pi, n, 50000, 200)).margin(1e-8));
  CHECK(std::abs(static_cast<double>(oracle::k_value(a, pi, n, 50000))) < 1e-6);
}
