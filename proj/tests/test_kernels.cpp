#include <doctest.h>

#include <cmath>
#include <vector>

#include "volterra/kernels.hpp"
#include "volterra/rng.hpp"

using namespace volterra;

namespace {

const double kLn2 = std::log(2.0);

// the decreasing counterexample kernel that fails to preserve nonnegativity
ExpSumKernel bad_kernel() { return ExpSumKernel({2.0, -1.0}, {1.0, 2.0}); }

MultiExpKernel random_kernel(CounterRng& rng, double rho_lo = 1e-3) {
  const int n = 1 + static_cast<int>(rng.uniform01() * 6.0);
  std::vector<double> gammas, rhos;
  double rho = rho_lo * (1.0 + rng.uniform01());
  for (int i = 0; i < n; ++i) {
    gammas.push_back(0.1 * std::pow(20.0, rng.uniform01()));
    rhos.push_back(rho);
    rho += 0.05 + 5.0 * rng.uniform01();
  }
  return MultiExpKernel(gammas, rhos);
}

std::vector<double> random_gaps(CounterRng& rng, int l) {
  std::vector<double> g(l);
  for (double& a : g) a = std::exp(std::log(1e-3) + std::log(1e4) * rng.uniform01());
  return g;
}

}  // namespace

TEST_CASE("kernel evaluation") {
  const MultiExpKernel preset = paper_n5_kernel();
  CHECK(preset(0.0) == doctest::Approx(1.12762102).epsilon(1e-12));
  CHECK(preset.at_zero() == doctest::Approx(1.12762102).epsilon(1e-12));

  const MultiExpKernel constant({1.0}, {0.0});
  CHECK(constant(7.3) == 1.0);

  const FractionalKernel half(0.5);
  CHECK(half(2.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(half(0.0), std::domain_error);

  const FractionalKernel rough(0.1);
  CHECK(rough(1.0) == doctest::Approx(1.0 / std::tgamma(0.6)).epsilon(1e-14));
  // positive and nonincreasing on a grid
  double prev = preset(0.0);
  for (int i = 1; i <= 50; ++i) {
    const double v = preset(0.1 * i);
    CHECK(v > 0.0);
    CHECK(v <= prev);
    prev = v;
  }
}

TEST_CASE("kernel invariants are enforced") {
  CHECK_THROWS_AS(MultiExpKernel({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(MultiExpKernel({1.0, -0.5}, {0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(MultiExpKernel({1.0, 1.0}, {1.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(MultiExpKernel({1.0}, {-0.1}), std::invalid_argument);
  CHECK_THROWS_AS(ExpSumKernel({1.0, -2.0}, {1.0, 2.0}), std::invalid_argument);  // G(0) <= 0
  CHECK_THROWS_AS(FractionalKernel(0.0), std::invalid_argument);
  CHECK_THROWS_AS(FractionalKernel(0.6), std::invalid_argument);
}

TEST_CASE("g_l brute force matches closed forms") {
  const MultiExpKernel pure_exp({1.0}, {1.0});
  const std::vector<double> gaps{0.4, 1.1};
  CHECK(g_l_bruteforce(pure_exp, gaps) == doctest::Approx(0.0).epsilon(1e-14));

  const ExpSumKernel bad = bad_kernel();
  const std::vector<double> ln2s{kLn2, kLn2};
  CHECK(g_l_bruteforce(bad, ln2s) == doctest::Approx(-0.125).epsilon(1e-12));

  const MultiExpKernel preset = paper_n5_kernel();
  const std::vector<double> tri{0.5, 0.5, 0.5};
  const double brute = g_l_bruteforce(preset, tri);
  CHECK(brute >= 0.0);
  CHECK(brute == doctest::Approx(g_l_fast(preset, tri)).epsilon(1e-12));

  std::vector<double> deep(25, 0.3);
  CHECK_THROWS_WITH_AS(g_l_bruteforce(preset, deep),
                       doctest::Contains("use g_l_fast"), std::invalid_argument);
}

TEST_CASE("g_l fast recursion") {
  CounterRng rng(2024, 0);
  const MultiExpKernel preset = paper_n5_kernel();

  // base case l = 1
  for (int i = 0; i < 20; ++i) {
    const double a1 = 0.01 + 3.0 * rng.uniform01();
    const std::vector<double> g{a1};
    CHECK(g_l_fast(preset, g) ==
          doctest::Approx(preset(a1) / preset.at_zero()).epsilon(1e-14));
  }

  const ExpSumKernel bad = bad_kernel();
  const std::vector<double> ln2s{kLn2, kLn2};
  CHECK(g_l_fast(bad, ln2s) == doctest::Approx(-0.125).epsilon(1e-12));
}

TEST_CASE("g_l fast vs brute force on random kernels") {
  CounterRng rng(7, 7);
  for (int trial = 0; trial < 120; ++trial) {
    const MultiExpKernel k = random_kernel(rng);
    const int l = 1 + static_cast<int>(rng.uniform01() * 10.0);
    const auto gaps = random_gaps(rng, l);
    const double fast = g_l_fast(k, gaps);
    const double brute = g_l_bruteforce(k, gaps);
    CHECK(std::fabs(fast - brute) <= 1e-10 * (1.0 + std::fabs(brute)));
  }
}

TEST_CASE("exponential tilt covariance") {
  CounterRng rng(11, 3);
  const MultiExpKernel base = paper_n5_kernel();
  for (int trial = 0; trial < 40; ++trial) {
    const double rho = -2.0 + 4.0 * rng.uniform01();
    const auto tilted = [&](double t) { return base(t) * std::exp(-rho * t); };
    const int l = 1 + static_cast<int>(rng.uniform01() * 6.0);
    const auto gaps = random_gaps(rng, l);
    double total = 0.0;
    for (double a : gaps) total += a;
    // scale moved to the tilted side so the comparison frame stays conditioned
    const double lhs = std::exp(rho * total) * g_l_fast(tilted, gaps);
    const double rhs = g_l_fast(base, gaps);
    CHECK(std::fabs(lhs - rhs) <= 1e-10 * (1.0 + std::fabs(rhs)));
  }
}

TEST_CASE("worst-case strategy weights") {
  const MultiExpKernel pure_exp({1.0}, {1.0});
  const std::vector<double> t01{0.0, 1.0};
  const StrategyPath p = worst_case_strategy(pure_exp, t01);
  CHECK(p.weights[0] == 1.0);
  CHECK(p.weights[1] == doctest::Approx(-std::exp(-1.0)).epsilon(1e-14));

  // completely monotone: all later weights <= 0
  CounterRng rng(5, 1);
  const MultiExpKernel preset = paper_n5_kernel();
  std::vector<double> times{0.0};
  for (int i = 0; i < 12; ++i) times.push_back(times.back() + 0.05 + rng.uniform01());
  const StrategyPath wp = worst_case_strategy(preset, times);
  for (std::size_t k = 1; k < wp.weights.size(); ++k) CHECK(wp.weights[k] <= 1e-12);

  // zero-bring-back: partial sums vanish at the grid times
  for (std::size_t k = 1; k < times.size(); ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j <= k; ++j) s += wp.weights[j] * preset(times[k] - times[j]);
    CHECK(std::fabs(s) <= 1e-10);
  }

  // violation certificate for the non-preserving kernel
  const ExpSumKernel bad = bad_kernel();
  const std::vector<double> tln{0.0, kLn2, 2.0 * kLn2};
  const StrategyPath bp = worst_case_strategy(bad, tln);
  CHECK(bp.weights[2] == doctest::Approx(0.125).epsilon(1e-12));
}

TEST_CASE("nonnegativity checker") {
  const ExpSumKernel bad = bad_kernel();
  const NonnegReport falsified = check_preserves_nonnegativity(bad, 2, 1000, 1e-12, 41);
  CHECK(falsified.verdict == NonnegVerdict::kFalsified);
  REQUIRE(falsified.counterexample.has_value());
  CHECK(falsified.counterexample->depth == 2);
  CHECK(falsified.counterexample->value < 0.0);
  CHECK(falsified.counterexample->gaps.size() == 2);
  // the reported tuple really is a violation
  CHECK(g_l_fast(bad, falsified.counterexample->gaps) ==
        doctest::Approx(falsified.counterexample->value).epsilon(1e-12));

  const MultiExpKernel preset = paper_n5_kernel();
  const NonnegReport clean = check_preserves_nonnegativity(preset, 4, 1500, 1e-12, 42);
  CHECK(clean.verdict == NonnegVerdict::kNoViolationFound);
  CHECK(clean.min_gl >= -1e-12);

  // single exponential: G_l vanishes identically for l >= 2
  const MultiExpKernel single({0.7}, {1.3});
  const NonnegReport degen = check_preserves_nonnegativity(single, 4, 500, 1e-12, 43);
  CHECK(degen.verdict == NonnegVerdict::kNoViolationFound);
  for (const auto& d : degen.per_depth) {
    if (d.depth < 2) continue;
    CHECK(std::fabs(d.min_gl) <= 1e-14);
    CHECK(std::fabs(d.max_gl) <= 1e-14);
  }
}

TEST_CASE("discrete resolvent") {
  // single exponential, n = 1: walk the recursion by hand
  const double rho = 0.8;
  const MultiExpKernel single({1.0}, {rho});
  const DiscreteResolvent r = discrete_resolvent(single, 1, 2);
  const double g1 = std::exp(-rho), g2 = std::exp(-2.0 * rho);
  CHECK(r.values[0] == 1.0);
  CHECK(r.values[1] == doctest::Approx(1.0 - g1).epsilon(1e-14));
  CHECK(r.values[2] == doctest::Approx(1.0 - g2 - (1.0 - g1) * g1).epsilon(1e-14));
  CHECK(r.values[2] <= r.values[1]);

  // construction identity and monotonicity for the preset
  const MultiExpKernel preset = paper_n5_kernel();
  const int n = 20, K = 300;
  const DiscreteResolvent pr = discrete_resolvent(preset, n, K);
  CHECK(pr.normalization == doctest::Approx(preset.at_zero()));
  for (int k = 0; k <= K; ++k) {
    double s = 0.0;
    for (int i = 0; i <= k; ++i)
      s += pr.values[i] * preset(static_cast<double>(k - i) / n) / pr.normalization;
    CHECK(std::fabs(s - 1.0) <= 1e-10);
    CHECK(pr.values[k] >= -1e-12);
    if (k > 0) CHECK(pr.values[k] <= pr.values[k - 1] + 1e-12);
  }

  // increments are the equal-gap G_l values
  std::vector<double> gaps;
  for (int k = 0; k + 1 <= 20; ++k) {
    gaps.push_back(1.0 / n);
    const double gl = g_l_fast(preset, gaps);
    CHECK(std::fabs((pr.values[k] - pr.values[k + 1]) - gl) <= 1e-10);
  }

  // random multi-exponential kernels stay nonnegative and nonincreasing
  CounterRng rng(17, 0);
  for (int trial = 0; trial < 10; ++trial) {
    const MultiExpKernel k = random_kernel(rng);
    const DiscreteResolvent rr = discrete_resolvent(k, 10, 120);
    for (std::size_t i = 0; i < rr.values.size(); ++i) {
      CHECK(rr.values[i] >= -1e-12);
      if (i > 0) CHECK(rr.values[i] <= rr.values[i - 1] + 1e-12);
    }
  }
}
