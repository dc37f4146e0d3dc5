#include <doctest.h>

#include <cmath>

#include "volterra/lift.hpp"
#include "volterra/rng.hpp"

using namespace volterra;

namespace {
LiftState random_state(const MultiExpKernel& k, double x0, CounterRng& rng) {
  LiftState s = initial_lift_state(k, x0);
  for (double& f : s.factors) f = -0.5 + rng.uniform01();
  return s;
}
}  // namespace

TEST_CASE("psi1 flow") {
  const MultiExpKernel k({0.4, 0.6}, {0.5, 2.0});
  CounterRng rng(3, 0);
  const LiftState s = random_state(k, 0.02, rng);

  const LiftState id0 = psi1(k, s, 0.0);
  CHECK(id0.factors[0] == s.factors[0]);
  CHECK(id0.factors[1] == s.factors[1]);

  // a zero rate makes psi1 the identity for any dt
  const MultiExpKernel zero_rate({1.0}, {0.0});
  LiftState z = initial_lift_state(zero_rate, 0.0);
  z.factors[0] = 0.7;
  const LiftState id1 = psi1(zero_rate, z, 3.7);
  CHECK(id1.factors[0] == 0.7);

  const MultiExpKernel single({1.0}, {2.0});
  LiftState one = initial_lift_state(single, 0.0);
  one.factors[0] = 0.5;
  const LiftState moved = psi1(single, one, 0.3);
  CHECK(moved.factors[0] == doctest::Approx(0.5 * std::exp(-0.6)).epsilon(1e-15));
  CHECK(moved.x0 == one.x0);
}

TEST_CASE("psi1 semigroup") {
  const MultiExpKernel k = paper_n5_kernel();
  CounterRng rng(3, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const LiftState s = random_state(k, 0.02, rng);
    const double t1 = rng.uniform01(), t2 = rng.uniform01();
    const LiftState two = psi1(k, psi1(k, s, t1), t2);
    const LiftState one = psi1(k, s, t1 + t2);
    for (std::size_t i = 0; i < k.size(); ++i)
      CHECK(two.factors[i] ==
            doctest::Approx(one.factors[i]).epsilon(1e-14));
  }
}

TEST_CASE("a_map examples") {
  const MultiExpKernel single({1.0}, {0.3});
  LiftState s = initial_lift_state(single, 0.02);
  s.factors[0] = 0.03;
  CHECK(s.spot(single) == doctest::Approx(0.05).epsilon(1e-15));

  const LiftState same = a_map(single, s, s.spot(single));
  CHECK(same.factors[0] == doctest::Approx(0.03).epsilon(1e-15));

  const LiftState moved = a_map(single, s, 0.07);
  CHECK(moved.factors[0] == doctest::Approx(0.05).epsilon(1e-14));
  CHECK(moved.spot(single) == doctest::Approx(0.07).epsilon(1e-14));
}

TEST_CASE("a_map spot exactness and affinity") {
  const MultiExpKernel k = paper_n5_kernel();
  CounterRng rng(3, 2);
  for (int trial = 0; trial < 50; ++trial) {
    const LiftState s = random_state(k, 0.02, rng);
    const double y = -1.0 + 3.0 * rng.uniform01();
    const LiftState mapped = a_map(k, s, y);
    CHECK(std::fabs(mapped.spot(k) - y) <= 1e-14 * (1.0 + std::fabs(y)));

    const double y1 = rng.uniform01(), y2 = 2.0 * rng.uniform01();
    const double alpha = rng.uniform01();
    const LiftState blend = a_map(k, s, alpha * y1 + (1.0 - alpha) * y2);
    const LiftState img1 = a_map(k, s, y1);
    const LiftState img2 = a_map(k, s, y2);
    for (std::size_t i = 0; i < k.size(); ++i) {
      const double expect = alpha * img1.factors[i] + (1.0 - alpha) * img2.factors[i];
      CHECK(blend.factors[i] == doctest::Approx(expect).epsilon(1e-14));
    }
  }
}

TEST_CASE("lift state validates dimensions") {
  const MultiExpKernel k = paper_n5_kernel();
  LiftState s;
  s.factors = {1.0, 2.0};
  CHECK_THROWS_AS(s.spot(k), std::invalid_argument);
  CHECK_THROWS_AS(psi1(k, s, 0.1), std::invalid_argument);
  LiftState ok = initial_lift_state(k, 0.0);
  CHECK_THROWS_AS(psi1(k, ok, -0.1), std::invalid_argument);
}
