#pragma once

// Test-side oracles, independent of the library implementation paths they
// check.

#include <cmath>
#include <utility>
#include <vector>

#include "volterra/kernels.hpp"
#include "volterra/schemes.hpp"

namespace oracles {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Black-Scholes call with total variance tv (r = 0).
inline double bs_call(double s0, double strike, double tv) {
  if (tv <= 0.0) return std::max(s0 - strike, 0.0);
  const double sd = std::sqrt(tv);
  const double d1 = (std::log(s0 / strike) + 0.5 * tv) / sd;
  return s0 * normal_cdf(d1) - strike * normal_cdf(d1 - sd);
}

// Deterministic multifactor CIR mean path (sigma = 0 limit): solves the lifted
// linear ODE f_i' = -rho_i f_i + (a - k m), m = x0 + sum gamma_i f_i by RK4.
// Returns (m(T), integral of m over [0, T]).
inline std::pair<double, double> deterministic_cir_mean(const volterra::MultiExpKernel& kernel,
                                                        const volterra::CirParams& p, double T,
                                                        int steps = 8192) {
  const std::size_t n = kernel.size();
  std::vector<double> f(n, 0.0);
  double ivar = 0.0;
  const double h = T / steps;

  auto spot = [&](const std::vector<double>& state) {
    double m = p.x0;
    for (std::size_t i = 0; i < n; ++i) m += kernel.gammas()[i] * state[i];
    return m;
  };
  auto deriv = [&](const std::vector<double>& state, std::vector<double>& d) {
    const double drift = p.a - p.k * spot(state);
    for (std::size_t i = 0; i < n; ++i) d[i] = -kernel.rhos()[i] * state[i] + drift;
  };

  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
  for (int s = 0; s < steps; ++s) {
    const double m0 = spot(f);
    deriv(f, k1);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = f[i] + 0.5 * h * k1[i];
    deriv(tmp, k2);
    const double m_half = spot(tmp);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = f[i] + 0.5 * h * k2[i];
    deriv(tmp, k3);
    const double m_half2 = spot(tmp);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = f[i] + h * k3[i];
    deriv(tmp, k4);
    const double m1 = spot(tmp);
    for (std::size_t i = 0; i < n; ++i)
      f[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    // Simpson on the spot values sampled by the stages
    ivar += h / 6.0 * (m0 + 2.0 * m_half + 2.0 * m_half2 + m1);
  }
  return {spot(f), ivar};
}

}  // namespace oracles
