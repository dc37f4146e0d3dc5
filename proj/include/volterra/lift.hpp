#pragma once

#include <stdexcept>
#include <vector>

#include "volterra/kernels.hpp"

namespace volterra {

// Factor state of the lifted SVE. The spot X = x0 + sum_i gamma_i factors[i]
// is always recomputed from the factors, never cached.
struct LiftState {
  double x0 = 0.0;
  std::vector<double> factors;

  double spot(const MultiExpKernel& kernel) const {
    if (factors.size() != kernel.size())
      throw std::invalid_argument("LiftState: factor count does not match kernel dimension");
    double s = x0;
    const auto& g = kernel.gammas();
    for (std::size_t i = 0; i < factors.size(); ++i) s += g[i] * factors[i];
    return s;
  }
};

inline LiftState initial_lift_state(const MultiExpKernel& kernel, double x0) {
  return LiftState{x0, std::vector<double>(kernel.size(), 0.0)};
}

// Exact flow of the pure mean-reversion part: factors[i] *= e^{-rho_i dt}.
inline void psi1_inplace(const MultiExpKernel& kernel, LiftState& state, double dt) {
  if (dt < 0.0) throw std::invalid_argument("psi1: dt must be >= 0");
  if (state.factors.size() != kernel.size())
    throw std::invalid_argument("psi1: factor count does not match kernel dimension");
  const auto& rhos = kernel.rhos();
  for (std::size_t i = 0; i < state.factors.size(); ++i)
    state.factors[i] *= std::exp(-rhos[i] * dt);
}

inline LiftState psi1(const MultiExpKernel& kernel, LiftState state, double dt) {
  psi1_inplace(kernel, state, dt);
  return state;
}

// Shift every factor by (y - X)/G(0); since sum gamma_i = G(0) the spot of the
// result equals y exactly (up to one rounding of the shift).
inline void a_map_inplace(const MultiExpKernel& kernel, LiftState& state, double y) {
  const double shift = (y - state.spot(kernel)) / kernel.at_zero();
  for (double& f : state.factors) f += shift;
}

inline LiftState a_map(const MultiExpKernel& kernel, LiftState state, double y) {
  a_map_inplace(kernel, state, y);
  return state;
}

}  // namespace volterra
