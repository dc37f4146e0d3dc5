#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "volterra/kernels.hpp"
#include "volterra/lift.hpp"

namespace volterra {

// ---- model parameters ------------------------------------------------------

struct CirParams {
  double x0 = 0.0;     // initial value, >= 0
  double a = 0.0;      // drift level, >= 0
  double k = 0.0;      // mean reversion speed
  double sigma = 0.0;  // vol of vol, >= 0

  void validate() const {
    if (!(x0 >= 0.0)) throw std::invalid_argument("CirParams: x0 must be >= 0");
    if (!(a >= 0.0)) throw std::invalid_argument("CirParams: a must be >= 0");
    if (!(sigma >= 0.0)) throw std::invalid_argument("CirParams: sigma must be >= 0");
    if (!std::isfinite(k)) throw std::invalid_argument("CirParams: k must be finite");
  }
};

struct HestonParams {
  CirParams cir;
  double r = 0.0;       // rate
  double varrho = 0.0;  // spot/vol correlation, in [-1, 1]
  double y0 = 0.0;      // initial log price

  void validate() const {
    cir.validate();
    if (!(std::fabs(varrho) <= 1.0)) throw std::invalid_argument("HestonParams: |varrho| <= 1");
    if (cir.sigma == 0.0 && varrho != 0.0)
      throw std::invalid_argument("HestonParams: sigma = 0 requires varrho = 0");
    if (!std::isfinite(r) || !std::isfinite(y0))
      throw std::invalid_argument("HestonParams: r, y0 must be finite");
  }
};

struct GbmParams {
  double x0 = 1.0;       // > 0
  double mu = 0.0;       // drift
  double sigma_g = 0.0;  // diffusion coefficient, >= 0

  void validate() const {
    if (!(x0 > 0.0)) throw std::invalid_argument("GbmParams: x0 must be > 0");
    if (!(sigma_g >= 0.0)) throw std::invalid_argument("GbmParams: sigma_g must be >= 0");
    if (!std::isfinite(mu)) throw std::invalid_argument("GbmParams: mu must be finite");
  }
};

// Exactly one of each is consumed per Heston step, whatever branch runs.
struct StepNoise {
  double u = 0.0;  // uniform on [0, 1]
  double z = 0.0;  // standard normal
  int b = 0;       // fair coin in {0, 1}
};

// ---- CIR one-step building blocks -------------------------------------------

// zeta_k(t) = (1 - e^{-kt})/k, zeta_0(t) = t. expm1 keeps precision for small
// k t; below 1e-8 a short series avoids the division entirely.
inline double zeta(double k, double t) {
  if (t < 0.0) throw std::invalid_argument("zeta: t must be >= 0");
  const double kt = k * t;
  if (std::fabs(kt) < 1e-8) return t * (1.0 - 0.5 * kt + kt * kt / 6.0);
  return -std::expm1(-kt) / k;
}

// Exact first two moments of the CIR process with coefficients
// (abar, kbar, sigbar) started at x, over a horizon t.
inline std::pair<double, double> cir_moments(double abar, double kbar, double sigbar,
                                             double x, double t) {
  if (x < 0.0) throw std::invalid_argument("cir_moments: x must be >= 0");
  const double zt = zeta(kbar, t);
  const double decayed = x * std::exp(-kbar * t);
  const double u1 = decayed + abar * zt;
  const double u2 = u1 * u1 + sigbar * sigbar * zt * (0.5 * abar * zt + decayed);
  return {u1, u2};
}

// Switching threshold between the squared-Gaussian-surrogate branch and the
// two-point branch. Zero whenever sigbar^2 <= 4 abar; O(t) as t -> 0.
inline double threshold_k2(double abar, double kbar, double sigbar, double t) {
  if (t < 0.0) throw std::invalid_argument("threshold_k2: t must be >= 0");
  if (sigbar * sigbar <= 4.0 * abar) return 0.0;
  const double c = (0.25 * sigbar * sigbar - abar) * zeta(kbar, 0.5 * t);
  const double e = std::exp(0.5 * kbar * t);
  const double root = std::sqrt(e * c) + 0.5 * sigbar * std::sqrt(3.0 * t);
  return e * (c + root * root);
}

// Coefficients of the one-step CIR map for a fixed step size; everything that
// depends only on (abar, kbar, sigbar, dt) is computed once.
struct CirStepCoeffs {
  double abar = 0.0, kbar = 0.0, sigbar = 0.0, dt = 0.0;
  double exp_kdt = 1.0;       // e^{-kbar dt}
  double exp_kdt_half = 1.0;  // e^{-kbar dt/2}
  double zeta_dt = 0.0;       // zeta_kbar(dt)
  double zeta_half = 0.0;     // zeta_kbar(dt/2)
  double drift_resid = 0.0;   // (abar - sigbar^2/4) zeta_half
  double sig_w = 0.0;         // (sigbar/2) sqrt(dt), scale of the 3-point variable
  double threshold = 0.0;     // K2(dt)

  static CirStepCoeffs make(double abar, double kbar, double sigbar, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("CirStepCoeffs: dt must be > 0");
    if (!(sigbar >= 0.0) || !(abar >= 0.0))
      throw std::invalid_argument("CirStepCoeffs: abar, sigbar must be >= 0");
    CirStepCoeffs c;
    c.abar = abar;
    c.kbar = kbar;
    c.sigbar = sigbar;
    c.dt = dt;
    c.exp_kdt = std::exp(-kbar * dt);
    c.exp_kdt_half = std::exp(-0.5 * kbar * dt);
    c.zeta_dt = zeta(kbar, dt);
    c.zeta_half = zeta(kbar, 0.5 * dt);
    c.drift_resid = (abar - 0.25 * sigbar * sigbar) * c.zeta_half;
    c.sig_w = 0.5 * sigbar * std::sqrt(dt);
    c.threshold = threshold_k2(abar, kbar, sigbar, dt);
    return c;
  }

  std::pair<double, double> moments(double x) const {
    const double decayed = x * exp_kdt;
    const double u1 = decayed + abar * zeta_dt;
    const double u2 = u1 * u1 + sigbar * sigbar * zeta_dt * (0.5 * abar * zeta_dt + decayed);
    return {u1, u2};
  }

  // One step of the nonnegativity-preserving CIR map driven by a single
  // uniform draw. Both branches return values >= 0.
  double inner(double x, double u) const {
    static const double kSqrt3 = std::sqrt(3.0);
    if (x >= threshold) {
      double rad = drift_resid + exp_kdt_half * x;
      if (rad < 0.0) rad = 0.0;  // fp guard, the branch condition makes rad >= 0
      const double w = (u > 5.0 / 6.0) ? kSqrt3 : ((u <= 1.0 / 6.0) ? -kSqrt3 : 0.0);
      const double base = std::sqrt(rad) + sig_w * w;
      const double v = exp_kdt_half * base * base + drift_resid;
      return v < 0.0 ? 0.0 : v;  // exact zero boundary can round below 0
    }
    const auto [u1, u2] = moments(x);
    if (!(u2 > 0.0) || !(u1 > 0.0)) return 0.0;  // degenerate two-point law
    double ratio = u1 * u1 / u2;
    if (ratio > 1.0) ratio = 1.0;  // fp guard, u2 >= u1^2 always
    const double s = std::sqrt(1.0 - ratio);
    // pi = (1 - s)/2 and u1/(2 pi) = u2 (1 + s)/u1, both free of cancellation
    const double pi = 0.5 * ratio / (1.0 + s);
    return (u <= pi) ? u2 * (1.0 + s) / u1 : u1 / (1.0 + s);
  }
};

inline double cir_inner_step(double abar, double kbar, double sigbar, double x, double t,
                             double u) {
  if (x < 0.0) throw std::invalid_argument("cir_inner_step: x must be >= 0");
  return CirStepCoeffs::make(abar, kbar, sigbar, t).inner(x, u);
}

// ---- second-order multifactor steps -----------------------------------------

namespace detail {
// Spot may dip a hair below zero from rounding; anything worse is an upstream
// bug and gets a domain_error.
inline constexpr double kSpotSlack = 1e-12;

inline double checked_spot(double x) {
  if (x < -kSpotSlack) throw std::domain_error("multifactor step: negative spot state");
  return x < 0.0 ? 0.0 : x;
}
}  // namespace detail

struct StepTraceEntry {
  double mid_spot = 0.0;   // spot after the leading half decay
  double inner_out = 0.0;  // output of the CIR one-step map
};

// psi1(dt/2) o [A_x o inner CIR step with (abar,kbar,sigbar) = G(0)(a,k,sigma)]
// o psi1(dt/2), with the half-step decays precomputed.
class SecondOrderCirPlan {
 public:
  SecondOrderCirPlan(const MultiExpKernel& kernel, const CirParams& params, double dt)
      : kernel_(kernel), dt_(dt) {
    params.validate();
    if (!(dt > 0.0)) throw std::invalid_argument("SecondOrderCirPlan: dt must be > 0");
    const double g0 = kernel.at_zero();
    coeffs_ = CirStepCoeffs::make(g0 * params.a, g0 * params.k, g0 * params.sigma, dt);
    decay_half_.resize(kernel.size());
    for (std::size_t i = 0; i < kernel.size(); ++i)
      decay_half_[i] = std::exp(-kernel.rhos()[i] * (dt / 2.0));
  }

  const MultiExpKernel& kernel() const { return kernel_; }
  const CirStepCoeffs& coeffs() const { return coeffs_; }
  double dt() const { return dt_; }

  StepTraceEntry step(LiftState& state, double u) const {
    half_decay(state);
    const double x = detail::checked_spot(state.spot(kernel_));
    const double xp = coeffs_.inner(x, u);
    shift_to(state, x, xp);
    half_decay(state);
    return StepTraceEntry{x, xp};
  }

  void half_decay(LiftState& state) const {
    for (std::size_t i = 0; i < decay_half_.size(); ++i) state.factors[i] *= decay_half_[i];
  }

  void shift_to(LiftState& state, double spot_now, double y) const {
    const double shift = (y - spot_now) / kernel_.at_zero();
    for (double& f : state.factors) f += shift;
  }

 private:
  MultiExpKernel kernel_;
  CirStepCoeffs coeffs_;
  std::vector<double> decay_half_;
  double dt_ = 0.0;
};

class SecondOrderHestonPlan {
 public:
  SecondOrderHestonPlan(const MultiExpKernel& kernel, const HestonParams& params, double dt)
      : cir_(kernel, params.cir, dt) {
    params.validate();
    const double sig = params.cir.sigma;
    if (params.varrho == 0.0) {
      r_drift_ = params.r * dt;
      trap_coef_ = -0.25 * dt;
      corr_over_sigbar_ = 0.0;
    } else {
      r_drift_ = (params.r - params.varrho * params.cir.a / sig) * dt;
      trap_coef_ = (params.varrho * params.cir.k / sig - 0.5) * 0.5 * dt;
      corr_over_sigbar_ = params.varrho / (kernel.at_zero() * sig);
    }
    sqrt_dt_orth_ = std::sqrt(dt * (1.0 - params.varrho * params.varrho));
  }

  const SecondOrderCirPlan& cir() const { return cir_; }

  StepTraceEntry step(LiftState& state, double& y, const StepNoise& noise) const {
    cir_.half_decay(state);
    const double x = detail::checked_spot(state.spot(cir_.kernel()));
    const double xp = cir_.coeffs().inner(x, noise.u);
    const double var_for_diff = noise.b ? xp : x;
    y += r_drift_ + trap_coef_ * (x + xp) + corr_over_sigbar_ * (xp - x) +
         std::sqrt(var_for_diff) * sqrt_dt_orth_ * noise.z;
    cir_.shift_to(state, x, xp);
    cir_.half_decay(state);
    return StepTraceEntry{x, xp};
  }

 private:
  SecondOrderCirPlan cir_;
  double r_drift_ = 0.0;
  double trap_coef_ = 0.0;
  double corr_over_sigbar_ = 0.0;
  double sqrt_dt_orth_ = 0.0;
};

// Single-step conveniences mirroring the composed maps.
inline LiftState multifactor_cir_step(const MultiExpKernel& kernel, const CirParams& params,
                                      LiftState state, double t, double u) {
  SecondOrderCirPlan plan(kernel, params, t);
  plan.step(state, u);
  return state;
}

inline std::pair<LiftState, double> heston_step(const MultiExpKernel& kernel,
                                                const HestonParams& params, LiftState state,
                                                double y, double t, const StepNoise& noise) {
  SecondOrderHestonPlan plan(kernel, params, t);
  plan.step(state, y, noise);
  return {std::move(state), y};
}

// ---- path simulation, second order ------------------------------------------

struct CirPathTrace {
  std::vector<double> node_spots;  // spot after each full step
  std::vector<double> mid_spots;   // spot entering the inner map
  std::vector<double> inner_outs;  // inner map outputs
};

struct HestonTerminal {
  double spot = 0.0;
  double y = 0.0;
};

template <class Rng>
double second_order_cir_terminal(const MultiExpKernel& kernel, const CirParams& params,
                                 double horizon, int steps, Rng& rng,
                                 CirPathTrace* trace = nullptr) {
  if (steps < 1) throw std::invalid_argument("second_order_cir_terminal: steps >= 1");
  SecondOrderCirPlan plan(kernel, params, horizon / steps);
  LiftState state = initial_lift_state(kernel, params.x0);
  for (int l = 0; l < steps; ++l) {
    const StepTraceEntry e = plan.step(state, rng.uniform01());
    if (trace) {
      trace->mid_spots.push_back(e.mid_spot);
      trace->inner_outs.push_back(e.inner_out);
      trace->node_spots.push_back(state.spot(kernel));
    }
  }
  return state.spot(kernel);
}

template <class Rng>
HestonTerminal second_order_heston_terminal(const MultiExpKernel& kernel,
                                            const HestonParams& params, double horizon,
                                            int steps, Rng& rng, CirPathTrace* trace = nullptr) {
  if (steps < 1) throw std::invalid_argument("second_order_heston_terminal: steps >= 1");
  SecondOrderHestonPlan plan(kernel, params, horizon / steps);
  LiftState state = initial_lift_state(kernel, params.cir.x0);
  double y = params.y0;
  for (int l = 0; l < steps; ++l) {
    StepNoise noise;
    noise.u = rng.uniform01();
    noise.z = rng.normal();
    noise.b = rng.coin();
    const StepTraceEntry e = plan.step(state, y, noise);
    if (trace) {
      trace->mid_spots.push_back(e.mid_spot);
      trace->inner_outs.push_back(e.inner_out);
      trace->node_spots.push_back(state.spot(kernel));
    }
  }
  return HestonTerminal{state.spot(kernel), y};
}

// ---- Euler schemes -----------------------------------------------------------

namespace detail {
inline double pos(double x) { return x > 0.0 ? x : 0.0; }
}

// Full-truncation Euler on the Volterra equation itself: the spot at step l is
// rebuilt as x0 + sum of kernel-weighted past increments. O(N^2) for a generic
// kernel; the kernel values at the N grid lags are tabulated once.
template <ConvolutionKernel K>
double euler_volterra_cir_terminal(const K& kernel, const CirParams& params, double horizon,
                                   int steps, std::span<const double> dw,
                                   std::vector<double>* spots = nullptr) {
  params.validate();
  if (steps < 1 || dw.size() < static_cast<std::size_t>(steps))
    throw std::invalid_argument("euler_volterra: need one increment per step");
  const double h = horizon / steps;
  std::vector<double> g(static_cast<std::size_t>(steps) + 1);
  for (int j = 1; j <= steps; ++j) g[j] = kernel(j * h);

  std::vector<double> jump(static_cast<std::size_t>(steps));
  double x = params.x0;
  if (spots) {
    spots->clear();
    spots->push_back(x);
  }
  for (int l = 1; l <= steps; ++l) {
    const double xp = detail::pos(x);
    jump[l - 1] = (params.a - params.k * xp) * h + params.sigma * std::sqrt(xp) * dw[l - 1];
    double s = params.x0;
    for (int j = 0; j < l; ++j) s += g[l - j] * jump[j];
    x = s;
    if (spots) spots->push_back(x);
  }
  return x;
}

template <ConvolutionKernel K>
HestonTerminal euler_volterra_heston_terminal(const K& kernel, const HestonParams& params,
                                              double horizon, int steps,
                                              std::span<const double> dw,
                                              std::span<const double> dw_orth,
                                              std::vector<double>* spots = nullptr) {
  params.validate();
  if (steps < 1 || dw.size() < static_cast<std::size_t>(steps) ||
      dw_orth.size() < static_cast<std::size_t>(steps))
    throw std::invalid_argument("euler_volterra: need one increment pair per step");
  const double h = horizon / steps;
  const double orth = std::sqrt(1.0 - params.varrho * params.varrho);
  std::vector<double> g(static_cast<std::size_t>(steps) + 1);
  for (int j = 1; j <= steps; ++j) g[j] = kernel(j * h);

  std::vector<double> jump(static_cast<std::size_t>(steps));
  double x = params.cir.x0;
  double y = params.y0;
  if (spots) {
    spots->clear();
    spots->push_back(x);
  }
  for (int l = 1; l <= steps; ++l) {
    const double xp = detail::pos(x);
    const double vol = std::sqrt(xp);
    y += (params.r - 0.5 * xp) * h + vol * (params.varrho * dw[l - 1] + orth * dw_orth[l - 1]);
    jump[l - 1] =
        (params.cir.a - params.cir.k * xp) * h + params.cir.sigma * vol * dw[l - 1];
    double s = params.cir.x0;
    for (int j = 0; j < l; ++j) s += g[l - j] * jump[j];
    x = s;
    if (spots) spots->push_back(x);
  }
  return HestonTerminal{x, y};
}

// Same scheme through the lift: each factor absorbs the common increment and
// decays exactly over the step, which reproduces the Volterra Euler path at
// O(N n) cost.
inline double euler_lifted_cir_terminal(const MultiExpKernel& kernel, const CirParams& params,
                                        double horizon, int steps, std::span<const double> dw,
                                        std::vector<double>* spots = nullptr) {
  params.validate();
  if (steps < 1 || dw.size() < static_cast<std::size_t>(steps))
    throw std::invalid_argument("euler_lifted: need one increment per step");
  const double h = horizon / steps;
  const std::size_t n = kernel.size();
  std::vector<double> decay(n);
  for (std::size_t i = 0; i < n; ++i) decay[i] = std::exp(-kernel.rhos()[i] * h);

  std::vector<double> f(n, 0.0);
  double x = params.x0;
  if (spots) {
    spots->clear();
    spots->push_back(x);
  }
  for (int l = 1; l <= steps; ++l) {
    const double xp = detail::pos(x);
    const double jump = (params.a - params.k * xp) * h + params.sigma * std::sqrt(xp) * dw[l - 1];
    double s = params.x0;
    for (std::size_t i = 0; i < n; ++i) {
      f[i] = decay[i] * (f[i] + jump);
      s += kernel.gammas()[i] * f[i];
    }
    x = s;
    if (spots) spots->push_back(x);
  }
  return x;
}

inline HestonTerminal euler_lifted_heston_terminal(const MultiExpKernel& kernel,
                                                   const HestonParams& params, double horizon,
                                                   int steps, std::span<const double> dw,
                                                   std::span<const double> dw_orth,
                                                   std::vector<double>* spots = nullptr) {
  params.validate();
  if (steps < 1 || dw.size() < static_cast<std::size_t>(steps) ||
      dw_orth.size() < static_cast<std::size_t>(steps))
    throw std::invalid_argument("euler_lifted: need one increment pair per step");
  const double h = horizon / steps;
  const double orth = std::sqrt(1.0 - params.varrho * params.varrho);
  const std::size_t n = kernel.size();
  std::vector<double> decay(n);
  for (std::size_t i = 0; i < n; ++i) decay[i] = std::exp(-kernel.rhos()[i] * h);

  std::vector<double> f(n, 0.0);
  double x = params.cir.x0;
  double y = params.y0;
  if (spots) {
    spots->clear();
    spots->push_back(x);
  }
  for (int l = 1; l <= steps; ++l) {
    const double xp = detail::pos(x);
    const double vol = std::sqrt(xp);
    y += (params.r - 0.5 * xp) * h + vol * (params.varrho * dw[l - 1] + orth * dw_orth[l - 1]);
    const double jump =
        (params.cir.a - params.cir.k * xp) * h + params.cir.sigma * vol * dw[l - 1];
    double s = params.cir.x0;
    for (std::size_t i = 0; i < n; ++i) {
      f[i] = decay[i] * (f[i] + jump);
      s += kernel.gammas()[i] * f[i];
    }
    x = s;
    if (spots) spots->push_back(x);
  }
  return HestonTerminal{x, y};
}

// ---- strong splitting scheme for Volterra GBM --------------------------------

struct GbmSplitPath {
  std::vector<double> nodes;     // X at the grid nodes, size N+1 (nodes[0] = x0)
  std::vector<double> pre_jump;  // X just before each jump time, size N
  std::vector<double> deltas;    // per-step jumps xi - X_{t_k-}, size N
};

namespace detail {

// Exact one-step GBM map with coefficients G(0) mu, G(0) sigma_g.
struct GbmExactMap {
  double drift;  // (g0 mu - g0^2 sigma_g^2 / 2) h
  double vol;    // g0 sigma_g
  GbmExactMap(double g0, const GbmParams& p, double h)
      : drift((g0 * p.mu - 0.5 * g0 * g0 * p.sigma_g * p.sigma_g) * h), vol(g0 * p.sigma_g) {}
  double operator()(double s, double dw) const { return s * std::exp(drift + vol * dw); }
};

}  // namespace detail

// Splitting scheme: alternate the exact GBM flow over one step with the exact
// kernel decay of the accumulated jumps. Factor representation, O(N n).
inline GbmSplitPath splitting_gbm_path(const MultiExpKernel& kernel, const GbmParams& params,
                                       double horizon, int steps, std::span<const double> dw) {
  params.validate();
  if (steps < 1 || dw.size() < static_cast<std::size_t>(steps))
    throw std::invalid_argument("splitting_gbm_path: need one increment per step");
  const double h = horizon / steps;
  const double g0 = kernel.at_zero();
  const detail::GbmExactMap gbm(g0, params, h);
  const std::size_t n = kernel.size();
  std::vector<double> decay(n);
  for (std::size_t i = 0; i < n; ++i) decay[i] = std::exp(-kernel.rhos()[i] * h);

  GbmSplitPath out;
  out.nodes.resize(static_cast<std::size_t>(steps) + 1);
  out.pre_jump.resize(static_cast<std::size_t>(steps));
  out.deltas.resize(static_cast<std::size_t>(steps));
  out.nodes[0] = params.x0;

  std::vector<double> f(n, 0.0);
  double pre = params.x0;  // X_{t_{k+1}-}, the start value of the k-th GBM leg
  for (int k = 0; k < steps; ++k) {
    out.pre_jump[k] = pre;
    const double xi = gbm(pre, dw[k]);
    out.nodes[k + 1] = xi;
    const double jump = xi - pre;
    out.deltas[k] = jump;
    double s = params.x0;
    for (std::size_t i = 0; i < n; ++i) {
      f[i] = decay[i] * (f[i] + jump / g0);
      s += kernel.gammas()[i] * f[i];
    }
    pre = s;
  }
  return out;
}

// Generic-kernel fallback reconstructing every pre-jump value by the O(N^2)
// convolution of stored jumps. Also the oracle for the factor fast path.
template <ConvolutionKernel K>
GbmSplitPath splitting_gbm_path_conv(const K& kernel, const GbmParams& params, double horizon,
                                     int steps, std::span<const double> dw) {
  params.validate();
  if (steps < 1 || dw.size() < static_cast<std::size_t>(steps))
    throw std::invalid_argument("splitting_gbm_path_conv: need one increment per step");
  const double h = horizon / steps;
  const double g0 = detail::kernel_g0(kernel);
  const detail::GbmExactMap gbm(g0, params, h);
  std::vector<double> g(static_cast<std::size_t>(steps) + 1);
  for (int j = 1; j <= steps; ++j) g[j] = kernel(j * h);

  GbmSplitPath out;
  out.nodes.resize(static_cast<std::size_t>(steps) + 1);
  out.pre_jump.resize(static_cast<std::size_t>(steps));
  out.deltas.resize(static_cast<std::size_t>(steps));
  out.nodes[0] = params.x0;

  double pre = params.x0;
  for (int k = 0; k < steps; ++k) {
    out.pre_jump[k] = pre;
    const double xi = gbm(pre, dw[k]);
    out.nodes[k + 1] = xi;
    out.deltas[k] = xi - pre;
    double s = params.x0;
    for (int j = 0; j <= k; ++j) s += (out.deltas[j] / g0) * g[k + 1 - j];
    pre = s;
  }
  return out;
}

// The splitting path between nodes: the jump convolution
// x0 + sum_{t_j <= t} delta_j G(t - t_j) / G(0).
template <ConvolutionKernel K>
double splitting_gbm_value_at(const K& kernel, const GbmParams& params, double horizon,
                              int steps, const GbmSplitPath& path, double t) {
  if (t < 0.0 || t > horizon) throw std::invalid_argument("splitting_gbm_value_at: t in [0, T]");
  const double h = horizon / steps;
  const double g0 = detail::kernel_g0(kernel);
  double s = params.x0;
  for (int j = 1; j <= steps; ++j) {
    const double tj = j * h;
    if (tj > t) break;
    s += path.deltas[j - 1] / g0 * kernel(t - tj);
  }
  return s;
}

// Two splitting trajectories on the same increments, drift mu1 <= mu2; counts
// grid nodes where the order is violated beyond 1e-12.
struct CoupledGbmResult {
  GbmSplitPath low;
  GbmSplitPath high;
  int violations = 0;
};

inline CoupledGbmResult comparison_coupled_gbm(const MultiExpKernel& kernel,
                                               const GbmParams& low, const GbmParams& high,
                                               double horizon, int steps,
                                               std::span<const double> dw) {
  if (!(low.mu <= high.mu))
    throw std::invalid_argument("comparison_coupled_gbm: need mu1 <= mu2");
  if (low.x0 != high.x0 || low.sigma_g != high.sigma_g)
    throw std::invalid_argument("comparison_coupled_gbm: x0 and sigma_g must be shared");
  CoupledGbmResult res;
  res.low = splitting_gbm_path(kernel, low, horizon, steps, dw);
  res.high = splitting_gbm_path(kernel, high, horizon, steps, dw);
  for (std::size_t i = 0; i < res.low.nodes.size(); ++i)
    if (res.low.nodes[i] > res.high.nodes[i] + 1e-12) ++res.violations;
  return res;
}

}  // namespace volterra
