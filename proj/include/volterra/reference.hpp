#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "volterra/kernels.hpp"
#include "volterra/schemes.hpp"

namespace volterra {

struct OdeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IntegralError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// State of the lifted affine transform ODE: phi is the constant term of the
// log transform, psis the factor loadings (psis[i] = w gamma_i at time zero
// for a spot-transform argument w).
struct RiccatiState {
  std::complex<double> phi{0.0, 0.0};
  std::vector<std::complex<double>> psis;
};

namespace detail {

using CVec = std::vector<std::complex<double>>;

// Dormand-Prince 5(4) with PI-free step control on a complex state vector.
// Throws OdeError instead of returning a silently wrong value.
template <class Rhs>
CVec dopri5(Rhs&& rhs, CVec y, double t_end, double rtol, double atol) {
  const int dim = static_cast<int>(y.size());
  CVec k1(dim), k2(dim), k3(dim), k4(dim), k5(dim), k6(dim), k7(dim), tmp(dim), y5(dim),
      y4(dim);
  double t = 0.0;
  double h = t_end * 1e-3;
  long steps = 0;
  const long max_steps = 4'000'000;

  auto stage = [&](const CVec& base, double scale_t, std::initializer_list<std::pair<const CVec*, double>> terms,
                   CVec& out_k) {
    for (int i = 0; i < dim; ++i) {
      std::complex<double> acc = base[i];
      for (const auto& [kv, c] : terms) acc += h * c * (*kv)[i];
      tmp[i] = acc;
    }
    rhs(t + scale_t * h, tmp, out_k);
  };

  while (t < t_end) {
    if (++steps > max_steps) throw OdeError("dopri5: step budget exhausted");
    if (h > t_end - t) h = t_end - t;
    if (!(h > 0.0) || t + h == t) throw OdeError("dopri5: step size underflow");

    rhs(t, y, k1);
    stage(y, 1.0 / 5.0, {{&k1, 1.0 / 5.0}}, k2);
    stage(y, 3.0 / 10.0, {{&k1, 3.0 / 40.0}, {&k2, 9.0 / 40.0}}, k3);
    stage(y, 4.0 / 5.0, {{&k1, 44.0 / 45.0}, {&k2, -56.0 / 15.0}, {&k3, 32.0 / 9.0}}, k4);
    stage(y, 8.0 / 9.0,
          {{&k1, 19372.0 / 6561.0}, {&k2, -25360.0 / 2187.0}, {&k3, 64448.0 / 6561.0},
           {&k4, -212.0 / 729.0}},
          k5);
    stage(y, 1.0,
          {{&k1, 9017.0 / 3168.0}, {&k2, -355.0 / 33.0}, {&k3, 46732.0 / 5247.0},
           {&k4, 49.0 / 176.0}, {&k5, -5103.0 / 18656.0}},
          k6);
    for (int i = 0; i < dim; ++i)
      y5[i] = y[i] + h * (35.0 / 384.0 * k1[i] + 500.0 / 1113.0 * k3[i] +
                          125.0 / 192.0 * k4[i] - 2187.0 / 6784.0 * k5[i] +
                          11.0 / 84.0 * k6[i]);
    rhs(t + h, y5, k7);
    for (int i = 0; i < dim; ++i)
      y4[i] = y[i] + h * (5179.0 / 57600.0 * k1[i] + 7571.0 / 16695.0 * k3[i] +
                          393.0 / 640.0 * k4[i] - 92097.0 / 339200.0 * k5[i] +
                          187.0 / 2100.0 * k6[i] + 1.0 / 40.0 * k7[i]);

    double err = 0.0;
    for (int i = 0; i < dim; ++i) {
      const double scale = atol + rtol * std::max(std::abs(y[i]), std::abs(y5[i]));
      err = std::max(err, std::abs(y5[i] - y4[i]) / scale);
    }
    if (err <= 1.0) {
      t += h;
      y.swap(y5);
    }
    const double factor = (err > 0.0) ? 0.9 * std::pow(err, -0.2) : 5.0;
    h *= std::clamp(factor, 0.2, 5.0);
  }
  return y;
}

}  // namespace detail

// Terminal value at horizon T of the lifted affine ODE system
//   psi_i' = -rho_i psi_i + gamma_i Q(S),  S = sum_j psi_j,
//   phi'   = r z + a S + x0 Q(S),
//   Q(S)   = (z^2 - z)/2 + (z varrho sigma - k) S + sigma^2 S^2 / 2,
// from a caller-supplied initial state. z = 0 with psis(0) = -u gamma gives the
// Laplace transform of the spot; psis(0) = 0 gives the log-price transform.
// Every solve is recomputed with a 32x tighter tolerance (asymptotically
// half-size steps); `validation_gap` reports the disagreement.
struct RiccatiSolution {
  RiccatiState state;
  double validation_gap = 0.0;
};

inline RiccatiSolution solve_riccati(const MultiExpKernel& kernel, const CirParams& cir,
                                     double varrho, double r, std::complex<double> z,
                                     const RiccatiState& init, double horizon,
                                     double rtol = 1e-10) {
  const std::size_t n = kernel.size();
  if (init.psis.size() != n)
    throw std::invalid_argument("solve_riccati: loading count must match kernel dimension");
  const auto& gam = kernel.gammas();
  const auto& rho = kernel.rhos();
  const double a = cir.a, k = cir.k, sig = cir.sigma, x0 = cir.x0;

  auto rhs = [&](double, const detail::CVec& y, detail::CVec& dy) {
    std::complex<double> s{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) s += y[i];
    const std::complex<double> q =
        0.5 * (z * z - z) + (z * varrho * sig - k) * s + 0.5 * sig * sig * s * s;
    for (std::size_t i = 0; i < n; ++i) dy[i] = -rho[i] * y[i] + gam[i] * q;
    dy[n] = r * z + a * s + x0 * q;
  };

  detail::CVec y0(n + 1);
  for (std::size_t i = 0; i < n; ++i) y0[i] = init.psis[i];
  y0[n] = init.phi;

  const double atol = 1e-14;
  detail::CVec coarse = detail::dopri5(rhs, y0, horizon, rtol, atol);
  detail::CVec fine = detail::dopri5(rhs, y0, horizon, rtol / 32.0, atol / 32.0);

  double gap = 0.0;
  for (std::size_t i = 0; i <= n; ++i)
    gap = std::max(gap, std::abs(coarse[i] - fine[i]) / (1.0 + std::abs(fine[i])));
  if (!(gap <= 1e-9))
    throw OdeError("solve_riccati: halved-step validation disagreement " + std::to_string(gap));

  RiccatiSolution sol;
  sol.state.psis.assign(fine.begin(), fine.begin() + static_cast<long>(n));
  sol.state.phi = fine[n];
  sol.validation_gap = gap;
  return sol;
}

struct RefValue {
  double value = 0.0;
  double tol_estimate = 0.0;
};

// E[exp(-u X_T)] for the multifactor CIR spot, by the lifted affine ODE.
inline RefValue laplace_xt_diag(const MultiExpKernel& kernel, const CirParams& params, double u,
                                double horizon, double rtol = 1e-10) {
  params.validate();
  if (u < 0.0) throw std::invalid_argument("laplace_xt: u must be >= 0");
  if (!(horizon > 0.0)) throw std::invalid_argument("laplace_xt: horizon must be > 0");
  RiccatiState init;
  init.psis.resize(kernel.size());
  for (std::size_t i = 0; i < kernel.size(); ++i) init.psis[i] = -u * kernel.gammas()[i];
  const RiccatiSolution sol =
      solve_riccati(kernel, params, 0.0, 0.0, std::complex<double>{0.0, 0.0}, init, horizon, rtol);
  const double value = std::exp(-u * params.x0 + sol.state.phi.real());
  return RefValue{value, sol.validation_gap * (1.0 + value)};
}

inline double laplace_xt(const MultiExpKernel& kernel, const CirParams& params, double u,
                         double horizon, double rtol = 1e-10) {
  return laplace_xt_diag(kernel, params, u, horizon, rtol).value;
}

// log E[exp(z Y_T)] for the lifted Heston log price.
inline std::complex<double> heston_log_transform(const MultiExpKernel& kernel,
                                                 const HestonParams& params,
                                                 std::complex<double> z, double horizon,
                                                 double* validation_gap = nullptr,
                                                 double rtol = 1e-10) {
  RiccatiState init;
  init.psis.assign(kernel.size(), std::complex<double>{0.0, 0.0});
  const RiccatiSolution sol =
      solve_riccati(kernel, params.cir, params.varrho, params.r, z, init, horizon, rtol);
  if (validation_gap) *validation_gap = std::max(*validation_gap, sol.validation_gap);
  return sol.state.phi + z * params.y0;
}

// European call on S = e^Y by a Fourier integral along the symmetric contour
// Im w = -1/2:
//   C = e^{-rT} [ F - sqrt(F K)/pi * Int_0^inf Re(e^{i u k} phiX(u - i/2))
//                                            / (u^2 + 1/4) du ],
// F = S0 e^{rT}, k = ln(F/K), phiX the characteristic function of ln(S_T/F).
// The contour is uniformly stable in the strike, including K -> 0.
class CallPricer {
 public:
  CallPricer(MultiExpKernel kernel, HestonParams params, double horizon, double rtol = 1e-10)
      : kernel_(std::move(kernel)), params_(params), horizon_(horizon), rtol_(rtol) {
    params_.validate();
    if (!(horizon > 0.0)) throw std::invalid_argument("CallPricer: horizon must be > 0");
  }

  RefValue price_diag(double strike) const {
    if (!(strike > 0.0)) throw std::invalid_argument("call price: strike must be > 0");
    const double forward = std::exp(params_.y0 + params_.r * horizon_);
    const double log_moneyness = std::log(forward / strike);

    double cf_gap = 0.0;
    auto integrand = [&](double u) {
      const std::complex<double> z{0.5, u};
      const std::complex<double> log_phi =
          heston_log_transform(kernel_, params_, z, horizon_, &cf_gap, rtol_) -
          z * (params_.y0 + params_.r * horizon_);
      const std::complex<double> val =
          std::exp(std::complex<double>{0.0, u * log_moneyness} + log_phi);
      return val.real() / (u * u + 0.25);
    };

    // 16-point Gauss-Legendre panels, sized against the e^{iuk} oscillation.
    const double width = std::min(1.0, 6.0 / (std::fabs(log_moneyness) + 1.0));
    const double tail_tol = 1e-10;
    double integral = 0.0;
    double u_lo = 0.0;
    int quiet_panels = 0;
    int panels = 0;
    while (true) {
      const double contrib = gauss16(integrand, u_lo, u_lo + width);
      integral += contrib;
      u_lo += width;
      ++panels;
      if (std::fabs(contrib) < tail_tol * (1.0 + std::fabs(integral)) && u_lo > 10.0) {
        if (++quiet_panels >= 4) break;
      } else {
        quiet_panels = 0;
      }
      if (panels > 20000) throw IntegralError("call price: fourier integral did not converge");
    }

    const double discount = std::exp(-params_.r * horizon_);
    const double price =
        discount * (forward - std::sqrt(forward * strike) / kPi * integral);
    const double tol =
        cf_gap * (1.0 + std::fabs(integral)) + tail_tol * std::sqrt(forward * strike);
    return RefValue{price, tol};
  }

  double price(double strike) const { return price_diag(strike).value; }

 private:
  static constexpr double kPi = 3.14159265358979323846;

  template <class F>
  static double gauss16(F&& f, double lo, double hi) {
    // nodes/weights for [-1, 1]
    static const double xs[8] = {0.0950125098376374, 0.2816035507792589, 0.4580167776572274,
                                 0.6178762444026438, 0.7554044083550030, 0.8656312023878318,
                                 0.9445750230732326, 0.9894009349916499};
    static const double ws[8] = {0.1894506104550685, 0.1826034150449236, 0.1691565193950025,
                                 0.1495959888165767, 0.1246289712555339, 0.0951585116824928,
                                 0.0622535239386479, 0.0271524594117541};
    const double c = 0.5 * (lo + hi), hw = 0.5 * (hi - lo);
    double acc = 0.0;
    for (int i = 0; i < 8; ++i) acc += ws[i] * (f(c - hw * xs[i]) + f(c + hw * xs[i]));
    return acc * hw;
  }

  MultiExpKernel kernel_;
  HestonParams params_;
  double horizon_;
  double rtol_;
};

inline RefValue call_price_diag(const MultiExpKernel& kernel, const HestonParams& params,
                                double strike, double horizon) {
  return CallPricer(kernel, params, horizon).price_diag(strike);
}

inline double call_price(const MultiExpKernel& kernel, const HestonParams& params, double strike,
                         double horizon) {
  return call_price_diag(kernel, params, strike, horizon).value;
}

// ---- multi-exponential fit of the fractional kernel ---------------------------

namespace detail {

// Householder QR least squares; A is m x p column-major, consumed in place.
// Reflector convention: v = x/norm + e_j with norm carrying the sign of x_j,
// so H = I - v v^T / v_j and H x = -norm e_j.
inline std::vector<double> qr_least_squares(std::vector<double> a, std::vector<double> b, int m,
                                            int p) {
  std::vector<double> rdiag(static_cast<std::size_t>(p));
  for (int j = 0; j < p; ++j) {
    double norm = 0.0;
    for (int i = j; i < m; ++i) norm = std::hypot(norm, a[j * m + i]);
    if (norm == 0.0) throw std::runtime_error("qr_least_squares: rank deficient column");
    if (a[j * m + j] < 0.0) norm = -norm;
    for (int i = j; i < m; ++i) a[j * m + i] /= norm;
    a[j * m + j] += 1.0;
    for (int col = j + 1; col < p; ++col) {
      double dot = 0.0;
      for (int i = j; i < m; ++i) dot += a[j * m + i] * a[col * m + i];
      const double t = dot / a[j * m + j];
      for (int i = j; i < m; ++i) a[col * m + i] -= t * a[j * m + i];
    }
    double dot = 0.0;
    for (int i = j; i < m; ++i) dot += a[j * m + i] * b[i];
    const double t = dot / a[j * m + j];
    for (int i = j; i < m; ++i) b[i] -= t * a[j * m + i];
    rdiag[j] = -norm;
  }
  std::vector<double> x(static_cast<std::size_t>(p));
  for (int j = p - 1; j >= 0; --j) {
    double s = b[j];
    for (int col = j + 1; col < p; ++col) s -= a[col * m + j] * x[col];
    x[j] = s / rdiag[j];
  }
  return x;
}

// Lawson-Hanson nonnegative least squares. A column-major m x n.
inline std::vector<double> nnls(const std::vector<double>& a, const std::vector<double>& b,
                                int m, int n) {
  std::vector<double> x(n, 0.0);
  std::vector<char> passive(n, 0);
  std::vector<double> w(n), resid(b);

  auto refresh_residual = [&]() {
    resid = b;
    for (int j = 0; j < n; ++j) {
      if (x[j] == 0.0) continue;
      for (int i = 0; i < m; ++i) resid[i] -= a[j * m + i] * x[j];
    }
  };
  auto gradient = [&]() {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int i = 0; i < m; ++i) s += a[j * m + i] * resid[i];
      w[j] = s;
    }
  };
  auto solve_passive = [&](std::vector<int>& idx) {
    idx.clear();
    for (int j = 0; j < n; ++j)
      if (passive[j]) idx.push_back(j);
    std::vector<double> sub(static_cast<std::size_t>(m) * idx.size());
    for (std::size_t c = 0; c < idx.size(); ++c)
      std::copy(a.begin() + idx[c] * m, a.begin() + (idx[c] + 1) * m, sub.begin() + c * m);
    return qr_least_squares(std::move(sub), b, m, static_cast<int>(idx.size()));
  };

  gradient();
  double tol = 0.0;
  for (int j = 0; j < n; ++j) tol = std::max(tol, std::fabs(w[j]));
  tol *= 1e-12;

  std::vector<int> idx;
  for (int outer = 0; outer < 4 * n + 16; ++outer) {
    int best = -1;
    double best_w = tol;
    for (int j = 0; j < n; ++j)
      if (!passive[j] && w[j] > best_w) {
        best_w = w[j];
        best = j;
      }
    if (best < 0) break;
    passive[best] = 1;

    for (int inner = 0; inner < 8 * n + 16; ++inner) {
      std::vector<double> z = solve_passive(idx);
      double min_z = std::numeric_limits<double>::infinity();
      for (double v : z) min_z = std::min(min_z, v);
      if (min_z > 0.0) {
        for (std::size_t c = 0; c < idx.size(); ++c) x[idx[c]] = z[c];
        break;
      }
      double alpha = 1.0;
      for (std::size_t c = 0; c < idx.size(); ++c)
        if (z[c] <= 0.0) alpha = std::min(alpha, x[idx[c]] / (x[idx[c]] - z[c]));
      for (std::size_t c = 0; c < idx.size(); ++c) {
        x[idx[c]] += alpha * (z[c] - x[idx[c]]);
        if (x[idx[c]] <= 1e-14) {
          x[idx[c]] = 0.0;
          passive[idx[c]] = 0;
        }
      }
    }
    refresh_residual();
    gradient();
  }
  return x;
}

}  // namespace detail

struct FractionalFit {
  MultiExpKernel kernel;
  double residual = 0.0;  // rms relative misfit over the log-uniform sample
  bool warning = false;
};

// Fits G_H on [T/1e4, T] with exponentials on a fixed geometric rate grid
// spanning [1e-2/T, 10 n/T]; weights are solved by nonnegative least squares
// on the relative misfit, zero weights are dropped. The residual is reported,
// and only warned about above `residual_warn` (rates above the grid cap are
// numerically inert in the schemes, so a perfect small-time fit is not the
// goal).
inline FractionalFit fit_fractional(double hurst, double horizon, int n,
                                    double residual_warn = 0.05, int sample_count = 600) {
  if (!(hurst > 0.0) || !(hurst <= 0.5))
    throw std::invalid_argument("fit_fractional: H must lie in (0, 1/2]");
  if (n < 2) throw std::invalid_argument("fit_fractional: n >= 2");
  if (!(horizon > 0.0)) throw std::invalid_argument("fit_fractional: horizon must be > 0");
  if (sample_count < 2 * n) sample_count = 2 * n;

  const FractionalKernel target(hurst);
  const double rho_lo = 1e-2 / horizon;
  const double rho_hi = 10.0 * n / horizon;
  std::vector<double> rho(n);
  for (int i = 0; i < n; ++i)
    rho[i] = rho_lo * std::pow(rho_hi / rho_lo, static_cast<double>(i) / (n - 1));

  const int m = sample_count;
  const double t_lo = horizon * 1e-4;
  std::vector<double> t(m), target_vals(m);
  for (int j = 0; j < m; ++j) {
    t[j] = t_lo * std::pow(horizon / t_lo, static_cast<double>(j) / (m - 1));
    target_vals[j] = target(t[j]);
  }

  std::vector<double> a(static_cast<std::size_t>(m) * n);
  std::vector<double> rhs(m, 1.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) a[i * static_cast<std::size_t>(m) + j] = std::exp(-rho[i] * t[j]) / target_vals[j];

  const std::vector<double> gamma = detail::nnls(a, rhs, m, n);

  double max_gamma = 0.0;
  for (double g : gamma) max_gamma = std::max(max_gamma, g);
  if (!(max_gamma > 0.0)) throw std::runtime_error("fit_fractional: all weights vanished");

  std::vector<double> keep_gamma, keep_rho;
  for (int i = 0; i < n; ++i) {
    if (gamma[i] > 1e-12 * max_gamma) {
      keep_gamma.push_back(gamma[i]);
      keep_rho.push_back(rho[i]);
    }
  }

  double ss = 0.0;
  for (int j = 0; j < m; ++j) {
    double fit = 0.0;
    for (std::size_t i = 0; i < keep_gamma.size(); ++i)
      fit += keep_gamma[i] * std::exp(-keep_rho[i] * t[j]);
    const double rel = fit / target_vals[j] - 1.0;
    ss += rel * rel;
  }
  const double residual = std::sqrt(ss / m);

  FractionalFit out{MultiExpKernel(std::move(keep_gamma), std::move(keep_rho)), residual,
                    residual > residual_warn};
  return out;
}

}  // namespace volterra
