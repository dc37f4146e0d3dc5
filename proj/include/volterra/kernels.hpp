#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "volterra/rng.hpp"

namespace volterra {

// Anything that can be evaluated as a convolution kernel G(t).
template <class K>
concept ConvolutionKernel = requires(const K& k, double t) {
  { k(t) } -> std::convertible_to<double>;
};

// G(t) = sum_i w_i exp(-rho_i t) with signed weights. Used to analyse kernels
// that are *not* completely monotone, e.g. 2 e^{-t} - e^{-2t}.
class ExpSumKernel {
 public:
  ExpSumKernel(std::vector<double> weights, std::vector<double> rhos)
      : weights_(std::move(weights)), rhos_(std::move(rhos)) {
    if (weights_.empty() || weights_.size() != rhos_.size())
      throw std::invalid_argument("ExpSumKernel: weights/rhos must be nonempty and equal length");
    double g0 = 0.0;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      if (!std::isfinite(weights_[i]) || !std::isfinite(rhos_[i]))
        throw std::invalid_argument("ExpSumKernel: nonfinite coefficient");
      if (rhos_[i] < 0.0) throw std::invalid_argument("ExpSumKernel: rates must be >= 0");
      if (i > 0 && !(rhos_[i] > rhos_[i - 1]))
        throw std::invalid_argument("ExpSumKernel: rates must be strictly increasing");
      g0 += weights_[i];
    }
    if (!(g0 > 0.0)) throw std::invalid_argument("ExpSumKernel: G(0) must be positive");
    g0_ = g0;
  }

  double operator()(double t) const {
    if (t < 0.0) throw std::domain_error("ExpSumKernel: t must be >= 0");
    double v = 0.0;
    for (std::size_t i = 0; i < weights_.size(); ++i) v += weights_[i] * std::exp(-rhos_[i] * t);
    return v;
  }

  double at_zero() const { return g0_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& rhos() const { return rhos_; }

 private:
  std::vector<double> weights_, rhos_;
  double g0_ = 0.0;
};

// Completely monotone multi-exponential kernel G(t) = sum_i gamma_i e^{-rho_i t},
// gamma_i > 0, 0 <= rho_1 < ... < rho_n. This is the kernel family the lifted
// schemes work with; G(0) = sum gamma_i.
class MultiExpKernel {
 public:
  MultiExpKernel(std::vector<double> gammas, std::vector<double> rhos)
      : gammas_(std::move(gammas)), rhos_(std::move(rhos)) {
    if (gammas_.empty() || gammas_.size() != rhos_.size())
      throw std::invalid_argument("MultiExpKernel: gammas/rhos must be nonempty and equal length");
    double g0 = 0.0;
    for (std::size_t i = 0; i < gammas_.size(); ++i) {
      if (!(gammas_[i] > 0.0) || !std::isfinite(gammas_[i]))
        throw std::invalid_argument("MultiExpKernel: weights must be strictly positive");
      if (!std::isfinite(rhos_[i]) || rhos_[i] < 0.0)
        throw std::invalid_argument("MultiExpKernel: rates must be >= 0");
      if (i > 0 && !(rhos_[i] > rhos_[i - 1]))
        throw std::invalid_argument("MultiExpKernel: rates must be strictly increasing");
      g0 += gammas_[i];
    }
    if (!std::isfinite(g0) || !(g0 > 0.0))
      throw std::invalid_argument("MultiExpKernel: G(0) must be finite and positive");
    g0_ = g0;
  }

  double operator()(double t) const {
    if (t < 0.0) throw std::domain_error("MultiExpKernel: t must be >= 0");
    double v = 0.0;
    for (std::size_t i = 0; i < gammas_.size(); ++i) v += gammas_[i] * std::exp(-rhos_[i] * t);
    return v;
  }

  double at_zero() const { return g0_; }
  std::size_t size() const { return gammas_.size(); }
  const std::vector<double>& gammas() const { return gammas_; }
  const std::vector<double>& rhos() const { return rhos_; }

  ExpSumKernel as_exp_sum() const { return ExpSumKernel(gammas_, rhos_); }

 private:
  std::vector<double> gammas_, rhos_;
  double g0_ = 0.0;
};

// Fractional kernel G_H(t) = t^{H-1/2} / Gamma(H+1/2), H in (0, 1/2].
// Only defined for t > 0 (G_H(0+) = +inf for H < 1/2).
class FractionalKernel {
 public:
  explicit FractionalKernel(double hurst) : hurst_(hurst) {
    if (!(hurst > 0.0) || !(hurst <= 0.5))
      throw std::invalid_argument("FractionalKernel: H must lie in (0, 1/2]");
    inv_gamma_ = 1.0 / std::tgamma(hurst + 0.5);
  }

  double operator()(double t) const {
    if (!(t > 0.0)) throw std::domain_error("FractionalKernel: only defined for t > 0");
    return std::pow(t, hurst_ - 0.5) * inv_gamma_;
  }

  double hurst() const { return hurst_; }

 private:
  double hurst_;
  double inv_gamma_;
};

// The n=5 multi-exponential preset used throughout the pricing experiments.
inline MultiExpKernel paper_n5_kernel() {
  return MultiExpKernel(
      {0.95998879, 0.06890172, 0.04257523, 0.03127181, 0.02488347},
      {0.06588906, 1.04979236, 1.78996945, 2.52111261, 3.24938890});
}

inline std::optional<MultiExpKernel> kernel_preset(std::string_view name) {
  if (name == "paper-n5") return paper_n5_kernel();
  return std::nullopt;
}

namespace detail {

template <ConvolutionKernel K>
double kernel_g0(const K& kernel) {
  const double g0 = kernel(0.0);
  if (!std::isfinite(g0) || !(g0 > 0.0))
    throw std::invalid_argument("kernel must have finite positive G(0)");
  return g0;
}

inline void require_positive_gaps(std::span<const double> gaps) {
  if (gaps.empty()) throw std::invalid_argument("time tuple must have length >= 1");
  for (double a : gaps)
    if (!(a > 0.0) || !std::isfinite(a))
      throw std::invalid_argument("time tuple entries must be strictly positive");
}

}  // namespace detail

// Weights of the worst-case strategy on a given time grid: x_1 = 1 and every
// later weight is the unique value bringing the running sum
// sum_{k'<=k} x_{k'} G(t_k - t_{k'}) back to zero.
struct StrategyPath {
  std::vector<double> times;
  std::vector<double> weights;
};

template <ConvolutionKernel K>
StrategyPath worst_case_strategy(const K& kernel, std::span<const double> times) {
  if (times.empty()) throw std::invalid_argument("worst_case_strategy: need at least one time");
  if (times[0] < 0.0) throw std::invalid_argument("worst_case_strategy: times must be >= 0");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1]))
      throw std::invalid_argument("worst_case_strategy: times must be strictly increasing");

  const double g0 = detail::kernel_g0(kernel);
  std::vector<double> x(times.size());
  x[0] = 1.0;
  for (std::size_t k = 1; k < times.size(); ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += x[j] * kernel(times[k] - times[j]);
    x[k] = -s / g0;
  }
  return StrategyPath{std::vector<double>(times.begin(), times.end()), std::move(x)};
}

// G_l(a_1,...,a_l) through the worst-case strategy identity: put the gaps on a
// grid in reverse order, run the zero-bring-back recursion and negate the
// weight one past the end. O(l^2) kernel evaluations.
template <ConvolutionKernel K>
double g_l_fast(const K& kernel, std::span<const double> gaps) {
  detail::require_positive_gaps(gaps);
  const double g0 = detail::kernel_g0(kernel);
  const std::size_t l = gaps.size();

  std::vector<double> t(l + 1), x(l + 1);
  t[0] = 0.0;
  for (std::size_t k = 1; k <= l; ++k) t[k] = t[k - 1] + gaps[l - k];
  x[0] = 1.0;
  for (std::size_t k = 1; k <= l; ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += x[j] * kernel(t[k] - t[j]);
    x[k] = -s / g0;
  }
  return -x[l];
}

namespace detail {

template <ConvolutionKernel K>
double g_l_recurse(const K& kernel, double g0, std::vector<double>& a) {
  if (a.size() == 1) return kernel(a[0]) / g0;
  const double last = a.back();
  a.pop_back();
  const double prev = a.back();

  a.back() = prev + last;
  const double merged = g_l_recurse(kernel, g0, a);
  a.back() = prev;
  const double shorter = g_l_recurse(kernel, g0, a);
  a.push_back(last);
  return merged - (kernel(last) / g0) * shorter;
}

}  // namespace detail

// Textbook recursion for G_l. Exponential cost, kept as an oracle for
// g_l_fast; refuses tuples longer than `cap`.
template <ConvolutionKernel K>
double g_l_bruteforce(const K& kernel, std::span<const double> gaps, int cap = 20) {
  detail::require_positive_gaps(gaps);
  if (static_cast<int>(gaps.size()) > cap)
    throw std::invalid_argument(
        "g_l_bruteforce: tuple length exceeds recursion cap (" + std::to_string(cap) +
        "); use g_l_fast");
  const double g0 = detail::kernel_g0(kernel);
  std::vector<double> a(gaps.begin(), gaps.end());
  return detail::g_l_recurse(kernel, g0, a);
}

// ---- randomized nonnegativity-preservation check -------------------------

enum class NonnegVerdict { kNoViolationFound, kFalsified };

inline std::string to_string(NonnegVerdict v) {
  return v == NonnegVerdict::kFalsified ? "FALSIFIED" : "NO_VIOLATION_FOUND";
}

struct NonnegCounterexample {
  int depth = 0;
  std::vector<double> gaps;
  double value = 0.0;
};

struct NonnegDepthStats {
  int depth = 0;
  int samples = 0;
  double min_gl = std::numeric_limits<double>::infinity();
  double max_gl = -std::numeric_limits<double>::infinity();
};

struct NonnegReport {
  NonnegVerdict verdict = NonnegVerdict::kNoViolationFound;
  double min_gl = std::numeric_limits<double>::infinity();
  std::vector<NonnegDepthStats> per_depth;
  std::optional<NonnegCounterexample> counterexample;
};

// Samples random gap tuples per depth (log-uniform on [1e-3, 10]) and looks
// for G_l < -tol. A FALSIFIED verdict is a certificate; NO_VIOLATION_FOUND is
// explicitly not a proof of preservation.
template <ConvolutionKernel K>
NonnegReport check_preserves_nonnegativity(const K& kernel, int max_depth, int samples,
                                           double tol, std::uint64_t seed) {
  if (max_depth < 1) throw std::invalid_argument("check_preserves_nonnegativity: max_depth >= 1");
  if (samples < 1) throw std::invalid_argument("check_preserves_nonnegativity: samples >= 1");
  detail::kernel_g0(kernel);

  constexpr double kGapLo = 1e-3, kGapHi = 10.0;
  const double log_lo = std::log(kGapLo), log_span = std::log(kGapHi / kGapLo);

  NonnegReport report;
  std::vector<double> gaps;
  for (int depth = 1; depth <= max_depth; ++depth) {
    CounterRng rng(seed, static_cast<std::uint64_t>(depth));
    NonnegDepthStats stats;
    stats.depth = depth;
    stats.samples = samples;
    gaps.resize(static_cast<std::size_t>(depth));
    for (int s = 0; s < samples; ++s) {
      for (double& a : gaps) a = std::exp(log_lo + log_span * rng.uniform01());
      const double v = g_l_fast(kernel, gaps);
      stats.min_gl = std::min(stats.min_gl, v);
      stats.max_gl = std::max(stats.max_gl, v);
      if (v < -tol && !report.counterexample) {
        report.verdict = NonnegVerdict::kFalsified;
        report.counterexample = NonnegCounterexample{depth, gaps, v};
      }
    }
    report.min_gl = std::min(report.min_gl, stats.min_gl);
    report.per_depth.push_back(std::move(stats));
  }
  return report;
}

// ---- discrete resolvent of the first kind ---------------------------------

// x^n_0..x^n_K on the grid {k/n} for the kernel normalized to G(0) = 1:
// x_0 = 1 and x_k = 1 - sum_{i<k} x_i G((k-i)/n), so that the convolution
// sum_{i<=k} x_i G((k-i)/n) equals 1 at every index.
struct DiscreteResolvent {
  int n = 1;
  double normalization = 1.0;  // the G(0) divided out
  std::vector<double> values;
};

template <ConvolutionKernel K>
DiscreteResolvent discrete_resolvent(const K& kernel, int n, int steps) {
  if (n < 1) throw std::invalid_argument("discrete_resolvent: n >= 1");
  if (steps < 0) throw std::invalid_argument("discrete_resolvent: K >= 0");
  const double g0 = detail::kernel_g0(kernel);

  std::vector<double> g(static_cast<std::size_t>(steps) + 1);
  for (int j = 0; j <= steps; ++j) g[j] = kernel(static_cast<double>(j) / n) / g0;

  std::vector<double> x(static_cast<std::size_t>(steps) + 1);
  x[0] = 1.0;
  for (int k = 1; k <= steps; ++k) {
    double s = 0.0;
    for (int i = 0; i < k; ++i) s += x[i] * g[k - i];
    x[k] = 1.0 - s;
  }
  return DiscreteResolvent{n, g0, std::move(x)};
}

}  // namespace volterra
