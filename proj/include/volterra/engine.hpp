#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "volterra/kernels.hpp"
#include "volterra/reference.hpp"
#include "volterra/rng.hpp"
#include "volterra/schemes.hpp"

namespace volterra {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class PayoffKind { kLaplace, kCall, kScaledCall };
enum class SchemeKind { kSecondOrder, kEulerVolterra, kEulerLifted, kSplittingGbm };
enum class ModelKind { kCir, kHeston, kGbm };

inline std::string to_string(PayoffKind p) {
  switch (p) {
    case PayoffKind::kLaplace: return "laplace";
    case PayoffKind::kCall: return "call";
    case PayoffKind::kScaledCall: return "scaled-call";
  }
  return "?";
}
inline std::string to_string(SchemeKind s) {
  switch (s) {
    case SchemeKind::kSecondOrder: return "second-order";
    case SchemeKind::kEulerVolterra: return "euler-volterra";
    case SchemeKind::kEulerLifted: return "euler-lifted";
    case SchemeKind::kSplittingGbm: return "splitting-gbm";
  }
  return "?";
}
inline std::string to_string(ModelKind m) {
  switch (m) {
    case ModelKind::kCir: return "cir";
    case ModelKind::kHeston: return "heston";
    case ModelKind::kGbm: return "gbm";
  }
  return "?";
}

inline std::optional<PayoffKind> payoff_from_string(std::string_view s) {
  if (s == "laplace") return PayoffKind::kLaplace;
  if (s == "call") return PayoffKind::kCall;
  if (s == "scaled-call") return PayoffKind::kScaledCall;
  return std::nullopt;
}
inline std::optional<SchemeKind> scheme_from_string(std::string_view s) {
  if (s == "second-order") return SchemeKind::kSecondOrder;
  if (s == "euler-volterra") return SchemeKind::kEulerVolterra;
  if (s == "euler-lifted") return SchemeKind::kEulerLifted;
  if (s == "splitting-gbm") return SchemeKind::kSplittingGbm;
  return std::nullopt;
}
inline std::optional<ModelKind> model_from_string(std::string_view s) {
  if (s == "cir") return ModelKind::kCir;
  if (s == "heston") return ModelKind::kHeston;
  if (s == "gbm") return ModelKind::kGbm;
  return std::nullopt;
}

using KernelSpec = std::variant<MultiExpKernel, FractionalKernel>;

struct ModelSpec {
  ModelKind model = ModelKind::kHeston;
  KernelSpec kernel{MultiExpKernel({1.0}, {0.0})};  // placeholder constant kernel
  HestonParams heston;  // .cir doubles as the CIR model parameters
  GbmParams gbm;
  double horizon = 1.0;
  double strike = 1.0;
};

struct McConfig {
  long long paths = 10000;
  std::uint64_t seed = 0;
  int steps = 100;
  int workers = 0;  // 0: take VOLTERRA_THREADS, else hardware; advisory only
};

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double ci95_halfwidth = 0.0;
  long long n = 0;
  double seconds = 0.0;
  bool degenerate = false;  // single-path runs report std_error 0 with this flag
};

inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("VOLTERRA_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

// Deterministic parallel driver: paths are split into fixed 4096-wide blocks,
// each block is summed sequentially in path order and block sums are reduced
// in block order, so the result is bit-identical for any worker count.
template <class Sampler>
McEstimate run_mc_core(std::uint64_t seed, long long paths, int workers, const Sampler& sample) {
  if (paths < 1) throw std::invalid_argument("run_mc_core: paths >= 1");
  const auto t0 = std::chrono::steady_clock::now();

  constexpr long long kBlock = 4096;
  const long long nblocks = (paths + kBlock - 1) / kBlock;
  std::vector<long double> block_sum(static_cast<std::size_t>(nblocks), 0.0L);
  std::vector<long double> block_sq(static_cast<std::size_t>(nblocks), 0.0L);

  std::atomic<long long> next{0};
  auto work = [&]() {
    long long blk;
    while ((blk = next.fetch_add(1)) < nblocks) {
      const long long lo = blk * kBlock;
      const long long hi = std::min(paths, lo + kBlock);
      long double s = 0.0L, q = 0.0L;
      for (long long p = lo; p < hi; ++p) {
        CounterRng rng(seed, static_cast<std::uint64_t>(p));
        const double v = sample(rng);
        s += v;
        q += static_cast<long double>(v) * v;
      }
      block_sum[static_cast<std::size_t>(blk)] = s;
      block_sq[static_cast<std::size_t>(blk)] = q;
    }
  };

  const int nw =
      static_cast<int>(std::max<long long>(1, std::min<long long>(resolve_workers(workers), nblocks)));
  if (nw == 1) {
    work();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(nw));
    for (int i = 0; i < nw; ++i) threads.emplace_back(work);
    for (auto& t : threads) t.join();
  }

  long double s = 0.0L, q = 0.0L;
  for (long long b = 0; b < nblocks; ++b) {
    s += block_sum[static_cast<std::size_t>(b)];
    q += block_sq[static_cast<std::size_t>(b)];
  }

  McEstimate est;
  est.n = paths;
  est.mean = static_cast<double>(s / paths);
  if (paths > 1) {
    long double var = (q - s * s / paths) / (paths - 1);
    if (var < 0.0L) var = 0.0L;
    est.std_error = static_cast<double>(std::sqrt(var / paths));
  } else {
    est.std_error = 0.0;
    est.degenerate = true;
  }
  est.ci95_halfwidth = 1.96 * est.std_error;
  est.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return est;
}

// Payoffs of the pricing experiments. laplace needs only the terminal spot;
// the call payoffs need the terminal log price.
inline double payoff_value(PayoffKind kind, double spot, std::optional<double> y, double x0,
                           double strike) {
  switch (kind) {
    case PayoffKind::kLaplace:
      if (!(x0 > 0.0)) throw ConfigError("laplace payoff requires x0 > 0");
      return std::exp(-spot / x0);
    case PayoffKind::kCall: {
      if (!y) throw ConfigError("call payoff requires a log-price component");
      const double v = std::exp(*y) - strike;
      return v > 0.0 ? v : 0.0;
    }
    case PayoffKind::kScaledCall: {
      if (!y) throw ConfigError("scaled-call payoff requires a log-price component");
      if (!(x0 > 0.0)) throw ConfigError("scaled-call payoff requires x0 > 0");
      const double v = std::exp(*y) - strike;
      return v > 0.0 ? (spot / x0) * v : 0.0;
    }
  }
  throw ConfigError("unknown payoff");
}

namespace detail {

inline const char* kValidPairings =
    "valid combinations: model=cir|heston with scheme=second-order|euler-lifted on a "
    "multi-exponential kernel, scheme=euler-volterra on any kernel; model=gbm with "
    "scheme=splitting-gbm on a multi-exponential kernel; payoff=call|scaled-call needs "
    "model=heston, payoff=laplace works with any model";

inline void fill_increments(CounterRng& rng, double sqrt_h, std::vector<double>& dw) {
  for (double& v : dw) v = sqrt_h * rng.normal();
}
inline void fill_increment_pairs(CounterRng& rng, double sqrt_h, std::vector<double>& dw,
                                 std::vector<double>& dw_orth) {
  for (std::size_t i = 0; i < dw.size(); ++i) {
    dw[i] = sqrt_h * rng.normal();
    dw_orth[i] = sqrt_h * rng.normal();
  }
}

}  // namespace detail

inline void validate_pairing(const ModelSpec& spec, SchemeKind scheme, PayoffKind payoff) {
  const bool multi_exp = std::holds_alternative<MultiExpKernel>(spec.kernel);
  const std::string why = std::string("; ") + detail::kValidPairings;
  switch (spec.model) {
    case ModelKind::kGbm:
      if (scheme != SchemeKind::kSplittingGbm)
        throw ConfigError("model gbm requires scheme splitting-gbm" + why);
      if (payoff != PayoffKind::kLaplace)
        throw ConfigError("model gbm only supports the laplace payoff" + why);
      if (!multi_exp) throw ConfigError("splitting-gbm requires a multi-exponential kernel" + why);
      return;
    case ModelKind::kCir:
      if (payoff != PayoffKind::kLaplace)
        throw ConfigError("call payoffs need model heston" + why);
      [[fallthrough]];
    case ModelKind::kHeston:
      if (scheme == SchemeKind::kSplittingGbm)
        throw ConfigError("scheme splitting-gbm requires model gbm" + why);
      if (scheme != SchemeKind::kEulerVolterra && !multi_exp)
        throw ConfigError("scheme " + to_string(scheme) +
                          " requires a multi-exponential kernel (fit the fractional kernel "
                          "first)" + why);
      return;
  }
}

inline McEstimate run_mc(const ModelSpec& spec, SchemeKind scheme, PayoffKind payoff,
                         const McConfig& cfg) {
  validate_pairing(spec, scheme, payoff);
  if (cfg.steps < 1) throw ConfigError("steps must be >= 1");
  const double T = spec.horizon;
  const int N = cfg.steps;
  const double strike = spec.strike;

  switch (spec.model) {
    case ModelKind::kGbm: {
      const auto& kernel = std::get<MultiExpKernel>(spec.kernel);
      const GbmParams p = spec.gbm;
      p.validate();
      const double sqrt_h = std::sqrt(T / N);
      return run_mc_core(cfg.seed, cfg.paths, cfg.workers, [&, p](CounterRng& rng) {
        std::vector<double> dw(static_cast<std::size_t>(N));
        detail::fill_increments(rng, sqrt_h, dw);
        const GbmSplitPath path = splitting_gbm_path(kernel, p, T, N, dw);
        return payoff_value(payoff, path.nodes.back(), std::nullopt, p.x0, strike);
      });
    }
    case ModelKind::kCir: {
      const CirParams p = spec.heston.cir;
      p.validate();
      if (scheme == SchemeKind::kSecondOrder) {
        const auto& kernel = std::get<MultiExpKernel>(spec.kernel);
        return run_mc_core(cfg.seed, cfg.paths, cfg.workers, [&, p](CounterRng& rng) {
          const double x = second_order_cir_terminal(kernel, p, T, N, rng);
          return payoff_value(payoff, x, std::nullopt, p.x0, strike);
        });
      }
      const double sqrt_h = std::sqrt(T / N);
      if (scheme == SchemeKind::kEulerLifted) {
        const auto& kernel = std::get<MultiExpKernel>(spec.kernel);
        return run_mc_core(cfg.seed, cfg.paths, cfg.workers, [&, p](CounterRng& rng) {
          std::vector<double> dw(static_cast<std::size_t>(N));
          detail::fill_increments(rng, sqrt_h, dw);
          const double x = euler_lifted_cir_terminal(kernel, p, T, N, dw);
          return payoff_value(payoff, x, std::nullopt, p.x0, strike);
        });
      }
      return std::visit(
          [&](const auto& kernel) {
            return run_mc_core(cfg.seed, cfg.paths, cfg.workers, [&, p](CounterRng& rng) {
              std::vector<double> dw(static_cast<std::size_t>(N));
              detail::fill_increments(rng, sqrt_h, dw);
              const double x = euler_volterra_cir_terminal(kernel, p, T, N, dw);
              return payoff_value(payoff, x, std::nullopt, p.x0, strike);
            });
          },
          spec.kernel);
    }
    case ModelKind::kHeston: {
      const HestonParams p = spec.heston;
      p.validate();
      const double x0 = p.cir.x0;
      if (scheme == SchemeKind::kSecondOrder) {
        const auto& kernel = std::get<MultiExpKernel>(spec.kernel);
        return run_mc_core(cfg.seed, cfg.paths, cfg.workers, [&, p](CounterRng& rng) {
          const HestonTerminal t = second_order_heston_terminal(kernel, p, T, N, rng);
          return payoff_value(payoff, t.spot, t.y, x0, strike);
        });
      }
      const double sqrt_h = std::sqrt(T / N);
      if (scheme == SchemeKind::kEulerLifted) {
        const auto& kernel = std::get<MultiExpKernel>(spec.kernel);
        return run_mc_core(cfg.seed, cfg.paths, cfg.workers, [&, p](CounterRng& rng) {
          std::vector<double> dw(static_cast<std::size_t>(N)), dw_orth(dw.size());
          detail::fill_increment_pairs(rng, sqrt_h, dw, dw_orth);
          const HestonTerminal t = euler_lifted_heston_terminal(kernel, p, T, N, dw, dw_orth);
          return payoff_value(payoff, t.spot, t.y, x0, strike);
        });
      }
      return std::visit(
          [&](const auto& kernel) {
            return run_mc_core(cfg.seed, cfg.paths, cfg.workers, [&, p](CounterRng& rng) {
              std::vector<double> dw(static_cast<std::size_t>(N)), dw_orth(dw.size());
              detail::fill_increment_pairs(rng, sqrt_h, dw, dw_orth);
              const HestonTerminal t =
                  euler_volterra_heston_terminal(kernel, p, T, N, dw, dw_orth);
              return payoff_value(payoff, t.spot, t.y, x0, strike);
            });
          },
          spec.kernel);
    }
  }
  throw ConfigError("unknown model");
}

// ---- convergence-order studies ------------------------------------------------

struct ConvergenceRow {
  int steps = 0;
  McEstimate est;
  double bias = 0.0;
  bool admissible = false;  // |bias| > 3 std_error
};

struct ConvergenceTable {
  double reference = 0.0;
  std::vector<ConvergenceRow> rows;
  std::optional<double> slope;  // empty: NOT_RESOLVED (noise floor)
  int points_used = 0;
};

inline ConvergenceTable convergence_study(const ModelSpec& spec, SchemeKind scheme,
                                          PayoffKind payoff, const std::vector<int>& step_list,
                                          double reference, const McConfig& cfg) {
  if (step_list.empty()) throw ConfigError("convergence_study: need at least one step count");
  for (std::size_t i = 1; i < step_list.size(); ++i)
    if (step_list[i] <= step_list[i - 1])
      throw ConfigError("convergence_study: step counts must be sorted ascending");

  ConvergenceTable table;
  table.reference = reference;
  for (int n : step_list) {
    McConfig c = cfg;
    c.steps = n;
    ConvergenceRow row;
    row.steps = n;
    row.est = run_mc(spec, scheme, payoff, c);
    row.bias = row.est.mean - reference;
    row.admissible = std::fabs(row.bias) > 3.0 * row.est.std_error;
    table.rows.push_back(row);
  }

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (const auto& row : table.rows) {
    if (!row.admissible) continue;
    const double lx = std::log2(static_cast<double>(row.steps));
    const double ly = std::log2(std::fabs(row.bias));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++m;
  }
  table.points_used = m;
  if (m >= 2) {
    const double denom = m * sxx - sx * sx;
    // bias ~ C N^{-order}: the fitted slope of log2|bias| is -order
    table.slope = -(m * sxy - sx * sy) / denom;
  }
  return table;
}

}  // namespace volterra
