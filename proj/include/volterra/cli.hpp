#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>

#include "volterra/engine.hpp"
#include "volterra/kernels.hpp"
#include "volterra/reference.hpp"

namespace volterra::cli {

inline std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<double> parse_csv_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    const double v = std::stod(item, &pos);
    if (pos != item.size()) throw std::invalid_argument("malformed number '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("empty list");
  return out;
}

inline std::vector<int> parse_csv_ints(const std::string& s) {
  std::vector<int> out;
  for (double v : parse_csv_doubles(s)) {
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v) throw std::invalid_argument("expected integer list");
    out.push_back(i);
  }
  return out;
}

struct KernelFlags {
  std::string preset;
  std::string gammas;
  std::string rhos;
  double hurst = std::numeric_limits<double>::quiet_NaN();
  int fit_n = 20;

  void attach(CLI::App* cmd) {
    cmd->add_option("--preset", preset, "named kernel preset (paper-n5)");
    cmd->add_option("--gammas", gammas, "comma-separated kernel weights");
    cmd->add_option("--rhos", rhos, "comma-separated kernel rates");
    cmd->add_option("--hurst", hurst, "fractional kernel Hurst parameter in (0, 1/2]");
    cmd->add_option("--fit-n", fit_n,
                    "exponential count when a fractional kernel must be fitted first");
  }
};

// Either an analysis kernel (signed weights allowed) or an engine kernel.
using AnalysisKernel = std::variant<MultiExpKernel, ExpSumKernel, FractionalKernel>;

inline AnalysisKernel load_analysis_kernel(const KernelFlags& f) {
  const bool has_lists = !f.gammas.empty() || !f.rhos.empty();
  const bool has_hurst = !std::isnan(f.hurst);
  const int sources = (!f.preset.empty()) + has_lists + has_hurst;
  if (sources != 1)
    throw std::invalid_argument(
        "specify exactly one kernel: --preset NAME, --gammas/--rhos lists, or --hurst H");
  if (!f.preset.empty()) {
    auto k = kernel_preset(f.preset);
    if (!k) throw std::invalid_argument("unknown preset '" + f.preset + "'");
    return *k;
  }
  if (has_hurst) return FractionalKernel(f.hurst);
  if (f.gammas.empty() || f.rhos.empty())
    throw std::invalid_argument("--gammas and --rhos must be given together");
  const auto w = parse_csv_doubles(f.gammas);
  const auto r = parse_csv_doubles(f.rhos);
  bool all_positive = true;
  for (double v : w)
    if (!(v > 0.0)) all_positive = false;
  if (all_positive) return MultiExpKernel(w, r);
  return ExpSumKernel(w, r);
}

inline KernelSpec load_engine_kernel(const KernelFlags& f, SchemeKind scheme, double horizon,
                                     std::ostream& err) {
  AnalysisKernel k = load_analysis_kernel(f);
  if (std::holds_alternative<ExpSumKernel>(k))
    throw std::invalid_argument("simulation requires strictly positive kernel weights");
  if (std::holds_alternative<FractionalKernel>(k)) {
    if (scheme == SchemeKind::kEulerVolterra)
      return KernelSpec{std::get<FractionalKernel>(k)};
    const FractionalFit fit = fit_fractional(std::get<FractionalKernel>(k).hurst(), horizon,
                                             f.fit_n);
    err << "# fitted fractional kernel: n=" << fit.kernel.size()
        << " residual=" << g17(fit.residual) << (fit.warning ? " (above warn bound)" : "")
        << "\n";
    return KernelSpec{fit.kernel};
  }
  return KernelSpec{std::get<MultiExpKernel>(k)};
}

struct ModelFlags {
  double x0 = 0.02, a = 0.02, k = 0.3, sigma = 0.3;  // defaults of the paper-n5 experiments
  double r = 0.0, varrho = -0.7, s0 = 1.0;
  double mu = 0.05, sigma_g = 0.2;

  void attach(CLI::App* cmd) {
    cmd->add_option("--x0", x0, "initial variance / initial GBM value");
    cmd->add_option("--a", a, "CIR drift level");
    cmd->add_option("--k", k, "CIR mean-reversion speed");
    cmd->add_option("--sigma", sigma, "CIR vol of vol");
    cmd->add_option("--r", r, "interest rate");
    cmd->add_option("--varrho", varrho, "spot/vol correlation");
    cmd->add_option("--s0", s0, "initial asset price");
    cmd->add_option("--mu", mu, "GBM drift");
    cmd->add_option("--sigma-g", sigma_g, "GBM diffusion coefficient");
  }

  HestonParams heston() const {
    HestonParams p;
    p.cir = CirParams{x0, a, k, sigma};
    p.r = r;
    p.varrho = varrho;
    p.y0 = std::log(s0);
    return p;
  }
  GbmParams gbm() const { return GbmParams{x0, mu, sigma_g}; }
};

struct OutFile {
  std::ostream& stream() { return file.is_open() ? file : *fallback; }
  std::ofstream file;
  std::ostream* fallback = nullptr;
};

// Flat key=value config support: the file's pairs are injected as --key=value
// tokens right after the subcommand, so explicit flags (parsed later, with a
// take-last policy) always win.
inline std::vector<std::string> expand_config_args(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;

  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot read config file '" + path + "'");
  std::vector<std::string> injected;
  std::string line;
  while (std::getline(f, line)) {
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line is not key=value: '" + line + "'");
    std::string key = line.substr(first, eq - first);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    std::string value = line.substr(eq + 1);
    const auto vstart = value.find_first_not_of(" \t");
    value = (vstart == std::string::npos) ? "" : value.substr(vstart);
    injected.push_back("--" + key + "=" + value);
  }

  std::size_t at = args.empty() ? 0 : 1;
  if (!args.empty() && args[0] == "kernel") at = std::min<std::size_t>(2, args.size());
  args.insert(args.begin() + static_cast<long>(at), injected.begin(), injected.end());
  return args;
}

inline OutFile open_out(const std::string& path, std::ostream& fallback) {
  OutFile o;
  o.fallback = &fallback;
  if (!path.empty()) {
    o.file.open(path);
    if (!o.file) throw std::invalid_argument("cannot open output file '" + path + "'");
  }
  return o;
}

// ---- subcommand bodies -------------------------------------------------------

inline int cmd_kernel_check(const AnalysisKernel& kernel, int depth, int samples, double tol,
                            std::uint64_t seed, std::ostream& out) {
  const NonnegReport report = std::visit(
      [&](const auto& k) { return check_preserves_nonnegativity(k, depth, samples, tol, seed); },
      kernel);

  out << "depth,samples,min_gl,verdict,counterexample_gaps\n";
  for (const auto& d : report.per_depth) {
    std::string gaps;
    const bool violated = d.min_gl < -tol;
    if (report.counterexample && report.counterexample->depth == d.depth) {
      for (std::size_t i = 0; i < report.counterexample->gaps.size(); ++i) {
        if (i) gaps += ';';
        gaps += g17(report.counterexample->gaps[i]);
      }
    }
    out << d.depth << ',' << d.samples << ',' << g17(d.min_gl) << ','
        << (violated ? "FALSIFIED" : "NO_VIOLATION_FOUND") << ',' << gaps << "\n";
  }
  return report.verdict == NonnegVerdict::kFalsified ? 2 : 0;
}

inline int cmd_resolvent(const AnalysisKernel& kernel, int n, int K, std::ostream& out) {
  const DiscreteResolvent res =
      std::visit([&](const auto& k) { return discrete_resolvent(k, n, K); }, kernel);
  out << "k,x\n";
  for (std::size_t i = 0; i < res.values.size(); ++i)
    out << i << ',' << g17(res.values[i]) << "\n";
  return 0;
}

inline int cmd_fit(double hurst, double horizon, int n, double bound, std::ostream& out) {
  const FractionalFit fit = fit_fractional(hurst, horizon, n, bound);
  out << "i,gamma,rho,residual_rel,warning\n";
  for (std::size_t i = 0; i < fit.kernel.size(); ++i)
    out << i << ',' << g17(fit.kernel.gammas()[i]) << ',' << g17(fit.kernel.rhos()[i]) << ','
        << g17(fit.residual) << ',' << (fit.warning ? 1 : 0) << "\n";
  return 0;
}

inline void write_estimate_row(std::ostream& out, SchemeKind scheme, ModelKind model,
                               PayoffKind payoff, int steps, long long paths,
                               const McEstimate& est, std::uint64_t seed) {
  out << to_string(scheme) << ',' << to_string(model) << ',' << to_string(payoff) << ',' << steps
      << ',' << paths << ',' << g17(est.mean) << ',' << g17(est.std_error) << ','
      << g17(est.ci95_halfwidth) << ',' << std::fixed << std::setprecision(3) << est.seconds
      << std::defaultfloat << ',' << seed;
}

inline int cmd_price(const ModelSpec& spec, SchemeKind scheme, PayoffKind payoff,
                     const McConfig& cfg, std::ostream& out) {
  const McEstimate est = run_mc(spec, scheme, payoff, cfg);
  out << "scheme,model,payoff,steps,paths,mean,stderr,ci95_halfwidth,seconds,seed\n";
  write_estimate_row(out, scheme, spec.model, payoff, cfg.steps, cfg.paths, est, cfg.seed);
  out << "\n";
  return 0;
}

inline int cmd_converge(const ModelSpec& spec, SchemeKind scheme, PayoffKind payoff,
                        const std::vector<int>& steps, const std::string& reference_flag,
                        const McConfig& cfg, std::ostream& out) {
  double reference = 0.0;
  if (reference_flag == "auto") {
    if (payoff == PayoffKind::kLaplace) {
      if (spec.model == ModelKind::kGbm)
        throw ConfigError("--reference auto is unavailable for model gbm; pass a value");
      const double u = 1.0 / spec.heston.cir.x0;
      reference = laplace_xt(std::get<MultiExpKernel>(spec.kernel), spec.heston.cir, u,
                             spec.horizon);
    } else if (payoff == PayoffKind::kCall) {
      reference = call_price(std::get<MultiExpKernel>(spec.kernel), spec.heston, spec.strike,
                             spec.horizon);
    } else {
      throw ConfigError("--reference auto is unavailable for payoff scaled-call; pass a value");
    }
  } else {
    std::size_t pos = 0;
    reference = std::stod(reference_flag, &pos);
    if (pos != reference_flag.size())
      throw ConfigError("--reference must be 'auto' or a number, got '" + reference_flag + "'");
  }

  const ConvergenceTable table = convergence_study(spec, scheme, payoff, steps, reference, cfg);
  const std::string slope = table.slope ? g17(*table.slope) : std::string("NOT_RESOLVED");
  out << "scheme,model,payoff,steps,paths,mean,stderr,ci95_halfwidth,seconds,seed,reference,"
         "bias,slope\n";
  for (const auto& row : table.rows) {
    write_estimate_row(out, scheme, spec.model, payoff, row.steps, cfg.paths, row.est, cfg.seed);
    out << ',' << g17(table.reference) << ',' << g17(row.bias) << ',' << slope << "\n";
  }
  return 0;
}

inline int cmd_reference(const AnalysisKernel& kernel, const ModelFlags& model, double horizon,
                         PayoffKind payoff, double u_arg, double strike, std::ostream& out) {
  if (!std::holds_alternative<MultiExpKernel>(kernel))
    throw std::invalid_argument(
        "reference values need a multi-exponential kernel (use `fit` for fractional ones)");
  const auto& k = std::get<MultiExpKernel>(kernel);
  out << "quantity,value,tolerance_estimate\n";
  if (payoff == PayoffKind::kLaplace) {
    const double u = std::isnan(u_arg) ? 1.0 / model.x0 : u_arg;
    const RefValue v = laplace_xt_diag(k, model.heston().cir, u, horizon);
    out << "laplace_xt," << g17(v.value) << ',' << g17(v.tol_estimate) << "\n";
  } else if (payoff == PayoffKind::kCall) {
    const RefValue v = call_price_diag(k, model.heston(), strike, horizon);
    out << "call_price," << g17(v.value) << ',' << g17(v.tol_estimate) << "\n";
  } else {
    throw std::invalid_argument("reference supports payoff laplace or call");
  }
  return 0;
}

// ---- top-level dispatcher ------------------------------------------------------

inline int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err,
               bool scripted) {
  std::vector<std::string> args;
  try {
    args = expand_config_args(raw_args);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  CLI::App app{"nonnegativity-preserving kernels and high-order Volterra Monte Carlo"};
  app.require_subcommand(1);
  // config values are injected before explicit flags, so take-last gives flags precedence
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string config_path;  // consumed by expand_config_args; kept for --help

  // kernel check / kernel resolvent
  auto* kernel_cmd = app.add_subcommand("kernel", "kernel analysis tools");
  kernel_cmd->require_subcommand(1);

  auto* check = kernel_cmd->add_subcommand("check", "randomized nonnegativity-preservation check");
  KernelFlags check_kernel;
  check_kernel.attach(check);
  int check_depth = 8;
  int check_samples = 10000;
  double check_tol = 1e-12;
  std::uint64_t check_seed = 12345;
  std::string check_out_path;
  check->add_option("--depth", check_depth, "maximum tuple depth");
  check->add_option("--samples", check_samples, "samples per depth");
  check->add_option("--tol", check_tol, "violation tolerance");
  check->add_option("--seed", check_seed, "sampling seed");
  check->add_option("--out", check_out_path, "write CSV here instead of stdout");
  check->add_option("--config", config_path, "flat key=value config file");

  auto* resolvent = kernel_cmd->add_subcommand("resolvent", "discrete resolvent sequence");
  KernelFlags res_kernel;
  res_kernel.attach(resolvent);
  int res_n = 100;
  int res_K = 1000;
  std::string res_out_path;
  resolvent->add_option("--n", res_n, "grid density (steps per unit time)");
  resolvent->add_option("--K", res_K, "number of grid points");
  resolvent->add_option("--out", res_out_path, "write CSV here instead of stdout");
  resolvent->add_option("--config", config_path, "flat key=value config file");

  // fit
  auto* fit = app.add_subcommand("fit", "multi-exponential fit of the fractional kernel");
  double fit_hurst = 0.1, fit_T = 1.0, fit_bound = 0.05;
  int fit_n = 20;
  std::string fit_out_path;
  fit->add_option("--hurst", fit_hurst, "Hurst parameter in (0, 1/2]")->required();
  fit->add_option("--T", fit_T, "horizon the fit targets");
  fit->add_option("--n", fit_n, "number of exponentials");
  fit->add_option("--bound", fit_bound, "warn when the relative residual exceeds this");
  fit->add_option("--out", fit_out_path, "write CSV here instead of stdout");
  fit->add_option("--config", config_path, "flat key=value config file");

  // price / converge / reference share model flags
  auto add_common = [&config_path](CLI::App* cmd, KernelFlags& kf, ModelFlags& mf, double& T,
                                   std::string& out_path) {
    kf.attach(cmd);
    mf.attach(cmd);
    cmd->add_option("--T", T, "time horizon");
    cmd->add_option("--out", out_path, "write CSV here instead of stdout");
    cmd->add_option("--config", config_path, "flat key=value config file");
  };

  auto* price = app.add_subcommand("price", "Monte Carlo estimate of one payoff");
  KernelFlags price_kernel;
  ModelFlags price_model;
  double price_T = 1.0, price_strike = 1.0;
  std::string price_out_path, price_model_s = "heston", price_scheme_s = "second-order",
              price_payoff_s = "call";
  McConfig price_cfg;
  bool price_seed_given = false;
  add_common(price, price_kernel, price_model, price_T, price_out_path);
  price->add_option("--model", price_model_s, "cir | heston | gbm");
  price->add_option("--scheme", price_scheme_s,
                    "second-order | euler-volterra | euler-lifted | splitting-gbm");
  price->add_option("--payoff", price_payoff_s, "laplace | call | scaled-call");
  price->add_option("--steps", price_cfg.steps, "time steps");
  price->add_option("--paths", price_cfg.paths, "Monte Carlo paths");
  price->add_option("--strike", price_strike, "call strike");
  price->add_option("--seed", price_cfg.seed, "RNG seed (required when not a TTY)")
      ->each([&](const std::string&) { price_seed_given = true; });

  auto* converge = app.add_subcommand("converge", "bias/step-size study against a reference");
  KernelFlags conv_kernel;
  ModelFlags conv_model;
  double conv_T = 1.0, conv_strike = 1.0;
  std::string conv_out_path, conv_model_s = "cir", conv_scheme_s = "second-order",
              conv_payoff_s = "laplace", conv_steps_s = "10,20,40,80", conv_reference = "auto";
  McConfig conv_cfg;
  bool conv_seed_given = false;
  add_common(converge, conv_kernel, conv_model, conv_T, conv_out_path);
  converge->add_option("--model", conv_model_s, "cir | heston | gbm");
  converge->add_option("--scheme", conv_scheme_s, "scheme selector");
  converge->add_option("--payoff", conv_payoff_s, "payoff selector");
  converge->add_option("--steps", conv_steps_s, "comma-separated ascending step counts");
  converge->add_option("--paths", conv_cfg.paths, "Monte Carlo paths per step count");
  converge->add_option("--strike", conv_strike, "call strike");
  converge->add_option("--reference", conv_reference, "'auto' or an explicit reference value");
  converge->add_option("--seed", conv_cfg.seed, "RNG seed (required when not a TTY)")
      ->each([&](const std::string&) { conv_seed_given = true; });

  auto* reference = app.add_subcommand("reference", "semi-analytic reference values");
  KernelFlags ref_kernel;
  ModelFlags ref_model;
  double ref_T = 1.0, ref_strike = 1.0;
  double ref_u = std::numeric_limits<double>::quiet_NaN();
  std::string ref_out_path, ref_payoff_s = "laplace";
  add_common(reference, ref_kernel, ref_model, ref_T, ref_out_path);
  reference->add_option("--payoff", ref_payoff_s, "laplace | call");
  reference->add_option("--u", ref_u, "Laplace transform argument (default 1/x0)");
  reference->add_option("--strike", ref_strike, "call strike");

  std::vector<const char*> argv;
  argv.push_back("volterra");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (kernel_cmd->parsed()) {
      if (check->parsed()) {
        OutFile o = open_out(check_out_path, out);
        return cmd_kernel_check(load_analysis_kernel(check_kernel), check_depth, check_samples,
                                check_tol, check_seed, o.stream());
      }
      OutFile o = open_out(res_out_path, out);
      return cmd_resolvent(load_analysis_kernel(res_kernel), res_n, res_K, o.stream());
    }
    if (fit->parsed()) {
      OutFile o = open_out(fit_out_path, out);
      return cmd_fit(fit_hurst, fit_T, fit_n, fit_bound, o.stream());
    }
    if (price->parsed() || converge->parsed()) {
      const bool is_price = price->parsed();
      const bool seed_given = is_price ? price_seed_given : conv_seed_given;
      McConfig& cfg = is_price ? price_cfg : conv_cfg;
      if (!seed_given) {
        if (scripted) {
          err << "error: --seed is required in scripted (non-TTY) mode\n";
          return 1;
        }
        cfg.seed = std::random_device{}();
        err << "# no --seed given, using " << cfg.seed << "\n";
      }
      const std::string& model_s = is_price ? price_model_s : conv_model_s;
      const std::string& scheme_s = is_price ? price_scheme_s : conv_scheme_s;
      const std::string& payoff_s = is_price ? price_payoff_s : conv_payoff_s;
      const auto model = model_from_string(model_s);
      const auto scheme = scheme_from_string(scheme_s);
      const auto payoff = payoff_from_string(payoff_s);
      if (!model) throw std::invalid_argument("unknown model '" + model_s + "'");
      if (!scheme) throw std::invalid_argument("unknown scheme '" + scheme_s + "'");
      if (!payoff) throw std::invalid_argument("unknown payoff '" + payoff_s + "'");

      ModelSpec spec;
      spec.model = *model;
      spec.horizon = is_price ? price_T : conv_T;
      spec.strike = is_price ? price_strike : conv_strike;
      const ModelFlags& mf = is_price ? price_model : conv_model;
      spec.heston = mf.heston();
      spec.gbm = mf.gbm();
      spec.kernel = load_engine_kernel(is_price ? price_kernel : conv_kernel, *scheme,
                                       spec.horizon, err);
      if (is_price) {
        OutFile o = open_out(price_out_path, out);
        return cmd_price(spec, *scheme, *payoff, cfg, o.stream());
      }
      OutFile o = open_out(conv_out_path, out);
      return cmd_converge(spec, *scheme, *payoff, parse_csv_ints(conv_steps_s), conv_reference,
                          cfg, o.stream());
    }
    if (reference->parsed()) {
      const auto payoff = payoff_from_string(ref_payoff_s);
      if (!payoff) throw std::invalid_argument("unknown payoff '" + ref_payoff_s + "'");
      OutFile o = open_out(ref_out_path, out);
      return cmd_reference(load_analysis_kernel(ref_kernel), ref_model, ref_T, *payoff, ref_u,
                           ref_strike, o.stream());
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << "error: no subcommand\n";
  return 1;
}

}  // namespace volterra::cli
