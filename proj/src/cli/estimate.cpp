#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "msbias/cli.hpp"
#include "msbias/errors.hpp"
#include "msbias/parallel.hpp"

namespace msbias::cli {

namespace {

// Seed streams of the individual estimators, mixed with the master seed.
enum EstimatorStream : std::uint64_t { kAlpha = 10, kBrownian = 11, kAcf = 12, kDiscrete = 13 };

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double observable_y(const RosslerState& z) { return z[1] + z[2]; }

struct MapStats {
  ErgodicAverageEstimate alpha;
  GreenKuboEstimate brownian;
};

}  // namespace

const ParameterRow& ParameterSet::find(const std::string& quantity, const std::string& fast_map,
                                       const std::string& method) const {
  for (const auto& r : rows) {
    if (r.quantity == quantity && r.fast_map == fast_map && (method.empty() || r.method == method)) return r;
  }
  throw EstimationError("parameter " + quantity + " (" + fast_map + (method.empty() ? "" : ", " + method) +
                        ") not found");
}

CirModel ParameterSet::hmc(const CirSlowParams& slow, double x0) const {
  return {slow.a,
          slow.b,
          find("alpha", "heun").value,
          find("beta_cont", "heun").value,
          find("sigma_squared", "heun", "brownian_path").value,
          x0};
}

CirModel ParameterSet::hmd(const CirSlowParams& slow, double x0) const {
  return {slow.a,
          slow.b,
          find("alpha", "euler").value,
          find("beta_disc", "euler").value,
          find("sigma_hat_squared_kappa", "euler", "brownian_path").value,
          x0};
}

ParameterSet estimate_parameters(const ExperimentConfig& config, unsigned workers,
                                 const std::function<void(const std::string&)>& log) {
  const auto& e = config.estimation;
  const auto& n = config.numerical;
  const auto& slow = config.physical.slow;
  const Rossler fast(config.physical.fast);
  const double map_dt = n.kappa / n.K;
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  auto setup_for = [&](StepperKind kind, EstimatorStream stream) {
    return FastEstimation<Rossler>{{fast, kind, map_dt, n.K},
                                   rossler_ic_sampler(e.burn_in),
                                   derive_seed(n.seed, static_cast<std::uint64_t>(kind), stream),
                                   workers};
  };
  auto half_square = [](const RosslerState& z) { return 0.5 * observable_y(z) * observable_y(z); };

  auto map_stats = [&](StepperKind kind) {
    MapStats s;
    s.alpha = estimate_ergodic_average(setup_for(kind, kAlpha), half_square, e.alpha_T, e.alpha_members, e.burn_in);
    say(std::string(to_string(kind)) + " map: alpha = " + fmt(s.alpha.value));
    s.brownian = green_kubo_brownian_path(setup_for(kind, kBrownian), observable_y, e.bp_epsilon, n.kappa, n.K,
                                          e.bp_members);
    say(std::string(to_string(kind)) + " map: Brownian-path sigma^2 = " + fmt(s.brownian.sigma_squared));
    return s;
  };

  ParameterSet p;
  auto add = [&](std::string q, std::string map, double v, double se, std::string method, std::string setting) {
    p.rows.push_back({std::move(q), std::move(map), v, se, std::move(method), std::move(setting)});
  };

  const MapStats heun = map_stats(StepperKind::Heun);
  add("alpha", "heun", heun.alpha.value, heun.alpha.standard_error, "ergodic_average",
      "T=" + fmt(e.alpha_T) + ";members=" + std::to_string(heun.alpha.members_used));
  add("sigma_squared", "heun", heun.brownian.sigma_squared, heun.brownian.standard_error, "brownian_path",
      "eps=" + fmt(e.bp_epsilon) + ";N=" + fmt(heun.brownian.cutoff));

  const auto acf = estimate_autocorrelation_ensemble(setup_for(StepperKind::Heun, kAcf), observable_y, e.acf_members,
                                                     static_cast<std::size_t>(std::llround(e.acf_member_T / n.kappa)),
                                                     e.acf_max_lag);
  const auto gk = green_kubo_acf_plateau(acf, {e.plateau_rel_tol, e.plateau_window_periods});
  say("heun map: ACF sigma^2 = " + fmt(gk.sigma_squared) + " (cutoff " + fmt(gk.cutoff) + ")");
  add("sigma_squared", "heun", gk.sigma_squared, gk.standard_error, "acf_integral",
      "cutoff=" + fmt(gk.cutoff) + ";window=" + fmt(gk.window) + ";period=" + fmt(acf_timescale(acf.pooled)));
  add("acf_c0", "heun", acf.pooled.values.front(), 0.0, "acf_integral", "members=" + std::to_string(e.acf_members));

  const auto series = sample_member_series(setup_for(StepperKind::Heun, kDiscrete), observable_y, e.discrete_members,
                                           e.discrete_samples);
  const auto disc = green_kubo_discrete(series);
  say("heun map: batched-sum sigma_hat^2 kappa = " + fmt(disc.sigma_squared * n.kappa));
  add("sigma_hat_squared_kappa", "heun", disc.sigma_squared * n.kappa, disc.standard_error * n.kappa, "discrete_sum",
      "block=" + fmt(disc.cutoff) + (disc.non_summable ? ";non_summable" : ""));

  const auto cont = cir_params_continuous(slow.a, slow.b, slow.c, heun.alpha.value, heun.brownian.sigma_squared);
  // Delta-method error of beta = c + s a^2 / (8 alpha b).
  const double shift = cont.beta - slow.c;
  const double beta_cont_se = std::hypot(shift / heun.brownian.sigma_squared * heun.brownian.standard_error,
                                         shift / heun.alpha.value * heun.alpha.standard_error);
  add("beta_cont", "heun", cont.beta, std::isfinite(beta_cont_se) ? beta_cont_se : 0.0, "derived", "");

  const MapStats euler = map_stats(StepperKind::Euler);
  add("alpha", "euler", euler.alpha.value, euler.alpha.standard_error, "ergodic_average",
      "T=" + fmt(e.alpha_T) + ";members=" + std::to_string(euler.alpha.members_used));
  add("sigma_hat_squared_kappa", "euler", euler.brownian.sigma_squared, euler.brownian.standard_error,
      "brownian_path", "eps=" + fmt(e.bp_epsilon) + ";N=" + fmt(euler.brownian.cutoff));
  const auto disc_params = cir_params_euler_discrete(slow.a, slow.b, slow.c, euler.alpha.value,
                                                     euler.brownian.sigma_squared, n.kappa);
  const double dshift = disc_params.beta - slow.c + n.kappa * slow.a * slow.a / (4.0 * slow.b);
  const double beta_disc_se = std::hypot(dshift / euler.brownian.sigma_squared * euler.brownian.standard_error,
                                         dshift / euler.alpha.value * euler.alpha.standard_error);
  add("beta_disc", "euler", disc_params.beta, std::isfinite(beta_disc_se) ? beta_disc_se : 0.0, "derived",
      "kappa=" + fmt(n.kappa));
  // h = a sqrt(x) at x = 1: h h' = a^2 / 2, E[f0^2] = 2 alpha.
  add("drift_bias_at_x1", "euler",
      euler_drift_bias(slow.a, 0.5 * slow.a, 2.0 * euler.alpha.value, n.kappa),
      n.kappa * 0.5 * slow.a * slow.a * euler.alpha.standard_error, "derived", "kappa=" + fmt(n.kappa));
  return p;
}

void write_parameters_csv(const ParameterSet& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "quantity,fast_map,value,standard_error,method,setting\n";
  for (const auto& r : p.rows) {
    out << r.quantity << ',' << r.fast_map << ',' << fmt(r.value) << ',' << fmt(r.standard_error) << ',' << r.method
        << ',' << r.setting << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

ParameterSet read_parameters_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read parameter file " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "quantity,fast_map,value,standard_error,method,setting") {
    throw std::runtime_error("unexpected header in " + path.string());
  }
  ParameterSet p;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() == 5) f.emplace_back();
    if (f.size() != 6) throw std::runtime_error("malformed row in " + path.string() + ": " + line);
    p.rows.push_back({f[0], f[1], std::strtod(f[2].c_str(), nullptr), std::strtod(f[3].c_str(), nullptr), f[4], f[5]});
  }
  return p;
}

double estimated_ensemble_seconds(StepperKind kind, std::size_t n_members, double epsilon, double kappa, int K,
                                  double t_end, double transient, unsigned workers) {
  // Measured single-core cost of one Rossler substep including the slow update.
  double ns = 6.4;
  if (kind == StepperKind::Heun) ns = 14.7;
  if (kind == StepperKind::Taylor2) ns = 26.0;
  const double slow_steps = std::ceil(t_end / (kappa * epsilon * epsilon));
  const double substeps = slow_steps * K + transient / (kappa / K);
  return static_cast<double>(n_members) * substeps * ns * 1e-9 / resolve_workers(workers);
}

std::string color_for_epsilon_index(std::size_t i) {
  static const char* colors[] = {"blue", "red", "yellow", "purple"};
  return i < 4 ? colors[i] : "gray";
}

}  // namespace msbias::cli
