#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string_view>
#include <vector>

#include "msbias/cir_analytics.hpp"
#include "msbias/ensemble.hpp"
#include "msbias/integrators.hpp"
#include "msbias/parallel.hpp"

namespace msbias {

struct ErgodicAverageEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  std::size_t sample_count = 0;
  double burn_in = 0.0;
  std::size_t members_used = 0;
  std::size_t members_excluded = 0;
};

struct AutocorrelationEstimate {
  double lag_spacing = 0.0;
  std::vector<double> values;
  bool observable_mean_removed = false;
  double empirical_mean = 0.0;
  std::size_t sample_count = 0;

  double lag_time(std::size_t k) const { return static_cast<double>(k) * lag_spacing; }
  std::vector<double> lag_times() const;
};

enum class GreenKuboMethod { AcfIntegral, BrownianPathVariance, DiscreteSum };
std::string_view to_string(GreenKuboMethod m);

struct GreenKuboEstimate {
  double sigma_squared = 0.0;
  double standard_error = 0.0;
  GreenKuboMethod method = GreenKuboMethod::AcfIntegral;
  /// Integration cutoff (ACF) or block length in samples (discrete sums).
  double cutoff = 0.0;
  /// Width of the averaging window of the windowed ACF integral, 0 otherwise.
  double window = 0.0;
  /// Discrete sums only: block sums still grow with the block length.
  bool non_summable = false;
  bool negative() const { return sigma_squared < 0.0; }
};

enum class CirVariant { Continuous, EulerDiscrete };
std::string_view to_string(CirVariant v);

struct HomogenizedCirParams {
  double alpha = 0.0;
  /// sigma^2 (continuous) or sigma_hat^2 kappa (discrete), in SDE time units.
  double sigma_squared = 0.0;
  double beta = 0.0;
  CirVariant variant = CirVariant::Continuous;
  double kappa = 0.0;
};

/// beta = c + sigma^2 a^2 / (8 alpha b).
HomogenizedCirParams cir_params_continuous(double a, double b, double c, double alpha, double sigma_sq);
/// beta = c + s a^2 / (8 alpha b) - kappa a^2 / (4 b) with s = sigma_hat^2 kappa.
HomogenizedCirParams cir_params_euler_discrete(double a, double b, double c, double alpha,
                                               double sigma_hat_sq_kappa, double kappa);
CirModel cir_model(const HomogenizedCirParams& p, double a, double b, double x0);

/// Extra Euler drift -kappa h h' E[f0^2] / 2.
double euler_drift_bias(double h_val, double h_prime_val, double Ef0sq, double kappa);

/// Biased (1/N) lagged products of one series up to `max_lag` (time units).
/// Requires N dt >= 10 max_lag.
AutocorrelationEstimate estimate_autocorrelation(const std::vector<double>& series, double dt, double max_lag,
                                                 bool remove_mean = false);

/// Sums s_k = sum_i x_i x_{i+k} for k = 0..max_lag_index, by FFT.
std::vector<double> lagged_product_sums(const std::vector<double>& series, std::size_t max_lag_index);

/// 2 * trapezoid integral of C over [0, cutoff].
GreenKuboEstimate green_kubo_acf(const AutocorrelationEstimate& acf, double integration_cutoff);

/// Oscillation period of C, from the mean spacing of its sign changes.
double acf_period(const AutocorrelationEstimate& acf);

/// Running Green-Kubo integral 2 * trapezoid of c over [0, t_k], per lag k.
std::vector<double> running_green_kubo(const std::vector<double>& c, double lag_spacing);

struct PlateauRule {
  double rel_tol = 0.01;
  /// Length of the smoothing window of the running integral, in periods.
  int window_periods = 4;
};

/// First lag L where the running integral, averaged over a window of
/// rule.window_periods periods, changes by less than rel_tol of its value
/// across one period, and keeps doing so for one more period. NaN if that
/// never happens within the available lags.
double plateau_cutoff(const AutocorrelationEstimate& acf, double period, const PlateauRule& rule = {});

/// acf_period when C oscillates, otherwise the lag where C falls below C(0)/e.
double acf_timescale(const AutocorrelationEstimate& acf);

/// Running integral averaged over the window (cutoff - window, cutoff]. For an
/// oscillating C this removes the leftover oscillation of the plain integral.
GreenKuboEstimate green_kubo_acf_windowed(const AutocorrelationEstimate& acf, double cutoff, double window);

/// Windowed integral at the plateau cutoff. Throws EstimationError when no
/// plateau is found.
GreenKuboEstimate green_kubo_acf_plateau(const AutocorrelationEstimate& acf, const PlateauRule& rule = {});

/// Var[w_N] / (N dt) from per-member path endpoints, with the standard error of
/// a sample variance.
GreenKuboEstimate brownian_path_variance(const std::vector<double>& endpoints, std::size_t N, double dt);

/// Block length ladder of the batched-sums estimator n_b^-1 E[(block sum)^2].
struct DiscreteSumLadder {
  std::vector<std::size_t> block_lengths;
  std::vector<double> values;
  std::vector<double> standard_errors;
};

/// Batched-sums form of the discrete Green-Kubo sum over one or more series of
/// the map. Block lengths double from 1 while at least 20 blocks remain. The
/// estimate is the largest rung; non_summable is set when the last doubling
/// still grows the value by more than half.
GreenKuboEstimate green_kubo_discrete(const std::vector<std::vector<double>>& series,
                                      DiscreteSumLadder* ladder = nullptr);
GreenKuboEstimate green_kubo_discrete(const std::vector<double>& series, DiscreteSumLadder* ladder = nullptr);

/// E[f0^2] + 2 sum_{n=1}^{max_lag} E[f0 Phi^n f0], the truncated double-sum
/// form (used to cross-check the batched form on surrogates).
double green_kubo_discrete_sum_form(const std::vector<double>& series, std::size_t max_lag);

struct TotalDerivativeAverage {
  double value = 0.0;
  double standard_error = 0.0;
  /// |A(T) - A(0)| / (2 T) for the supplied state function A.
  double boundary_bound = 0.0;
  std::size_t sample_count = 0;
};

/// Shared setup of the fast-statistics estimators.
template <FastSystem Fast>
struct FastEstimation {
  DiscreteFastMap<Fast> map;
  FastIcSampler<typename Fast::State> sampler;
  std::uint64_t seed = 1;
  unsigned workers = 0;
};

inline constexpr std::uint64_t kEstimationStream = 3;

/// observable(y_j) for j = 1..n along the map from y0. Stops early (shorter
/// result) if the state stops being finite.
template <FastSystem Fast, class Obs>
std::vector<double> sample_series(const DiscreteFastMap<Fast>& map, const Obs& observable,
                                  typename Fast::State y, std::size_t n) {
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    y = map(y);
    const double v = observable(y);
    if (!std::isfinite(v) || !all_finite(y)) break;
    out.push_back(v);
  }
  return out;
}

namespace detail {

/// Runs body(i, y0) for each member with a relaxed initial condition; members
/// whose initial condition cannot be drawn are reported through `ok`.
template <FastSystem Fast, class Body>
void for_each_member(const FastEstimation<Fast>& setup, std::size_t n_members, std::vector<char>& ok,
                     const Body& body) {
  ok.assign(n_members, 0);
  parallel_for(n_members, setup.workers, [&](std::size_t i) {
    typename Fast::State y0;
    try {
      y0 = sample_fast_ic(setup.map.g, setup.map.kind, setup.map.dt, setup.sampler,
                          derive_seed(setup.seed, i, kEstimationStream));
    } catch (const EstimationError&) {
      return;
    }
    ok[i] = body(i, y0) ? 1 : 0;
  });
}

inline void require_exclusion_rate(std::size_t excluded, std::size_t n, double limit, const char* who) {
  if (static_cast<double>(excluded) > limit * static_cast<double>(n)) {
    throw EstimationError(std::string(who) + ": " + std::to_string(excluded) + " of " + std::to_string(n) +
                          " members diverged");
  }
}

double mean_of(const std::vector<double>& v);
double sample_sd(const std::vector<double>& v);

}  // namespace detail

/// Time-and-ensemble average of `observable` along the map over (burn_in, T].
/// The sampler's transient is the burn-in. Members that diverge are excluded;
/// more than 1% exclusions is an error.
template <FastSystem Fast, class Obs>
ErgodicAverageEstimate estimate_ergodic_average(const FastEstimation<Fast>& setup, const Obs& observable, double T,
                                                std::size_t n_ensemble, double burn_in) {
  if (!(burn_in > 0.0) || !(T > burn_in)) throw ConfigError("estimate_ergodic_average: need T > burn_in > 0");
  if (n_ensemble < 2) throw ConfigError("estimate_ergodic_average: need at least 2 members");
  FastEstimation<Fast> s = setup;
  s.sampler.transient = burn_in;
  const std::size_t n = static_cast<std::size_t>(std::llround((T - burn_in) / s.map.period()));
  if (n < 1) throw ConfigError("estimate_ergodic_average: no samples after burn-in");

  std::vector<double> means(n_ensemble, 0.0);
  std::vector<char> ok;
  detail::for_each_member(s, n_ensemble, ok, [&](std::size_t i, typename Fast::State y) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      y = s.map(y);
      sum += observable(y);
    }
    means[i] = sum / static_cast<double>(n);
    return std::isfinite(means[i]);
  });

  std::vector<double> used;
  for (std::size_t i = 0; i < n_ensemble; ++i) {
    if (ok[i]) used.push_back(means[i]);
  }
  const std::size_t excluded = n_ensemble - used.size();
  detail::require_exclusion_rate(excluded, n_ensemble, 0.01, "estimate_ergodic_average");
  ErgodicAverageEstimate e;
  e.value = detail::mean_of(used);
  e.standard_error = detail::sample_sd(used) / std::sqrt(static_cast<double>(used.size()));
  e.sample_count = n * used.size();
  e.burn_in = burn_in;
  e.members_used = used.size();
  e.members_excluded = excluded;
  return e;
}

/// Pooled autocorrelation of `observable` sampled once per map application,
/// with per-member functions kept for error bars.
struct EnsembleAutocorrelation {
  AutocorrelationEstimate pooled;
  std::vector<std::vector<double>> members;
  std::size_t members_excluded = 0;
};

template <FastSystem Fast, class Obs>
EnsembleAutocorrelation estimate_autocorrelation_ensemble(const FastEstimation<Fast>& setup, const Obs& observable,
                                                          std::size_t n_members, std::size_t samples_per_member,
                                                          double max_lag) {
  const double dt = setup.map.period();
  if (static_cast<double>(samples_per_member) * dt < 10.0 * max_lag) {
    throw EstimationError("estimate_autocorrelation_ensemble: series shorter than 10 max_lag");
  }
  const std::size_t L = static_cast<std::size_t>(std::floor(max_lag / dt + 1e-9));
  std::vector<std::vector<double>> sums(n_members);
  std::vector<double> means(n_members, 0.0);
  std::vector<char> ok;
  detail::for_each_member(setup, n_members, ok, [&](std::size_t i, const typename Fast::State& y0) {
    const auto x = sample_series(setup.map, observable, y0, samples_per_member);
    if (x.size() < samples_per_member) return false;
    sums[i] = lagged_product_sums(x, L);
    means[i] = detail::mean_of(x);
    return true;
  });

  EnsembleAutocorrelation out;
  out.pooled.lag_spacing = dt;
  out.pooled.values.assign(L + 1, 0.0);
  std::size_t used = 0;
  double mean = 0.0;
  const double inv_n = 1.0 / static_cast<double>(samples_per_member);
  for (std::size_t i = 0; i < n_members; ++i) {
    if (!ok[i]) continue;
    ++used;
    mean += means[i];
    std::vector<double> c(L + 1);
    for (std::size_t k = 0; k <= L; ++k) {
      c[k] = sums[i][k] * inv_n;
      out.pooled.values[k] += c[k];
    }
    out.members.push_back(std::move(c));
  }
  out.members_excluded = n_members - used;
  detail::require_exclusion_rate(out.members_excluded, n_members, 0.01, "estimate_autocorrelation_ensemble");
  for (double& v : out.pooled.values) v /= static_cast<double>(used);
  out.pooled.empirical_mean = mean / static_cast<double>(used);
  out.pooled.sample_count = used * samples_per_member;
  return out;
}

/// Green-Kubo integral of the pooled ACF with the member-to-member spread of
/// the same integral as its error bar.
GreenKuboEstimate green_kubo_acf(const EnsembleAutocorrelation& acf, double integration_cutoff);
GreenKuboEstimate green_kubo_acf_windowed(const EnsembleAutocorrelation& acf, double cutoff, double window);
GreenKuboEstimate green_kubo_acf_plateau(const EnsembleAutocorrelation& acf, const PlateauRule& rule = {});

/// Brownian-path estimator: each member sums w_{n+1} = w_n + (dt / eps) y_n
/// over N = floor(1/eps^2) slow steps dt = kappa eps^2, with y sampled by the
/// fast map with period kappa (K substeps of kappa/K). Returns Var[w_N]/(N dt),
/// which estimates sigma_hat^2 kappa of the sampled series.
template <FastSystem Fast, class Obs>
GreenKuboEstimate green_kubo_brownian_path(const FastEstimation<Fast>& setup, const Obs& observable, double epsilon,
                                           double kappa, int K, std::size_t n_ensemble) {
  if (!(epsilon > 0.0) || epsilon > 0.05) throw ConfigError("green_kubo_brownian_path: need 0 < eps <= 0.05");
  if (n_ensemble < 3) throw ConfigError("green_kubo_brownian_path: need at least 3 members");
  FastEstimation<Fast> s = setup;
  s.map.dt = kappa / K;
  s.map.substeps = K;
  const std::size_t N = static_cast<std::size_t>(std::floor(1.0 / (epsilon * epsilon) + 1e-9));
  const double dt = kappa * epsilon * epsilon;
  const double increment = dt / epsilon;

  std::vector<double> w(n_ensemble, 0.0);
  std::vector<char> ok;
  detail::for_each_member(s, n_ensemble, ok, [&](std::size_t i, typename Fast::State y) {
    double acc = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      acc += increment * observable(y);
      y = s.map(y);
    }
    w[i] = acc;
    return std::isfinite(acc);
  });
  std::vector<double> used;
  for (std::size_t i = 0; i < n_ensemble; ++i) {
    if (ok[i]) used.push_back(w[i]);
  }
  detail::require_exclusion_rate(n_ensemble - used.size(), n_ensemble, 0.01, "green_kubo_brownian_path");
  return brownian_path_variance(used, N, dt);
}

/// Series of `observable` from several members, each `samples` long, for the
/// discrete Green-Kubo estimator.
template <FastSystem Fast, class Obs>
std::vector<std::vector<double>> sample_member_series(const FastEstimation<Fast>& setup, const Obs& observable,
                                                      std::size_t n_members, std::size_t samples) {
  std::vector<std::vector<double>> out(n_members);
  std::vector<char> ok;
  detail::for_each_member(setup, n_members, ok, [&](std::size_t i, const typename Fast::State& y0) {
    out[i] = sample_series(setup.map, observable, y0, samples);
    return out[i].size() == samples;
  });
  std::vector<std::vector<double>> kept;
  for (std::size_t i = 0; i < n_members; ++i) {
    if (ok[i]) kept.push_back(std::move(out[i]));
  }
  detail::require_exclusion_rate(n_members - kept.size(), n_members, 0.01, "sample_member_series");
  return kept;
}

/// Time average of `derivative` (a total time derivative of `state_function`
/// along the flow) over one trajectory of length T after the sampler's
/// transient, sampled at every map application. The standard error comes from
/// `batches` batch means.
template <FastSystem Fast, class Deriv, class Func>
TotalDerivativeAverage total_derivative_average(const FastEstimation<Fast>& setup, const Deriv& derivative,
                                                const Func& state_function, double T, std::size_t batches = 20) {
  if (!(T > 0.0)) throw ConfigError("total_derivative_average: T must be positive");
  if (batches < 2) throw ConfigError("total_derivative_average: need at least 2 batches");
  auto y = sample_fast_ic(setup.map.g, setup.map.kind, setup.map.dt, setup.sampler,
                          derive_seed(setup.seed, 0, kEstimationStream));
  const std::size_t n = static_cast<std::size_t>(std::llround(T / setup.map.period()));
  const std::size_t per = n / batches;
  if (per < 1) throw ConfigError("total_derivative_average: fewer samples than batches");
  const double a0 = state_function(y);
  std::vector<double> batch(batches, 0.0);
  double sum = 0.0;
  for (std::size_t j = 0; j < per * batches; ++j) {
    const double v = derivative(y);
    sum += v;
    batch[j / per] += v;
    y = setup.map(y);
  }
  if (!std::isfinite(sum)) throw EstimationError("total_derivative_average: trajectory diverged");
  for (double& b : batch) b /= static_cast<double>(per);
  TotalDerivativeAverage r;
  r.sample_count = per * batches;
  r.value = sum / static_cast<double>(r.sample_count);
  r.standard_error = detail::sample_sd(batch) / std::sqrt(static_cast<double>(batches));
  const double t_realized = static_cast<double>(r.sample_count) * setup.map.period();
  r.boundary_bound = std::abs(state_function(y) - a0) / (2.0 * t_realized);
  return r;
}

}  // namespace msbias
