#include "msbias/homogenization.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>
#include <numeric>

namespace msbias {

namespace {

// FFTW's planner is not thread-safe; execution on distinct arrays is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

std::size_t fft_size(std::size_t n) {
  std::size_t m = 1;
  while (m < 2 * n) m <<= 1;
  return m;
}

double trapezoid(const std::vector<double>& c, std::size_t upto, double h) {
  if (upto == 0) return 0.0;
  double s = 0.5 * (c[0] + c[upto]);
  for (std::size_t k = 1; k < upto; ++k) s += c[k];
  return s * h;
}

std::size_t cutoff_index(const AutocorrelationEstimate& acf, double cutoff) {
  if (!(cutoff >= 0.0)) throw ConfigError("green_kubo_acf: cutoff must be >= 0");
  const double k = cutoff / acf.lag_spacing;
  const auto idx = static_cast<std::size_t>(std::floor(k + 1e-9));
  if (idx >= acf.values.size()) throw ConfigError("green_kubo_acf: cutoff beyond the largest lag");
  return idx;
}

}  // namespace

namespace detail {

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (const double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace detail

std::string_view to_string(GreenKuboMethod m) {
  switch (m) {
    case GreenKuboMethod::AcfIntegral: return "acf_integral";
    case GreenKuboMethod::BrownianPathVariance: return "brownian_path";
    case GreenKuboMethod::DiscreteSum: return "discrete_sum";
  }
  return "unknown";
}

std::string_view to_string(CirVariant v) { return v == CirVariant::Continuous ? "continuous" : "euler_discrete"; }

std::vector<double> AutocorrelationEstimate::lag_times() const {
  std::vector<double> t(values.size());
  for (std::size_t k = 0; k < t.size(); ++k) t[k] = lag_time(k);
  return t;
}

HomogenizedCirParams cir_params_continuous(double a, double b, double c, double alpha, double sigma_sq) {
  if (!(alpha > 0.0) || !(b > 0.0)) throw ConfigError("cir_params_continuous: need alpha > 0 and b > 0");
  return {alpha, sigma_sq, c + sigma_sq * a * a / (8.0 * alpha * b), CirVariant::Continuous, 0.0};
}

HomogenizedCirParams cir_params_euler_discrete(double a, double b, double c, double alpha, double s, double kappa) {
  if (!(alpha > 0.0) || !(b > 0.0)) throw ConfigError("cir_params_euler_discrete: need alpha > 0 and b > 0");
  if (!(kappa > 0.0)) throw ConfigError("cir_params_euler_discrete: kappa must be positive");
  const double beta = c + s * a * a / (8.0 * alpha * b) - kappa * a * a / (4.0 * b);
  return {alpha, s, beta, CirVariant::EulerDiscrete, kappa};
}

CirModel cir_model(const HomogenizedCirParams& p, double a, double b, double x0) {
  return {a, b, p.alpha, p.beta, p.sigma_squared, x0};
}

double euler_drift_bias(double h_val, double h_prime_val, double Ef0sq, double kappa) {
  return -0.5 * kappa * h_val * h_prime_val * Ef0sq;
}

std::vector<double> lagged_product_sums(const std::vector<double>& x, std::size_t L) {
  const std::size_t n = x.size();
  if (L >= n) throw ConfigError("lagged_product_sums: lag exceeds series length");
  const std::size_t m = fft_size(n);
  double* buf = fftw_alloc_real(m);
  fftw_complex* spectrum = fftw_alloc_complex(m / 2 + 1);
  fftw_plan fwd, inv;
  {
    std::lock_guard lock(fftw_planner_mutex());
    fwd = fftw_plan_dft_r2c_1d(static_cast<int>(m), buf, spectrum, FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(static_cast<int>(m), spectrum, buf, FFTW_ESTIMATE);
  }
  std::copy(x.begin(), x.end(), buf);
  std::fill(buf + n, buf + m, 0.0);
  fftw_execute(fwd);
  for (std::size_t k = 0; k < m / 2 + 1; ++k) {
    spectrum[k][0] = spectrum[k][0] * spectrum[k][0] + spectrum[k][1] * spectrum[k][1];
    spectrum[k][1] = 0.0;
  }
  fftw_execute(inv);
  std::vector<double> out(buf, buf + L + 1);
  for (double& v : out) v /= static_cast<double>(m);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
  }
  fftw_free(buf);
  fftw_free(spectrum);
  return out;
}

AutocorrelationEstimate estimate_autocorrelation(const std::vector<double>& series, double dt, double max_lag,
                                                 bool remove_mean) {
  if (!(dt > 0.0)) throw ConfigError("estimate_autocorrelation: dt must be positive");
  if (!(max_lag >= 0.0)) throw ConfigError("estimate_autocorrelation: max_lag must be >= 0");
  if (series.empty() || static_cast<double>(series.size()) * dt < 10.0 * max_lag) {
    throw EstimationError("estimate_autocorrelation: series shorter than 10 max_lag");
  }
  AutocorrelationEstimate acf;
  acf.lag_spacing = dt;
  acf.observable_mean_removed = remove_mean;
  acf.sample_count = series.size();
  acf.empirical_mean = detail::mean_of(series);
  std::vector<double> x = series;
  if (remove_mean) {
    for (double& v : x) v -= acf.empirical_mean;
  }
  const std::size_t L = static_cast<std::size_t>(std::floor(max_lag / dt + 1e-9));
  acf.values = lagged_product_sums(x, L);
  for (double& v : acf.values) v /= static_cast<double>(series.size());
  return acf;
}

GreenKuboEstimate green_kubo_acf(const AutocorrelationEstimate& acf, double cutoff) {
  const std::size_t idx = cutoff_index(acf, cutoff);
  GreenKuboEstimate e;
  e.method = GreenKuboMethod::AcfIntegral;
  e.sigma_squared = 2.0 * trapezoid(acf.values, idx, acf.lag_spacing);
  e.cutoff = acf.lag_time(idx);
  return e;
}

GreenKuboEstimate green_kubo_acf(const EnsembleAutocorrelation& acf, double cutoff) {
  GreenKuboEstimate e = green_kubo_acf(acf.pooled, cutoff);
  const std::size_t idx = cutoff_index(acf.pooled, cutoff);
  std::vector<double> per;
  per.reserve(acf.members.size());
  for (const auto& c : acf.members) per.push_back(2.0 * trapezoid(c, idx, acf.pooled.lag_spacing));
  e.standard_error = detail::sample_sd(per) / std::sqrt(static_cast<double>(per.size()));
  return e;
}

double acf_period(const AutocorrelationEstimate& acf) {
  std::vector<double> crossings;
  for (std::size_t k = 1; k < acf.values.size() && crossings.size() < 21; ++k) {
    const double a = acf.values[k - 1], b = acf.values[k];
    if ((a > 0.0) != (b > 0.0) && a != b) {
      crossings.push_back(acf.lag_time(k - 1) + acf.lag_spacing * a / (a - b));
    }
  }
  if (crossings.size() < 3) throw EstimationError("acf_period: too few sign changes to find a period");
  return 2.0 * (crossings.back() - crossings.front()) / static_cast<double>(crossings.size() - 1);
}

std::vector<double> running_green_kubo(const std::vector<double>& c, double lag_spacing) {
  std::vector<double> running(c.size(), 0.0);
  for (std::size_t k = 1; k < c.size(); ++k) running[k] = running[k - 1] + lag_spacing * (c[k - 1] + c[k]);
  return running;
}

namespace {

std::size_t lags_in(double span, double lag_spacing) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(span / lag_spacing)));
}

// Mean of running[j] over j in (k - w, k].
double window_mean(const std::vector<double>& running, std::size_t k, std::size_t w) {
  double s = 0.0;
  for (std::size_t j = k + 1 - w; j <= k; ++j) s += running[j];
  return s / static_cast<double>(w);
}

}  // namespace

double plateau_cutoff(const AutocorrelationEstimate& acf, double period, const PlateauRule& rule) {
  if (!(period > 0.0)) throw ConfigError("plateau_cutoff: period must be positive");
  if (!(rule.rel_tol > 0.0) || rule.window_periods < 1) throw ConfigError("plateau_cutoff: invalid rule");
  const std::size_t P = lags_in(period, acf.lag_spacing);
  const std::size_t W = P * static_cast<std::size_t>(rule.window_periods);
  const std::size_t n = acf.values.size();
  const auto running = running_green_kubo(acf.values, acf.lag_spacing);
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t k = 0; k < n; ++k) prefix[k + 1] = prefix[k] + running[k];
  auto smooth = [&](std::size_t k) { return (prefix[k + 1] - prefix[k + 1 - W]) / static_cast<double>(W); };
  // The condition has to hold at every lag of one full period; a single hit
  // is usually a turning point of the decaying oscillation.
  std::size_t held = 0;
  for (std::size_t k = std::max(3 * P, W + P); k < n; ++k) {
    const double now = smooth(k);
    held = std::abs(now - smooth(k - P)) < rule.rel_tol * std::abs(now) ? held + 1 : 0;
    if (held >= P) return acf.lag_time(k);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

double acf_timescale(const AutocorrelationEstimate& acf) {
  try {
    return acf_period(acf);
  } catch (const EstimationError&) {
  }
  const double c0 = acf.values.empty() ? 0.0 : acf.values.front();
  if (!(c0 > 0.0)) throw EstimationError("acf_timescale: C(0) must be positive");
  for (std::size_t k = 1; k < acf.values.size(); ++k) {
    if (acf.values[k] < c0 / std::exp(1.0)) return acf.lag_time(k);
  }
  throw EstimationError("acf_timescale: correlations do not decay within the available lags");
}

GreenKuboEstimate green_kubo_acf_windowed(const AutocorrelationEstimate& acf, double cutoff, double window) {
  const std::size_t idx = cutoff_index(acf, cutoff);
  const std::size_t W = lags_in(window, acf.lag_spacing);
  if (W > idx + 1) throw ConfigError("green_kubo_acf_windowed: window longer than the cutoff");
  GreenKuboEstimate e;
  e.method = GreenKuboMethod::AcfIntegral;
  e.sigma_squared = window_mean(running_green_kubo(acf.values, acf.lag_spacing), idx, W);
  e.cutoff = acf.lag_time(idx);
  e.window = acf.lag_time(W);
  return e;
}

GreenKuboEstimate green_kubo_acf_windowed(const EnsembleAutocorrelation& acf, double cutoff, double window) {
  GreenKuboEstimate e = green_kubo_acf_windowed(acf.pooled, cutoff, window);
  const std::size_t idx = cutoff_index(acf.pooled, cutoff);
  const std::size_t W = lags_in(window, acf.pooled.lag_spacing);
  std::vector<double> per;
  per.reserve(acf.members.size());
  for (const auto& c : acf.members) {
    per.push_back(window_mean(running_green_kubo(c, acf.pooled.lag_spacing), idx, W));
  }
  e.standard_error = detail::sample_sd(per) / std::sqrt(static_cast<double>(per.size()));
  return e;
}

namespace {

template <class Acf>
GreenKuboEstimate plateau_estimate(const Acf& acf, const AutocorrelationEstimate& pooled, const PlateauRule& rule) {
  const double period = acf_timescale(pooled);
  const double cutoff = plateau_cutoff(pooled, period, rule);
  if (std::isnan(cutoff)) {
    throw EstimationError("green_kubo_acf_plateau: running integral never settles; use longer series or more members");
  }
  return green_kubo_acf_windowed(acf, cutoff, period * rule.window_periods);
}

}  // namespace

GreenKuboEstimate green_kubo_acf_plateau(const AutocorrelationEstimate& acf, const PlateauRule& rule) {
  return plateau_estimate(acf, acf, rule);
}

GreenKuboEstimate green_kubo_acf_plateau(const EnsembleAutocorrelation& acf, const PlateauRule& rule) {
  return plateau_estimate(acf, acf.pooled, rule);
}

GreenKuboEstimate brownian_path_variance(const std::vector<double>& w, std::size_t N, double dt) {
  if (w.size() < 3) throw EstimationError("brownian_path_variance: need at least 3 paths");
  if (N < 1 || !(dt > 0.0)) throw ConfigError("brownian_path_variance: need N >= 1 and dt > 0");
  const double n = static_cast<double>(w.size());
  const double m = detail::mean_of(w);
  double m2 = 0.0, m4 = 0.0;
  for (const double v : w) {
    const double d = (v - m) * (v - m);
    m2 += d;
    m4 += d * d;
  }
  const double s2 = m2 / (n - 1.0);
  m4 /= n;
  // Var(s^2) = (mu4 - sigma^4 (n - 3) / (n - 1)) / n.
  const double var_s2 = std::max(0.0, (m4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n);
  const double scale = 1.0 / (static_cast<double>(N) * dt);
  GreenKuboEstimate e;
  e.method = GreenKuboMethod::BrownianPathVariance;
  e.sigma_squared = s2 * scale;
  e.standard_error = std::sqrt(var_s2) * scale;
  e.cutoff = static_cast<double>(N);
  return e;
}

GreenKuboEstimate green_kubo_discrete(const std::vector<std::vector<double>>& series, DiscreteSumLadder* ladder) {
  std::size_t shortest = std::numeric_limits<std::size_t>::max();
  for (const auto& s : series) shortest = std::min(shortest, s.size());
  if (series.empty() || shortest < 20) throw EstimationError("green_kubo_discrete: series shorter than 20 blocks");

  DiscreteSumLadder local;
  DiscreteSumLadder& lad = ladder ? *ladder : local;
  lad = {};
  for (std::size_t nb = 1; shortest / nb >= 20; nb *= 2) {
    std::vector<double> q;
    for (const auto& s : series) {
      for (std::size_t start = 0; start + nb <= s.size(); start += nb) {
        const double sum = std::accumulate(s.begin() + static_cast<long>(start),
                                           s.begin() + static_cast<long>(start + nb), 0.0);
        q.push_back(sum * sum / static_cast<double>(nb));
      }
    }
    lad.block_lengths.push_back(nb);
    lad.values.push_back(detail::mean_of(q));
    lad.standard_errors.push_back(detail::sample_sd(q) / std::sqrt(static_cast<double>(q.size())));
  }
  GreenKuboEstimate e;
  e.method = GreenKuboMethod::DiscreteSum;
  e.sigma_squared = lad.values.back();
  e.standard_error = lad.standard_errors.back();
  e.cutoff = static_cast<double>(lad.block_lengths.back());
  const std::size_t r = lad.values.size();
  e.non_summable = r >= 2 && lad.values[r - 1] > 1.5 * lad.values[r - 2] && lad.values[r - 1] > 0.0;
  return e;
}

GreenKuboEstimate green_kubo_discrete(const std::vector<double>& series, DiscreteSumLadder* ladder) {
  return green_kubo_discrete(std::vector<std::vector<double>>{series}, ladder);
}

double green_kubo_discrete_sum_form(const std::vector<double>& series, std::size_t max_lag) {
  const auto s = lagged_product_sums(series, max_lag);
  double out = 0.0;
  for (std::size_t k = 0; k <= max_lag; ++k) {
    const double c = s[k] / static_cast<double>(series.size() - k);
    out += k == 0 ? c : 2.0 * c;
  }
  return out;
}

}  // namespace msbias
