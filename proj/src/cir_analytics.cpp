#include "msbias/cir_analytics.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <limits>
#include <random>

#include "msbias/errors.hpp"
#include "msbias/parallel.hpp"

namespace msbias {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2 = 0.69314718055994530942;

// Terms below the largest by this much in log space are dropped.
constexpr double kLogCut = 40.0;

double central_chisq_logpdf(double x, double nu) {
  if (x == 0.0) {
    if (nu < 2.0) return kInf;
    if (nu == 2.0) return -kLog2;
    return -kInf;
  }
  return (0.5 * nu - 1.0) * std::log(x) - 0.5 * x - 0.5 * nu * kLog2 - std::lgamma(0.5 * nu);
}

// One 61-point Gauss-Kronrod panel. Callers keep panels within a quarter
// standard deviation, where the densities here are resolved to rounding; an
// adaptive rule would chase the 1e-12 evaluation noise instead.
template <class F>
double integrate(F f, double lo, double hi) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 0, 0.0);
}

template <class F>
double integrate_panels(F f, double lo, double hi, double max_width) {
  const int pieces = std::max(1, static_cast<int>(std::ceil((hi - lo) / max_width)));
  double s = 0.0;
  for (int p = 0; p < pieces; ++p) s += integrate(f, lo + (hi - lo) * p / pieces, lo + (hi - lo) * (p + 1) / pieces);
  return s;
}

void require_model_time(const CirModel& m, double t) {
  validate(m);
  if (!(t > 0.0) || !std::isfinite(t)) throw DomainError("CIR transition density needs t > 0");
  if (m.sigma_squared == 0.0) throw DomainError("CIR transition density needs sigma^2 > 0");
}

}  // namespace

double CirModel::stratonovich_level() const {
  return beta - sigma_squared * a * a / (8.0 * alpha * b);
}

void validate(const CirModel& m) {
  if (!(m.a > 0.0 && m.b > 0.0 && m.alpha > 0.0 && m.beta > 0.0 && m.sigma_squared >= 0.0 && m.x0 >= 0.0)) {
    throw DomainError("CirModel: a, b, alpha, beta must be positive and sigma^2, x0 >= 0");
  }
}

CirTransitionDensity transition_params(const CirModel& m, double t) {
  require_model_time(m, t);
  const double decay = std::exp(-m.rate() * t);
  CirTransitionDensity d;
  d.t = t;
  d.c_t = m.sigma_squared * m.a * m.a / (8.0 * m.alpha * m.b) * (1.0 - decay);
  d.dof = 8.0 * m.alpha * m.beta * m.b / (m.a * m.a * m.sigma_squared);
  d.noncentrality = decay * m.x0 / d.c_t;
  return d;
}

double noncentral_chisq_logpdf(double x, double k, double lambda) {
  if (!(k > 0.0) || !(lambda >= 0.0) || !std::isfinite(k) || !std::isfinite(lambda)) {
    throw DomainError("noncentral_chisq_logpdf: need dof > 0 and lambda >= 0");
  }
  if (std::isnan(x)) throw DomainError("noncentral_chisq_logpdf: x is NaN");
  if (x < 0.0) return -kInf;
  if (lambda == 0.0) return central_chisq_logpdf(x, k);
  if (x == 0.0) {
    // Only the j = 0 term survives at the origin.
    return -0.5 * lambda + central_chisq_logpdf(0.0, k);
  }
  if (std::isinf(x)) return -kInf;

  const double half_lambda = 0.5 * lambda;
  const double log_hl = std::log(half_lambda);
  const double log_hx = std::log(0.5 * x);
  auto log_term = [&](double j) {
    return -half_lambda + j * log_hl - std::lgamma(j + 1.0) + central_chisq_logpdf(x, k + 2.0 * j);
  };

  // Consecutive terms have ratio (lambda x / 4) / ((j + 1)(j + k/2)); the
  // dominant index is where that ratio crosses one.
  const double p = 1.0 + 0.5 * k;
  const double q = 0.5 * k - 0.25 * lambda * x;
  const double root = 0.5 * (-p + std::sqrt(p * p - 4.0 * q));
  const double j0 = std::max(0.0, std::floor(root));

  const double peak = log_term(j0);
  double sum = 1.0;
  // Upward: log t_{j+1} = log t_j + log(lambda/2) + log(x/2) - log(j+1) - log(j + k/2).
  double lt = peak;
  for (double j = j0;; j += 1.0) {
    lt += log_hl + log_hx - std::log(j + 1.0) - std::log(j + 0.5 * k);
    if (lt < peak - kLogCut) break;
    sum += std::exp(lt - peak);
  }
  lt = peak;
  for (double j = j0; j > 0.0; j -= 1.0) {
    lt -= log_hl + log_hx - std::log(j) - std::log(j - 1.0 + 0.5 * k);
    if (lt < peak - kLogCut) break;
    sum += std::exp(lt - peak);
  }
  return peak + std::log(sum);
}

double noncentral_chisq_upper_tail_bound(double x, double k, double lambda) {
  if (x <= k + lambda) return 1.0;
  // log E[exp(sX)] - s x, minimized over 0 < s < 1/2.
  auto f = [&](double s) { return -s * x + lambda * s / (1.0 - 2.0 * s) - 0.5 * k * std::log1p(-2.0 * s); };
  const auto [s, value] = boost::math::tools::brent_find_minima(f, 0.0, 0.5 - 1e-12, 52);
  (void)s;
  return std::min(1.0, std::exp(value));
}

QuadratureMoments noncentral_chisq_quadrature(double k, double lambda) {
  const double mean = k + lambda;
  const double sd = std::sqrt(2.0 * k + 4.0 * lambda);
  QuadratureMoments q;
  q.upper = mean + 12.0 * sd;
  q.tail_bound = noncentral_chisq_upper_tail_bound(q.upper, k, lambda);
  auto pdf = [&](double x) { return std::exp(noncentral_chisq_logpdf(x, k, lambda)); };
  const double w = 0.25 * sd;
  const double m0 = integrate_panels(pdf, 0.0, q.upper, w);
  const double m1 = integrate_panels([&](double x) { return x * pdf(x); }, 0.0, q.upper, w);
  const double m2 = integrate_panels([&](double x) { return (x - mean) * (x - mean) * pdf(x); }, 0.0, q.upper, w);
  q.mass = m0;
  q.mean = m1 / m0;
  q.variance = m2 / m0 - (q.mean - mean) * (q.mean - mean);
  return q;
}

double cir_log_pdf(double x, const CirModel& m, double t) {
  const auto d = transition_params(m, t);
  return noncentral_chisq_logpdf(x / d.c_t, d.dof, d.noncentrality) - std::log(d.c_t);
}

double cir_pdf(double x, const CirModel& m, double t) { return std::exp(cir_log_pdf(x, m, t)); }

std::vector<double> cir_cdf(const std::vector<double>& points, const CirModel& m, double t) {
  const auto d = transition_params(m, t);
  auto pdf = [&](double x) {
    return std::exp(noncentral_chisq_logpdf(x / d.c_t, d.dof, d.noncentrality) - std::log(d.c_t));
  };
  const auto mv = cir_mean_variance(m, t);
  const double sd = std::sqrt(mv.variance);
  std::vector<double> out(points.size());
  double acc = 0.0, from = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double to = std::max(0.0, points[i]);
    if (to < from) throw ConfigError("cir_cdf: points must be ascending");
    if (to > from) acc += integrate_panels(pdf, from, to, 0.25 * sd);
    from = to;
    out[i] = std::min(1.0, acc);
  }
  return out;
}

MeanVariance cir_mean_variance(const CirModel& m, double t) {
  const auto d = transition_params(m, t);
  return {d.c_t * (d.dof + d.noncentrality), d.c_t * d.c_t * (2.0 * d.dof + 4.0 * d.noncentrality)};
}

EmSamples cir_sample_em(const CirModel& m, double t, std::size_t n, double dt_sde, std::uint64_t seed,
                        const EmOptions& options) {
  validate(m);
  if (!(t > 0.0)) throw ConfigError("cir_sample_em: t must be positive");
  if (n < 1) throw ConfigError("cir_sample_em: n must be >= 1");
  if (!(dt_sde > 0.0) || dt_sde > t / 100.0 * (1.0 + 1e-12)) {
    throw ConfigError("cir_sample_em: dt_sde must lie in (0, t/100]");
  }
  const long steps = std::lround(t / dt_sde);
  const double dt = t / static_cast<double>(steps);
  const double k = m.rate();
  const double level = m.stratonovich_level();
  const double noise = std::sqrt(m.sigma_squared) * m.a;
  const double ito = options.ito_correction ? 0.25 * m.sigma_squared * m.a * m.a : 0.0;
  const double sqdt = std::sqrt(dt);

  EmSamples out;
  out.values.resize(n);
  std::vector<std::size_t> truncations(n, 0);
  parallel_for(n, options.workers, [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(seed, i, 2));
    std::normal_distribution<double> normal;
    double x = m.x0;
    std::size_t hits = 0;
    for (long s = 0; s < steps; ++s) {
      const double xp = std::max(x, 0.0);
      if (x < 0.0) ++hits;
      x = x + (k * (level - xp) + ito) * dt + noise * std::sqrt(xp) * sqdt * normal(rng);
    }
    out.values[i] = std::max(x, 0.0);
    truncations[i] = hits;
  });
  for (const auto h : truncations) out.truncation_events += h;
  return out;
}

}  // namespace msbias
