#pragma once

#include <cstdint>
#include <vector>

namespace msbias {

/// dX = sigma a sqrt(X) dW + 2 alpha b (beta - X) dt, read in the Ito sense.
struct CirModel {
  double a = 0.1;
  double b = 0.005;
  double alpha = 28.4;
  double beta = 0.75;
  double sigma_squared = 0.14;
  double x0 = 1.0;

  double rate() const { return 2.0 * alpha * b; }
  /// Level of the equivalent Stratonovich equation, beta - sigma^2 a^2 / (8 alpha b).
  double stratonovich_level() const;
};

void validate(const CirModel& m);

/// X(t) / c_t is noncentral chi-squared with `dof` degrees of freedom and
/// noncentrality `noncentrality`.
struct CirTransitionDensity {
  double t = 0.0;
  double c_t = 0.0;
  double dof = 0.0;
  double noncentrality = 0.0;
};

CirTransitionDensity transition_params(const CirModel& m, double t);

/// Log density of the noncentral chi-squared law, summed as a Poisson mixture of
/// central laws outward from the dominant term. Returns -inf for x < 0.
double noncentral_chisq_logpdf(double x, double dof, double lambda);

/// Chernoff bound on P(X > x).
double noncentral_chisq_upper_tail_bound(double x, double dof, double lambda);

struct QuadratureMoments {
  double mass = 0.0;
  double mean = 0.0;
  double variance = 0.0;
  double upper = 0.0;
  double tail_bound = 0.0;
};

/// Mass, mean and variance of the noncentral chi-squared density by adaptive
/// quadrature on [0, d + lambda + 12 sd]; `tail_bound` bounds the mass beyond.
QuadratureMoments noncentral_chisq_quadrature(double dof, double lambda);

double cir_log_pdf(double x, const CirModel& m, double t);
double cir_pdf(double x, const CirModel& m, double t);

/// CDF at ascending points, accumulated panel by panel.
std::vector<double> cir_cdf(const std::vector<double>& points, const CirModel& m, double t);

struct MeanVariance {
  double mean = 0.0;
  double variance = 0.0;
};

MeanVariance cir_mean_variance(const CirModel& m, double t);

struct EmOptions {
  /// Include the Ito drift sigma^2 a^2 / 4 that turns the Stratonovich form
  /// into the model. Disabling it only serves to show the difference matters.
  bool ito_correction = true;
  unsigned workers = 0;
};

struct EmSamples {
  std::vector<double> values;
  std::size_t truncation_events = 0;
};

/// Full-truncation Euler-Maruyama endpoints of the Stratonovich form
///   dX = 2 alpha b (L - X) dt + sigma a sqrt(X) o dW,  L = stratonovich_level(),
/// one independent stream per path.
EmSamples cir_sample_em(const CirModel& m, double t, std::size_t n, double dt_sde, std::uint64_t seed,
                        const EmOptions& options = {});

}  // namespace msbias
