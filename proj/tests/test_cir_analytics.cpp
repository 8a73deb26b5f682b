#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/non_central_chi_squared.hpp>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "msbias/cir_analytics.hpp"
#include "msbias/ensemble.hpp"
#include "msbias/errors.hpp"

using namespace msbias;

namespace {

CirModel hmc() { return {0.1, 0.005, 28.4, 0.75123, 0.140, 1.0}; }
CirModel hmd() { return {0.1, 0.005, 28.4, 0.50123, 0.140, 1.0}; }

AnalyticDensity density(const CirModel& m, double t) {
  const auto mv = cir_mean_variance(m, t);
  return {[m, t](double x) { return cir_pdf(x, m, t); },
          [m, t](const std::vector<double>& p) { return cir_cdf(p, m, t); }, mv.mean, mv.variance};
}

}  // namespace

TEST_CASE("transition parameters at the experiment point") {
  const auto d = transition_params(hmc(), 2.5);
  const double c = 0.0014 / 1.136 * (1.0 - std::exp(-0.71));
  CHECK(d.c_t == doctest::Approx(c).epsilon(1e-12));
  CHECK(d.c_t == doctest::Approx(6.27e-4).epsilon(2e-3));
  CHECK(d.dof == doctest::Approx(8.0 * 28.4 * 0.75123 * 0.005 / 0.0014).epsilon(1e-12));
  CHECK(d.dof == doctest::Approx(610).epsilon(1e-3));
  CHECK(d.noncentrality == doctest::Approx(784).epsilon(1e-3));
}

TEST_CASE("transition parameter structure") {
  const auto far = transition_params(hmc(), 200.0);
  CHECK(far.noncentrality < 1e-20);
  CHECK(far.c_t == doctest::Approx(0.0014 / 1.136).epsilon(1e-12));
  auto doubled = hmc();
  doubled.beta *= 2.0;
  const auto a = transition_params(hmc(), 2.5), b = transition_params(doubled, 2.5);
  CHECK(b.dof == doctest::Approx(2.0 * a.dof).epsilon(1e-14));
  CHECK(b.c_t == a.c_t);
  CHECK(b.noncentrality == a.noncentrality);
  CHECK_THROWS_AS(transition_params(hmc(), 0.0), DomainError);
  CHECK_THROWS_AS(transition_params(hmc(), -1.0), DomainError);
}

TEST_CASE("log pdf special cases") {
  CHECK(noncentral_chisq_logpdf(0.0, 2.0, 0.0) == doctest::Approx(std::log(0.5)).epsilon(1e-15));
  CHECK(noncentral_chisq_logpdf(-1.0, 3.0, 2.0) == -INFINITY);
  CHECK(noncentral_chisq_logpdf(0.0, 5.0, 2.0) == -INFINITY);
  CHECK_THROWS_AS(noncentral_chisq_logpdf(1.0, 0.0, 1.0), DomainError);
  CHECK_THROWS_AS(noncentral_chisq_logpdf(1.0, 2.0, -1.0), DomainError);
  for (const double k : {0.5, 1.0, 2.0, 7.3, 610.0}) {
    const boost::math::chi_squared_distribution<double> chi(k);
    for (const double x : {0.01, 0.7, 3.0, 12.0, 600.0}) {
      const double p = boost::math::pdf(chi, x);
      // Where the oracle underflows, compare with the closed form in log space.
      const double expected = p > 1e-280 ? std::log(p)
                                         : (0.5 * k - 1.0) * std::log(x) - 0.5 * x - 0.5 * k * std::log(2.0) -
                                               std::lgamma(0.5 * k);
      CHECK(noncentral_chisq_logpdf(x, k, 0.0) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("log pdf matches an independent noncentral chi-squared implementation") {
  for (const auto& [k, lambda] : {std::pair{2.0, 0.5}, std::pair{5.0, 10.0}, std::pair{30.0, 80.0},
                                  std::pair{610.0, 784.0}, std::pair{0.8, 3.0}}) {
    const boost::math::non_central_chi_squared_distribution<double> dist(k, lambda);
    const double mean = k + lambda, sd = std::sqrt(2 * k + 4 * lambda);
    for (double z = -4.0; z <= 6.0; z += 0.5) {
      const double x = mean + z * sd;
      if (x <= 0.0) continue;
      CAPTURE(k);
      CAPTURE(x);
      CHECK(std::exp(noncentral_chisq_logpdf(x, k, lambda)) == doctest::Approx(boost::math::pdf(dist, x)).epsilon(1e-9));
    }
  }
}

TEST_CASE("log pdf stays finite far out in the tails at large dof") {
  for (const double x : {50.0, 200.0, 3000.0, 6000.0}) {
    const double v = noncentral_chisq_logpdf(x, 610.0, 784.0);
    CHECK(std::isfinite(v));
    CHECK(v < -50.0);
  }
  // No jumps where the dominant Poisson index moves: each value sits on the
  // chord of its neighbours up to rounding.
  for (double x = 900.0; x < 1900.0; x += 0.37) {
    const double h = 1e-4;
    const double mid = 0.5 * (noncentral_chisq_logpdf(x - h, 610.0, 784.0) + noncentral_chisq_logpdf(x + h, 610.0, 784.0));
    CHECK(std::abs(noncentral_chisq_logpdf(x, 610.0, 784.0) - mid) <= 1e-10);
  }
}

TEST_CASE("normalization and moment identities by quadrature") {
  const auto q = noncentral_chisq_quadrature(610.0, 784.0);
  CHECK(std::abs(q.mass - 1.0) <= 1e-8);
  CHECK(q.tail_bound <= 1e-12);
  CHECK(q.mean == doctest::Approx(1394.0).epsilon(1e-6));
  CHECK(q.variance == doctest::Approx(2.0 * 610.0 + 4.0 * 784.0).epsilon(1e-6));
}

TEST_CASE("CIR densities integrate to one") {
  for (const auto& m : {hmc(), hmd()}) {
    for (const double t : {0.5, 2.5, 10.0}) {
      const auto mv = cir_mean_variance(m, t);
      const double upper = mv.mean + 12.0 * std::sqrt(mv.variance);
      const auto d = transition_params(m, t);
      CAPTURE(t);
      CHECK(std::abs(cir_cdf({upper}, m, t)[0] - 1.0) <= 1e-8);
      CHECK(noncentral_chisq_upper_tail_bound(upper / d.c_t, d.dof, d.noncentrality) < 1e-10);
    }
  }
}

TEST_CASE("analytic means") {
  const double hmc_mean = cir_mean_variance(hmc(), 2.5).mean;
  const double hmd_mean = cir_mean_variance(hmd(), 2.5).mean;
  const double decay = std::exp(-0.284 * 2.5);
  CHECK(hmc_mean == doctest::Approx(decay + 0.75123 * (1.0 - decay)).epsilon(1e-12));
  CHECK(hmc_mean == doctest::Approx(0.8735).epsilon(5e-4));
  CHECK(hmd_mean == doctest::Approx(0.7464).epsilon(5e-4));
  CHECK((hmc_mean - hmd_mean) / hmc_mean == doctest::Approx(0.145).epsilon(0.01));
  CHECK(cir_mean_variance(hmc(), 500.0).mean == doctest::Approx(0.75123).epsilon(1e-12));
  // HMD lies to the left of HMC.
  const auto e = density(hmd(), 2.5);
  const auto c = density(hmc(), 2.5);
  CHECK(e.pdf(0.7) > c.pdf(0.7));
  CHECK(e.pdf(0.95) < c.pdf(0.95));
}

TEST_CASE("mode sits near the mean at large dof") {
  const auto m = hmc();
  const auto mv = cir_mean_variance(m, 2.5);
  double best = 0.0, arg = 0.0;
  for (double x = 0.5; x < 1.3; x += 1e-4) {
    const double p = cir_pdf(x, m, 2.5);
    if (p > best) {
      best = p;
      arg = x;
    }
  }
  CHECK(std::abs(arg - mv.mean) < 0.25 * std::sqrt(mv.variance));
}

TEST_CASE("noise-free sampler relaxes exponentially") {
  auto m = hmc();
  m.sigma_squared = 0.0;
  const auto s = cir_sample_em(m, 2.5, 4, 2.5 / 20000, 3);
  const double expected = m.beta + (m.x0 - m.beta) * std::exp(-m.rate() * 2.5);
  for (const double v : s.values) CHECK(v == doctest::Approx(expected).epsilon(1e-4));
  CHECK(s.truncation_events == 0);
}

TEST_CASE("sampler matches the exact density") {
  const auto m = hmc();
  const double t = 2.5;
  const auto s = cir_sample_em(m, t, 20000, 1e-3, 99);
  const auto ref = density(m, t);
  CHECK(ks_distance(s.values, ref) <= 0.02);
  const double n = static_cast<double>(s.values.size());
  const double mean = std::accumulate(s.values.begin(), s.values.end(), 0.0) / n;
  CHECK(std::abs(mean - ref.mean) <= 3.0 * std::sqrt(ref.variance / n));

  // Without the Ito drift the sampler settles toward the lower Stratonovich level.
  const auto raw = cir_sample_em(m, t, 20000, 1e-3, 99, {false, 0});
  const double raw_mean = std::accumulate(raw.values.begin(), raw.values.end(), 0.0) / n;
  CHECK(raw_mean < mean);

  CHECK_THROWS_AS(cir_sample_em(m, t, 10, t / 50, 1), ConfigError);
}

TEST_CASE("sampler output does not depend on the worker count") {
  const auto a = cir_sample_em(hmc(), 1.0, 64, 0.01, 5, {true, 1});
  const auto b = cir_sample_em(hmc(), 1.0, 64, 0.01, 5, {true, 3});
  CHECK(a.values == b.values);
}
