#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "msbias/cir_analytics.hpp"
#include "msbias/ensemble.hpp"
#include "msbias/errors.hpp"

using namespace msbias;

namespace {

MultiScaleSystem<Rossler> cir_rossler(double eps = 0.05) {
  return make_cir_rossler_system(CirSlowParams{}, RosslerParams{}, eps);
}

EnsembleConfig small_config(StepperKind kind, std::size_t n) {
  EnsembleConfig c;
  c.n_members = n;
  c.stepper = kind;
  c.seed = 2024;
  c.workers = 1;
  return c;
}

double mass(const EmpiricalPdf& p) {
  return std::accumulate(p.density.begin(), p.density.end(), 0.0) * p.bin_width;
}

AnalyticDensity uniform01() {
  return {[](double x) { return x >= 0.0 && x < 1.0 ? 1.0 : 0.0; },
          [](const std::vector<double>& xs) {
            std::vector<double> out;
            for (const double x : xs) out.push_back(std::clamp(x, 0.0, 1.0));
            return out;
          },
          0.5, 1.0 / 12.0};
}

}  // namespace

TEST_CASE("histogram of a single repeated value") {
  const auto p = histogram(std::vector<double>(10, 0.0025), 0.005);
  REQUIRE(p.bins() == 1);
  CHECK(p.first_bin == 0);
  CHECK(p.edge(0) == 0.0);
  CHECK(p.density[0] == doctest::Approx(200.0).epsilon(1e-12));
  CHECK(p.mean == doctest::Approx(0.0025).epsilon(1e-15));
  CHECK(p.variance < 1e-30);
}

TEST_CASE("values on a bin edge fall in the right-hand bin") {
  CHECK(bin_index(0.005, 0.005) == 1);
  CHECK(bin_index(0.0049999999, 0.005) == 0);
  CHECK(bin_index(-0.005, 0.005) == -1);
  // 0.3 / 0.1 rounds below 3 in floating point; the value still sits on edge 3 * 0.1.
  CHECK(bin_index(3 * 0.1, 0.1) == 3);
  for (int k = 0; k < 2000; ++k) {
    const double e = k * 0.005;
    CHECK(bin_index(e, 0.005) == k);
  }

  const auto p = histogram({0.005, 0.0025}, 0.005);
  REQUIRE(p.bins() == 2);
  CHECK(p.density[0] == doctest::Approx(100.0));
  CHECK(p.density[1] == doctest::Approx(100.0));
  CHECK(p.edge(1) == 0.005);
}

TEST_CASE("uniform samples give unit density and unit mass") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(1000000);
  for (double& x : v) x = u(rng);
  const auto p = histogram(v, 0.005, 0.0, 1.0);
  CHECK(p.bins() == 200);
  CHECK(mass(p) == doctest::Approx(1.0).epsilon(1e-12));
  for (const double d : p.density) CHECK(std::abs(d - 1.0) < 0.06);
  const double raw = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  CHECK(p.mean == raw);
  CHECK(p.mean_stderr == doctest::Approx(std::sqrt(p.variance / 1e6)));

  const auto r = compare_pdf(p, uniform01());
  CHECK(r.l1_distance < 0.02);
  CHECK(r.ks_distance < 0.003);
  CHECK(std::abs(r.mean_diff) < 3.0 * p.mean_stderr);
  CHECK(r.variance_ratio == doctest::Approx(1.0).epsilon(0.01));
  CHECK(ks_distance(v, uniform01()) < 0.003);
}

TEST_CASE("histogram span and validation") {
  const auto p = histogram({0.2, 0.3}, 0.01, 0.0, 0.25);
  CHECK(p.first_bin == 0);
  CHECK(p.edge(p.bins()) == doctest::Approx(0.31));
  CHECK(mass(p) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(histogram({}, 0.005), ConfigError);
  CHECK_THROWS_AS(histogram({1.0}, 0.0), ConfigError);
  CHECK_THROWS_AS(histogram({NAN}, 0.005), ConfigError);
}

TEST_CASE("a CIR density binned onto its own grid compares closely") {
  const CirModel m{0.1, 0.005, 28.4, 0.75123, 0.140, 1.0};
  const double t = 2.5;
  const auto mv = cir_mean_variance(m, t);
  AnalyticDensity ref{[&](double x) { return cir_pdf(x, m, t); },
                      [&](const std::vector<double>& p) { return cir_cdf(p, m, t); }, mv.mean, mv.variance};

  // Bin masses from the exact CDF form an infinite-sample histogram.
  EmpiricalPdf p;
  p.bin_width = 0.005;
  p.first_bin = bin_index(mv.mean - 10 * std::sqrt(mv.variance), 0.005);
  const long last = bin_index(mv.mean + 10 * std::sqrt(mv.variance), 0.005);
  p.density.resize(static_cast<std::size_t>(last - p.first_bin + 1));
  const auto cdf = cir_cdf(p.bin_edges(), m, t);
  for (std::size_t k = 0; k < p.bins(); ++k) p.density[k] = (cdf[k + 1] - cdf[k]) / p.bin_width;
  p.n = 1;
  p.mean = mv.mean;
  p.variance = mv.variance;
  const auto r = compare_pdf(p, ref);
  // Midpoint-versus-bin-average error: dx^2 / 24 max|pdf''| per unit length.
  CHECK(r.l1_distance < 2e-3);
  CHECK(r.ks_distance < 1e-6);
  CHECK(r.mean_diff == 0.0);
}

TEST_CASE("fast initial conditions are deterministic and on the attractor") {
  const Rossler g;
  const auto s = rossler_ic_sampler(25.0);
  const auto a = sample_fast_ic(g, StepperKind::Heun, 0.01, s, 99);
  const auto b = sample_fast_ic(g, StepperKind::Heun, 0.01, s, 99);
  const auto c = sample_fast_ic(g, StepperKind::Heun, 0.01, s, 100);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(rossler_attractor_region(a));
  CHECK(max_abs(g(a)) < 1e3);

  FastIcSampler<RosslerState> bad = s;
  bad.accept = [](const RosslerState&) { return false; };
  CHECK_THROWS_AS(sample_fast_ic(g, StepperKind::Heun, 0.01, bad, 1), EstimationError);
  bad.transient = 0.0;
  CHECK_THROWS_AS(sample_fast_ic(g, StepperKind::Heun, 0.01, bad, 1), ConfigError);
}

TEST_CASE("relaxed initial conditions sample the invariant measure") {
  // Half the mean square of y over relaxed endpoints; heavy tails make its
  // standard error about 2.5 at 1000 draws.
  const Rossler g;
  auto half_mean_square = [&](double transient, int n, double& se) {
    const auto s = rossler_ic_sampler(transient);
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto y = sample_fast_ic(g, StepperKind::Heun, 0.01, s, derive_seed(7, static_cast<std::uint64_t>(i), 1));
      const double v = 0.5 * (y[1] + y[2]) * (y[1] + y[2]);
      sum += v;
      sq += v * v;
    }
    const double m = sum / n;
    se = std::sqrt((sq / n - m * m) / n);
    return m;
  };
  double se = 0.0;
  const double short_relax = half_mean_square(25.0, 1000, se);
  MESSAGE("transient 25: ", short_relax, " +- ", se);
  CHECK(std::abs(short_relax - 28.4) < 3.0 * se);
  const double long_relax = half_mean_square(100.0, 4000, se);
  MESSAGE("transient 100: ", long_relax, " +- ", se);
  CHECK(std::abs(long_relax - 28.4) < 3.0 * se);
}

TEST_CASE("frozen dynamics return the initial slow value") {
  SlowCoupling<std::vector<double>> coupling{[](double x) { return std::sqrt(x); }, [](double) { return 0.0; },
                                             [](const std::vector<double>&) { return 0.0; },
                                             [](double, const std::vector<double>&) { return 0.0; }};
  const MultiScaleSystem<DynamicFastSystem> sys(DynamicFastSystem::frozen(2), coupling, 0.05);
  for (const auto kind : {StepperKind::Euler, StepperKind::Heun, StepperKind::Taylor2}) {
    auto cfg = small_config(kind, 7);
    cfg.x0 = 0.625;
    const auto r = run_ensemble(sys, cfg, FastIcSampler<std::vector<double>>{});
    REQUIRE(r.values.size() == 7);
    for (const double x : r.values) CHECK(x == 0.625);
    CHECK(r.failed_members.empty());
  }
}

TEST_CASE("one member reproduces integrate with the derived seed") {
  const auto sys = cir_rossler();
  for (const auto kind : {StepperKind::Euler, StepperKind::Heun, StepperKind::Taylor2}) {
    const auto cfg = small_config(kind, 1);
    const auto r = run_ensemble(sys, cfg, rossler_ic_sampler());
    const StepPolicy policy(cfg.kappa, cfg.K, cfg.epsilon);
    const auto y0 = sample_fast_ic(sys.fast(), kind, policy.unscaled_fast_dt(), rossler_ic_sampler(cfg.transient),
                                   derive_seed(cfg.seed, 0, kIcStream));
    const auto rec = integrate(sys, kind, policy, cfg.x0, y0, cfg.t_end, 100);
    REQUIRE(r.values.size() == 1);
    CHECK(r.values[0] == rec.final_x);
    CHECK(r.realized_t_end == rec.realized_t_end);
    CHECK(r.n_steps == 2000);
  }
}

TEST_CASE("ensembles are identical across worker counts") {
  const auto sys = cir_rossler();
  auto cfg = small_config(StepperKind::Heun, 40);
  const auto one = run_ensemble(sys, cfg, rossler_ic_sampler());
  cfg.workers = 3;
  const auto three = run_ensemble(sys, cfg, rossler_ic_sampler());
  const auto again = run_ensemble(sys, cfg, rossler_ic_sampler());
  CHECK(one.values == three.values);
  CHECK(three.values == again.values);
  CHECK(one.clamp_total == three.clamp_total);
}

TEST_CASE("Euler ensemble mean sits near the discrete homogenized mean") {
  const auto r = run_ensemble(cir_rossler(), small_config(StepperKind::Euler, 2000), rossler_ic_sampler());
  CHECK(r.valid(2000));
  CHECK(r.unreliable_members == 0);
  const auto p = histogram(r.values);
  MESSAGE("Euler mean ", p.mean, " +- ", p.mean_stderr);
  CHECK(p.mean > 0.70);
  CHECK(p.mean < 0.80);
  CHECK(mass(p) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ensemble configuration is validated") {
  auto cfg = small_config(StepperKind::Euler, 0);
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = small_config(StepperKind::Euler, 1);
  cfg.K = 0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = small_config(StepperKind::Euler, 1);
  cfg.x0 = -1.0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
}
