#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "msbias/dynamics.hpp"
#include "msbias/integrators.hpp"
#include "msbias/parallel.hpp"

namespace msbias {

/// Where random fast initial conditions come from and when a relaxed draw is
/// accepted as lying on the attractor.
template <class State>
struct FastIcSampler {
  double box_half_width = 10.0;
  double transient = 25.0;
  double escape_bound = 1e6;
  int max_redraws = 10;
  /// Extra acceptance test on the post-transient state; empty accepts all.
  std::function<bool(const State&)> accept;
};

/// Coarse region around the Rossler attractor for the default parameters. Some
/// box draws drift away slowly without exceeding any escape bound within the
/// transient; they fail this test.
inline bool rossler_attractor_region(const RosslerState& z) {
  return std::abs(z[0]) < 20.0 && std::abs(z[1]) < 20.0 && z[2] >= 0.0 && z[2] < 80.0;
}

inline FastIcSampler<RosslerState> rossler_ic_sampler(double transient = 25.0) {
  FastIcSampler<RosslerState> s;
  s.transient = transient;
  s.accept = rossler_attractor_region;
  return s;
}

namespace detail {

template <class State>
State make_state(std::size_t dimension) {
  if constexpr (requires(State s) { s.resize(dimension); }) {
    return State(dimension, 0.0);
  } else {
    return State{};
  }
}

}  // namespace detail

/// Draws uniformly from the box, relaxes along the discrete fast map with step
/// `dt` (unscaled) for the sampler's transient and returns the endpoint.
/// Escaping or rejected draws are redrawn from the same stream.
template <FastSystem Fast>
typename Fast::State sample_fast_ic(const Fast& g, StepperKind kind, double dt,
                                    const FastIcSampler<typename Fast::State>& sampler,
                                    std::uint64_t seed) {
  if (!(sampler.transient > 0.0)) throw ConfigError("sample_fast_ic: transient must be positive");
  detail::require_positive_step(dt);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> box(-sampler.box_half_width, sampler.box_half_width);
  const long n_steps = std::lround(sampler.transient / dt);
  constexpr int chunk = 100;

  for (int attempt = 0; attempt <= sampler.max_redraws; ++attempt) {
    auto y = detail::make_state<typename Fast::State>(g.dimension());
    for (auto& c : y) c = box(rng);
    bool escaped = false;
    for (long done = 0; done < n_steps && !escaped; done += chunk) {
      y = fast_map(kind, g, y, dt, static_cast<int>(std::min<long>(chunk, n_steps - done)));
      const double m = max_abs(y);
      escaped = !(m <= sampler.escape_bound);
    }
    if (escaped) continue;
    if (sampler.accept && !sampler.accept(y)) continue;
    return y;
  }
  throw EstimationError("sample_fast_ic: no admissible initial condition after " +
                        std::to_string(sampler.max_redraws) + " redraws");
}

struct EnsembleConfig {
  std::size_t n_members = 10000;
  double epsilon = 0.05;
  double kappa = 0.5;
  int K = 50;
  double t_end = 2.5;
  StepperKind stepper = StepperKind::Euler;
  double x0 = 1.0;
  double transient = 25.0;
  std::uint64_t seed = 1;
  PositivityMode positivity = PositivityMode::ClampToZero;
  unsigned workers = 0;
};

void validate(const EnsembleConfig& config);

/// Final slow values in member order. Failed members are listed separately and
/// absent from `values`.
struct EnsembleResult {
  std::vector<double> values;
  std::vector<std::size_t> failed_members;
  std::size_t clamp_total = 0;
  std::size_t unreliable_members = 0;
  std::size_t n_steps = 0;
  double realized_t_end = 0.0;
  double wall_seconds = 0.0;

  /// More than 0.5% of members failed.
  bool valid(std::size_t n_members) const {
    return static_cast<double>(failed_members.size()) <= 0.005 * static_cast<double>(n_members);
  }
};

/// Seed stream tags; each (master seed, member) pair gets one stream per use.
inline constexpr std::uint64_t kIcStream = 1;

/// One ensemble: member i relaxes a fast initial condition seeded by
/// derive_seed(config.seed, i), then integrates the coupled system to t_end.
template <FastSystem Fast>
EnsembleResult run_ensemble(const MultiScaleSystem<Fast>& system_template, const EnsembleConfig& config,
                            const FastIcSampler<typename Fast::State>& sampler) {
  validate(config);
  const auto system = system_template.with_epsilon(config.epsilon);
  const StepPolicy policy(config.kappa, config.K, config.epsilon);
  const std::size_t n_steps = step_count(config.t_end, policy.slow_dt());
  auto ic = sampler;
  ic.transient = config.transient;

  struct Member {
    double x = std::numeric_limits<double>::quiet_NaN();
    std::size_t clamps = 0;
    bool failed = true;
  };
  std::vector<Member> members(config.n_members);
  const auto start = std::chrono::steady_clock::now();
  parallel_for(config.n_members, config.workers, [&](std::size_t i) {
    Member& m = members[i];
    try {
      const auto y0 = sample_fast_ic(system.fast(), config.stepper, policy.unscaled_fast_dt(), ic,
                                     derive_seed(config.seed, i, kIcStream));
      PositivityPolicy positivity(config.positivity);
      const auto s = advance(system, config.stepper, policy, config.x0, y0, n_steps, positivity);
      m.x = s.x;
      m.clamps = positivity.clamp_count();
      m.failed = !std::isfinite(s.x);
    } catch (const StepFailure&) {
    } catch (const EstimationError&) {
    }
  });

  EnsembleResult result;
  result.n_steps = n_steps;
  result.realized_t_end = static_cast<double>(n_steps) * policy.slow_dt();
  result.values.reserve(config.n_members);
  for (std::size_t i = 0; i < members.size(); ++i) {
    const Member& m = members[i];
    result.clamp_total += m.clamps;
    if (static_cast<double>(m.clamps) > kUnreliableClampFraction * static_cast<double>(n_steps)) {
      ++result.unreliable_members;
    }
    if (m.failed) {
      result.failed_members.push_back(i);
    } else {
      result.values.push_back(m.x);
    }
  }
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

/// Fixed-width histogram normalized to unit mass. Bin k of the grid covers
/// [k dx, (k+1) dx); `first_bin` is the grid index of density[0].
struct EmpiricalPdf {
  double bin_width = 0.005;
  long first_bin = 0;
  std::vector<double> density;
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;
  double mean_stderr = 0.0;

  std::size_t bins() const { return density.size(); }
  double edge(std::size_t k) const { return static_cast<double>(first_bin + static_cast<long>(k)) * bin_width; }
  double midpoint(std::size_t k) const {
    return (static_cast<double>(first_bin + static_cast<long>(k)) + 0.5) * bin_width;
  }
  std::vector<double> bin_edges() const;
};

/// Grid index of the bin holding v, robust to the rounding of v / dx.
long bin_index(double v, double bin_width);

/// Histogram of `values` on the grid aligned at 0. The optional span
/// [lo, hi) is widened as needed so that every value is counted.
EmpiricalPdf histogram(const std::vector<double>& values, double bin_width = 0.005);
EmpiricalPdf histogram(const std::vector<double>& values, double bin_width, double lo, double hi);

struct ComparisonReport {
  double l1_distance = 0.0;
  double ks_distance = 0.0;
  double mean_diff = 0.0;
  double mean_diff_relative = 0.0;
  double variance_ratio = 0.0;
};

struct AnalyticDensity {
  std::function<double(double)> pdf;
  /// CDF at each of the ascending points.
  std::function<std::vector<double>(const std::vector<double>&)> cdf_at;
  double mean = 0.0;
  double variance = 0.0;
};

/// l1 is sum |density_k - pdf(mid_k)| dx over the histogram bins; KS is taken
/// over the bin edges.
ComparisonReport compare_pdf(const EmpiricalPdf& emp, const AnalyticDensity& reference);

/// sup |F_n - F| over the samples, with F interpolated linearly from its values
/// on a uniform grid of `grid_points` spanning the samples.
double ks_distance(std::vector<double> samples, const AnalyticDensity& reference, std::size_t grid_points = 4001);

/// Standard error of the l1 distance by resampling the raw values.
double l1_bootstrap_stderr(const std::vector<double>& values, double bin_width, const AnalyticDensity& reference,
                           int resamples, std::uint64_t seed);

}  // namespace msbias
