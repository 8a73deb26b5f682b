#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "msbias/dynamics.hpp"
#include "msbias/errors.hpp"
#include "msbias/state_ops.hpp"

namespace msbias {

enum class StepperKind { Euler, Heun, Taylor2 };

std::string_view to_string(StepperKind kind);
StepperKind parse_stepper(std::string_view name);

/// Finite-difference increment of the Taylor2 Jacobian-vector product.
inline double default_tau() { return std::sqrt(std::numeric_limits<double>::epsilon()); }

namespace detail {
inline void require_positive_step(double dt) {
  if (!(dt > 0.0)) throw ConfigError("step size must be positive");
}
}  // namespace detail

template <class Field, class S>
S euler_step(const Field& rhs, const S& z, double dt) {
  detail::require_positive_step(dt);
  return axpy(z, dt, rhs(z));
}

template <class Field, class S>
S heun_step(const Field& rhs, const S& z, double dt) {
  detail::require_positive_step(dt);
  const S v0 = rhs(z);
  const S v1 = rhs(axpy(z, dt, v0));
  return axpy(z, 0.5 * dt, sum_scaled(1.0, v0, 1.0, v1));
}

/// z + dt v + dt^2/2 v'v with v'v ~ (v(z + tau v) - v) / tau.
template <class Field, class S>
S taylor2_step(const Field& rhs, const S& z, double dt, double tau = default_tau()) {
  detail::require_positive_step(dt);
  if (!(tau > 0.0)) throw ConfigError("taylor2_step: tau must be positive");
  const S v = rhs(z);
  const S jvp = scaled_difference(rhs(axpy(z, tau, v)), v, 1.0 / tau);
  return axpy(axpy(z, dt, v), 0.5 * dt * dt, jvp);
}

template <class Field, class S>
S one_step(StepperKind kind, const Field& rhs, const S& z, double dt, double tau = default_tau()) {
  switch (kind) {
    case StepperKind::Euler: return euler_step(rhs, z, dt);
    case StepperKind::Heun: return heun_step(rhs, z, dt);
    case StepperKind::Taylor2: return taylor2_step(rhs, z, dt, tau);
  }
  throw ConfigError("unknown stepper kind");
}

/// `count` applications of the one-step method with step dt to an unscaled
/// fast field. This is the map Phi when dt = kappa/K and count = K.
template <FastSystem Fast>
typename Fast::State fast_map(StepperKind kind, const Fast& g, typename Fast::State y, double dt,
                              int count, double tau = default_tau()) {
  detail::require_positive_step(dt);
  switch (kind) {
    case StepperKind::Euler:
      for (int k = 0; k < count; ++k) y = axpy(y, dt, g(y));
      break;
    case StepperKind::Heun:
      for (int k = 0; k < count; ++k) {
        const auto v0 = g(y);
        const auto v1 = g(axpy(y, dt, v0));
        y = axpy(y, 0.5 * dt, sum_scaled(1.0, v0, 1.0, v1));
      }
      break;
    case StepperKind::Taylor2: {
      const double inv_tau = 1.0 / tau;
      for (int k = 0; k < count; ++k) {
        const auto v = g(y);
        const auto jvp = scaled_difference(g(axpy(y, tau, v)), v, inv_tau);
        y = axpy(axpy(y, dt, v), 0.5 * dt * dt, jvp);
      }
      break;
    }
  }
  return y;
}

/// The discrete fast map Phi: `substeps` applications of a one-step method with
/// unscaled step dt. Statistics of the fast dynamics are taken along this map.
template <FastSystem Fast>
struct DiscreteFastMap {
  Fast g;
  StepperKind kind = StepperKind::Heun;
  double dt = 0.01;
  int substeps = 1;

  typename Fast::State operator()(const typename Fast::State& y) const {
    return fast_map(kind, g, y, dt, substeps);
  }
  /// Unscaled time advanced by one application.
  double period() const { return dt * substeps; }
};

/// Slow step dt = kappa eps^2, fast step dt/K.
class StepPolicy {
 public:
  StepPolicy(double kappa, int substeps, double epsilon);

  double kappa() const { return kappa_; }
  int substeps() const { return substeps_; }
  double epsilon() const { return epsilon_; }

  double slow_dt() const { return kappa_ * epsilon_ * epsilon_; }
  double fast_dt() const { return slow_dt() / substeps_; }
  /// Fast step in unscaled time, kappa/K. Independent of epsilon.
  double unscaled_fast_dt() const { return kappa_ / substeps_; }

 private:
  double kappa_;
  int substeps_;
  double epsilon_;
};

enum class PositivityMode { ClampToZero, Reject };

std::string_view to_string(PositivityMode mode);
PositivityMode parse_positivity(std::string_view name);

/// Keeps the slow variable in [0, inf) and counts interventions per trajectory.
class PositivityPolicy {
 public:
  explicit PositivityPolicy(PositivityMode mode = PositivityMode::ClampToZero) : mode_(mode) {}

  PositivityMode mode() const { return mode_; }
  std::size_t clamp_count() const { return clamps_; }

  /// Returns x, or 0 when clamping. `clamped` is set when an intervention
  /// happened; Reject throws StepFailure instead.
  double admit(double x, std::size_t step_index, bool& clamped) const {
    if (x >= 0.0) return x;
    if (mode_ == PositivityMode::Reject) {
      throw StepFailure("slow variable left [0, inf)", step_index);
    }
    if (std::isnan(x)) return x;
    clamped = true;
    return 0.0;
  }

  void record_step(bool clamped) {
    if (clamped) ++clamps_;
  }

 private:
  PositivityMode mode_;
  std::size_t clamps_ = 0;
};

template <class State>
struct SlowFastState {
  double x;
  State y;
};

/// One slow step of the multiple-time-stepping scheme.
///
/// The fast state is advanced first by K substeps of kappa/K with the same
/// one-step method (unscaled form of eps^-2 g with step dt/K). The slow update
/// then uses y_n for Euler, (x_n, y_n) and (predictor, y_{n+1}) for Heun, and
/// for Taylor2 the difference quotient in x at frozen y_n.
template <FastSystem Fast>
SlowFastState<typename Fast::State> multiscale_step(const MultiScaleSystem<Fast>& system,
                                                    StepperKind kind, const StepPolicy& policy,
                                                    double x, const typename Fast::State& y,
                                                    PositivityPolicy& positivity,
                                                    std::size_t step_index = 0,
                                                    double tau = default_tau()) {
  const auto y_next =
      fast_map(kind, system.fast(), y, policy.unscaled_fast_dt(), policy.substeps(), tau);
  const double dt = policy.slow_dt();
  bool clamped = false;
  double x_next = 0.0;
  switch (kind) {
    case StepperKind::Euler:
      x_next = x + dt * system.slow_rhs(x, y);
      break;
    case StepperKind::Heun: {
      const double v0 = system.slow_rhs(x, y);
      const double predictor = positivity.admit(x + dt * v0, step_index, clamped);
      x_next = x + 0.5 * dt * (v0 + system.slow_rhs(predictor, y_next));
      break;
    }
    case StepperKind::Taylor2: {
      if (!(tau > 0.0)) throw ConfigError("multiscale_step: tau must be positive");
      const double v = system.slow_rhs(x, y);
      const double probe = positivity.admit(x + tau * v, step_index, clamped);
      const double jvp = (system.slow_rhs(probe, y) - v) / tau;
      x_next = x + dt * v + 0.5 * dt * dt * jvp;
      break;
    }
  }
  x_next = positivity.admit(x_next, step_index, clamped);
  positivity.record_step(clamped);
  return {x_next, y_next};
}

/// Number of slow steps covering [0, t_end]; t_end is realized as n * dt.
std::size_t step_count(double t_end, double slow_dt);

/// Fraction of clamped steps above which a trajectory is flagged unreliable.
inline constexpr double kUnreliableClampFraction = 1e-3;

template <class State>
struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<double> slow_values;
  std::optional<std::vector<State>> fast_values;
  std::size_t clamp_count = 0;
  std::size_t n_steps = 0;
  double final_x = 0.0;
  State final_y{};
  double realized_t_end = 0.0;

  bool reliable() const {
    return static_cast<double>(clamp_count) <= kUnreliableClampFraction * static_cast<double>(n_steps);
  }
};

/// Advances n_steps slow steps without recording. Non-finite slow values are
/// returned as-is; callers decide how to treat divergence.
template <FastSystem Fast>
SlowFastState<typename Fast::State> advance(const MultiScaleSystem<Fast>& system, StepperKind kind,
                                            const StepPolicy& policy, double x0,
                                            typename Fast::State y0, std::size_t n_steps,
                                            PositivityPolicy& positivity,
                                            double tau = default_tau()) {
  SlowFastState<typename Fast::State> s{x0, std::move(y0)};
  for (std::size_t n = 0; n < n_steps; ++n) {
    s = multiscale_step(system, kind, policy, s.x, s.y, positivity, n, tau);
    if (!std::isfinite(s.x)) break;
  }
  return s;
}

template <FastSystem Fast>
TrajectoryRecord<typename Fast::State> integrate(const MultiScaleSystem<Fast>& system,
                                                 StepperKind kind, const StepPolicy& policy,
                                                 double x0, const typename Fast::State& y0,
                                                 double t_end, std::size_t record_every,
                                                 PositivityMode mode = PositivityMode::ClampToZero,
                                                 bool record_fast = false,
                                                 double tau = default_tau()) {
  if (!(t_end > 0.0)) throw ConfigError("integrate: t_end must be positive");
  if (record_every < 1) throw ConfigError("integrate: record_every must be >= 1");
  if (policy.epsilon() != system.epsilon()) {
    throw ConfigError("integrate: step policy and system disagree on epsilon");
  }
  const double dt = policy.slow_dt();
  const std::size_t n_steps = step_count(t_end, dt);

  TrajectoryRecord<typename Fast::State> rec;
  rec.n_steps = n_steps;
  rec.realized_t_end = static_cast<double>(n_steps) * dt;
  if (record_fast) rec.fast_values.emplace();
  auto record = [&](std::size_t n, double x, const typename Fast::State& y) {
    rec.times.push_back(static_cast<double>(n) * dt);
    rec.slow_values.push_back(x);
    if (record_fast) rec.fast_values->push_back(y);
  };

  PositivityPolicy positivity(mode);
  SlowFastState<typename Fast::State> s{x0, y0};
  record(0, s.x, s.y);
  for (std::size_t n = 1; n <= n_steps; ++n) {
    s = multiscale_step(system, kind, policy, s.x, s.y, positivity, n - 1, tau);
    if (n % record_every == 0) record(n, s.x, s.y);
  }
  rec.clamp_count = positivity.clamp_count();
  rec.final_x = s.x;
  rec.final_y = s.y;
  return rec;
}

}  // namespace msbias
