#pragma once

#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "msbias/errors.hpp"

namespace msbias {

/// Autonomous fast vector field g in unscaled time. The 1/eps^2 factor is
/// applied by the stepper, so the same object drives both the scaled
/// simulation and the unscaled statistics.
template <class F>
concept FastSystem = requires(const F& f, const typename F::State& y) {
  typename F::State;
  { f(y) } -> std::same_as<typename F::State>;
  { f.dimension() } -> std::convertible_to<std::size_t>;
};

struct RosslerParams {
  double r = 0.25;
  double s = 0.25;
  double u = 7.0;
};

using RosslerState = std::array<double, 3>;

/// Unscaled Rossler field (-z2-z3, z1+r z2, s+(z1-u) z3). Throws DomainError on
/// non-finite input.
RosslerState rossler_rhs(const RosslerState& z, const RosslerParams& p);

/// Slow-coupling observable y = z2 + z3.
double rossler_observable(const RosslerState& z);

/// Trace of the Rossler Jacobian, r + z1 - u.
double rossler_divergence(const RosslerState& z, const RosslerParams& p);

class Rossler {
 public:
  using State = RosslerState;

  Rossler() = default;
  explicit Rossler(RosslerParams p) : p_(p) {}

  static constexpr std::size_t dimension() { return 3; }
  const RosslerParams& params() const { return p_; }

  // Unchecked: the hot loop of every ensemble runs through here, divergence is
  // detected per member instead.
  State operator()(const State& z) const noexcept {
    return {-z[1] - z[2], z[0] + p_.r * z[1], p_.s + (z[0] - p_.u) * z[2]};
  }

 private:
  RosslerParams p_{};
};

/// Type-erased fast system for ad hoc fields (tests, custom registrations).
class DynamicFastSystem {
 public:
  using State = std::vector<double>;
  using Rhs = std::function<State(const State&)>;

  DynamicFastSystem(std::size_t dimension, Rhs rhs);

  std::size_t dimension() const { return dimension_; }
  State operator()(const State& y) const { return rhs_(y); }

  /// g == 0 in the given dimension.
  static DynamicFastSystem frozen(std::size_t dimension);

 private:
  std::size_t dimension_;
  Rhs rhs_;
};

/// Vector fields of the slow equation  x' = (1/eps) h(x) f0(y) + f(x, y).
template <class State>
struct SlowCoupling {
  std::function<double(double)> h;
  std::function<double(double)> h_prime;
  std::function<double(const State&)> f0;
  std::function<double(double, const State&)> f;
};

template <FastSystem Fast>
class MultiScaleSystem {
 public:
  using State = typename Fast::State;
  static constexpr std::size_t slow_dimension = 1;

  MultiScaleSystem(Fast fast, SlowCoupling<State> coupling, double epsilon)
      : fast_(std::move(fast)), coupling_(std::move(coupling)), epsilon_(epsilon) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
      throw ConfigError("MultiScaleSystem: epsilon must be positive and finite");
    }
  }

  const Fast& fast() const { return fast_; }
  const SlowCoupling<State>& coupling() const { return coupling_; }
  double epsilon() const { return epsilon_; }

  double slow_rhs(double x, const State& y) const {
    return (1.0 / epsilon_) * coupling_.h(x) * coupling_.f0(y) + coupling_.f(x, y);
  }

  /// eps^-2 g(y), the fast field in the scaled time of the coupled system.
  State fast_rhs(const State& y) const {
    State v = fast_(y);
    const double scale = 1.0 / (epsilon_ * epsilon_);
    for (auto& c : v) c *= scale;
    return v;
  }

  MultiScaleSystem with_epsilon(double epsilon) const {
    return MultiScaleSystem(fast_, coupling_, epsilon);
  }

 private:
  Fast fast_;
  SlowCoupling<State> coupling_;
  double epsilon_;
};

struct CirSlowParams {
  double a = 0.1;
  double b = 0.005;
  double c = 0.75;
};

/// (a/eps) sqrt(x) y + b (c - x) y^2, evaluated in the same operation order as
/// the composed coupling of make_cir_rossler_system.
double cir_slow_rhs(double x, double y_obs, const CirSlowParams& p, double epsilon);

/// h(x) = a sqrt(x), f0 = y, f(x, y) = b (c - x) y^2 with y = z2 + z3.
SlowCoupling<RosslerState> cir_rossler_coupling(const CirSlowParams& p);

MultiScaleSystem<Rossler> make_cir_rossler_system(const CirSlowParams& slow,
                                                  const RosslerParams& fast, double epsilon);

void validate(const CirSlowParams& p);

}  // namespace msbias
