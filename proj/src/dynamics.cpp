#include "msbias/dynamics.hpp"

#include <string>

namespace msbias {

namespace {

void require_finite(const RosslerState& z, const char* who) {
  for (const double v : z) {
    if (!std::isfinite(v)) throw DomainError(std::string(who) + ": non-finite state");
  }
}

}  // namespace

RosslerState rossler_rhs(const RosslerState& z, const RosslerParams& p) {
  require_finite(z, "rossler_rhs");
  return Rossler(p)(z);
}

double rossler_observable(const RosslerState& z) { return z[1] + z[2]; }

double rossler_divergence(const RosslerState& z, const RosslerParams& p) {
  require_finite(z, "rossler_divergence");
  return p.r + z[0] - p.u;
}

DynamicFastSystem::DynamicFastSystem(std::size_t dimension, Rhs rhs)
    : dimension_(dimension), rhs_(std::move(rhs)) {
  if (dimension_ == 0) throw ConfigError("DynamicFastSystem: dimension must be >= 1");
  if (!rhs_) throw ConfigError("DynamicFastSystem: empty right-hand side");
}

DynamicFastSystem DynamicFastSystem::frozen(std::size_t dimension) {
  return DynamicFastSystem(dimension, [dimension](const State&) { return State(dimension, 0.0); });
}

void validate(const CirSlowParams& p) {
  if (!(p.a > 0.0 && p.b > 0.0 && p.c > 0.0)) {
    throw ConfigError("CirSlowParams: a, b and c must be positive");
  }
}

double cir_slow_rhs(double x, double y_obs, const CirSlowParams& p, double epsilon) {
  if (!(x >= 0.0)) throw DomainError("cir_slow_rhs: x must be >= 0");
  if (!(epsilon > 0.0)) throw DomainError("cir_slow_rhs: epsilon must be > 0");
  const double h = p.a * std::sqrt(x);
  return (1.0 / epsilon) * h * y_obs + p.b * (p.c - x) * (y_obs * y_obs);
}

SlowCoupling<RosslerState> cir_rossler_coupling(const CirSlowParams& p) {
  validate(p);
  SlowCoupling<RosslerState> coupling;
  coupling.h = [a = p.a](double x) {
    if (!(x >= 0.0)) throw DomainError("h(x) = a sqrt(x): x must be >= 0");
    return a * std::sqrt(x);
  };
  // Singular at 0; defined for x > 0 only.
  coupling.h_prime = [a = p.a](double x) {
    if (!(x > 0.0)) throw DomainError("h'(x) = a / (2 sqrt(x)): x must be > 0");
    return a / (2.0 * std::sqrt(x));
  };
  coupling.f0 = [](const RosslerState& z) { return rossler_observable(z); };
  coupling.f = [b = p.b, c = p.c](double x, const RosslerState& z) {
    const double y = rossler_observable(z);
    return b * (c - x) * (y * y);
  };
  return coupling;
}

MultiScaleSystem<Rossler> make_cir_rossler_system(const CirSlowParams& slow,
                                                  const RosslerParams& fast, double epsilon) {
  return MultiScaleSystem<Rossler>(Rossler(fast), cir_rossler_coupling(slow), epsilon);
}

}  // namespace msbias
