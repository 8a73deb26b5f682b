#include "msbias/integrators.hpp"

#include <cmath>
#include <string>

namespace msbias {

std::string_view to_string(StepperKind kind) {
  switch (kind) {
    case StepperKind::Euler: return "euler";
    case StepperKind::Heun: return "heun";
    case StepperKind::Taylor2: return "taylor2";
  }
  return "unknown";
}

StepperKind parse_stepper(std::string_view name) {
  if (name == "euler") return StepperKind::Euler;
  if (name == "heun") return StepperKind::Heun;
  if (name == "taylor2") return StepperKind::Taylor2;
  throw ConfigError("unknown stepper '" + std::string(name) + "' (expected euler, heun or taylor2)");
}

std::string_view to_string(PositivityMode mode) {
  return mode == PositivityMode::ClampToZero ? "clamp" : "reject";
}

PositivityMode parse_positivity(std::string_view name) {
  if (name == "clamp") return PositivityMode::ClampToZero;
  if (name == "reject") return PositivityMode::Reject;
  throw ConfigError("unknown positivity policy '" + std::string(name) + "' (expected clamp or reject)");
}

StepPolicy::StepPolicy(double kappa, int substeps, double epsilon)
    : kappa_(kappa), substeps_(substeps), epsilon_(epsilon) {
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw ConfigError("StepPolicy: kappa must be positive");
  if (substeps < 1) throw ConfigError("StepPolicy: K must be >= 1");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw ConfigError("StepPolicy: epsilon must be positive");
  }
}

std::size_t step_count(double t_end, double slow_dt) {
  if (!(t_end > 0.0) || !(slow_dt > 0.0)) throw ConfigError("step_count: t_end and dt must be positive");
  const double n = std::round(t_end / slow_dt);
  if (n < 1.0) throw ConfigError("step_count: t_end shorter than half a slow step");
  return static_cast<std::size_t>(n);
}

}  // namespace msbias
