#pragma once

#include <functional>
#include <string>
#include <vector>

#include "msbias/integrators.hpp"

namespace msbias {

using Vec = std::vector<double>;
using VectorField = std::function<Vec(const Vec&)>;
/// (z, w) -> directional derivative of some order along w.
using DirectionalDerivative = std::function<Vec(const Vec&, const Vec&)>;

enum class JacobianMode { Analytic, CentralFD };

/// Supplies v'(z) w and v''(z)(w, w), either from user formulas or by central
/// differences along w.
class DerivativeEngine {
 public:
  /// Steps default to eps^(1/3) and eps^(1/4) times `scale`.
  static DerivativeEngine central_fd(double scale = 1.0);
  static DerivativeEngine central_fd(double fd_step_first, double fd_step_second);
  static DerivativeEngine analytic(DirectionalDerivative jacobian_vector,
                                   DirectionalDerivative second_contraction);

  JacobianMode mode() const { return mode_; }
  double fd_step_first() const { return h1_; }
  double fd_step_second() const { return h2_; }

  Vec jacobian_vector(const VectorField& v, const Vec& z, const Vec& w) const;
  Vec second_contraction(const VectorField& v, const Vec& z, const Vec& w) const;

 private:
  DerivativeEngine() = default;

  JacobianMode mode_ = JacobianMode::CentralFD;
  double h1_ = 0.0;
  double h2_ = 0.0;
  DirectionalDerivative jvp_;
  DirectionalDerivative second_;
};

/// Truncated modified field  base(z) + dt^p correction(z).
struct ModifiedField {
  VectorField base;
  VectorField correction;
  int order_of_correction = 1;
  double dt = 0.0;

  Vec operator()(const Vec& z) const;
};

/// v - dt/2 v'v.
ModifiedField modified_field_euler(VectorField v, double dt, DerivativeEngine engine);
/// v + dt^2 (v''(v,v)/12 - v'v'v/6).
ModifiedField modified_field_heun(VectorField v, double dt, DerivativeEngine engine);
/// v - dt^2/6 (v''(v,v) + v'v'v).
ModifiedField modified_field_taylor2(VectorField v, double dt, DerivativeEngine engine);
ModifiedField modified_field(StepperKind kind, VectorField v, double dt, DerivativeEngine engine);

/// v + dt/2 v'v. One Euler step of this field is the Taylor2 step.
VectorField corrected_field_euler(VectorField v, double dt, DerivativeEngine engine);

enum class OrderTarget { OriginalField, ModifiedField };

struct OrderCheckResult {
  StepperKind kind = StepperKind::Euler;
  OrderTarget target = OrderTarget::OriginalField;
  std::vector<double> dts;
  std::vector<double> errors;
  double slope = 0.0;
  bool monotone = true;

  std::string table() const;
};

class OrderCheckError : public std::runtime_error {
 public:
  OrderCheckError(const std::string& what, OrderCheckResult result)
      : std::runtime_error(what), result_(std::move(result)) {}
  const OrderCheckResult& result() const { return result_; }

 private:
  OrderCheckResult result_;
};

/// Integrates v over [0, t_end] with the stepper at each dt and compares the
/// end point with a reference solution of either v itself or the stepper's
/// modified field at that dt. The reference is Heun at dt/reference_refinement.
/// Returns the least-squares slope of log(error) against log(dt); throws
/// OrderCheckError (carrying the raw table) if the errors do not decrease.
OrderCheckResult elevated_order_check(StepperKind kind, const VectorField& v, const Vec& z0,
                                      double t_end, const std::vector<double>& dts,
                                      OrderTarget target, const DerivativeEngine& engine,
                                      int reference_refinement = 1000);

/// dt_0 * 2^-i for i in [0, count).
std::vector<double> geometric_steps(double dt0, int count);

}  // namespace msbias
