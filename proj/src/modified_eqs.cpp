#include "msbias/modified_eqs.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace msbias {

namespace {

double norm_inf(const Vec& v) {
  double m = 0.0;
  for (double c : v) m = std::max(m, std::abs(c));
  return m;
}

Vec combine(double a, const Vec& x, double b, const Vec& y) { return sum_scaled(a, x, b, y); }

void require_finite(const Vec& v, const char* who) {
  if (!all_finite(v)) throw EstimationError(std::string(who) + ": non-finite derivative estimate");
}

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

DerivativeEngine DerivativeEngine::central_fd(double scale) {
  const double eps = std::numeric_limits<double>::epsilon();
  return central_fd(std::cbrt(eps) * scale, std::sqrt(std::sqrt(eps)) * scale);
}

DerivativeEngine DerivativeEngine::central_fd(double fd_step_first, double fd_step_second) {
  if (!(fd_step_first > 0.0) || !(fd_step_second > 0.0)) {
    throw ConfigError("DerivativeEngine: finite-difference steps must be positive");
  }
  DerivativeEngine e;
  e.mode_ = JacobianMode::CentralFD;
  e.h1_ = fd_step_first;
  e.h2_ = fd_step_second;
  return e;
}

DerivativeEngine DerivativeEngine::analytic(DirectionalDerivative jacobian_vector,
                                            DirectionalDerivative second_contraction) {
  if (!jacobian_vector || !second_contraction) {
    throw ConfigError("DerivativeEngine: analytic mode needs both derivative callbacks");
  }
  DerivativeEngine e;
  e.mode_ = JacobianMode::Analytic;
  e.jvp_ = std::move(jacobian_vector);
  e.second_ = std::move(second_contraction);
  return e;
}

// Differences are taken along w with a step scaled to |z| and |w|, so the
// increment in z-space is h * max(1, |z|).
Vec DerivativeEngine::jacobian_vector(const VectorField& v, const Vec& z, const Vec& w) const {
  if (mode_ == JacobianMode::Analytic) return jvp_(z, w);
  const double wn = norm_inf(w);
  if (wn == 0.0) return Vec(v(z).size(), 0.0);
  const double t = h1_ * std::max(1.0, norm_inf(z)) / wn;
  Vec out = combine(1.0, v(axpy(z, t, w)), -1.0, v(axpy(z, -t, w)));
  for (double& c : out) c /= 2.0 * t;
  require_finite(out, "jacobian_vector");
  return out;
}

Vec DerivativeEngine::second_contraction(const VectorField& v, const Vec& z, const Vec& w) const {
  if (mode_ == JacobianMode::Analytic) return second_(z, w);
  const double wn = norm_inf(w);
  if (wn == 0.0) return Vec(v(z).size(), 0.0);
  const double t = h2_ * std::max(1.0, norm_inf(z)) / wn;
  const Vec vp = v(axpy(z, t, w));
  const Vec vm = v(axpy(z, -t, w));
  const Vec v0 = v(z);
  Vec out(v0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (vp[i] - 2.0 * v0[i] + vm[i]) / (t * t);
  require_finite(out, "second_contraction");
  return out;
}

Vec ModifiedField::operator()(const Vec& z) const {
  const double weight = order_of_correction == 1 ? dt : dt * dt;
  return axpy(base(z), weight, correction(z));
}

ModifiedField modified_field_euler(VectorField v, double dt, DerivativeEngine engine) {
  auto correction = [v, engine](const Vec& z) {
    Vec out = engine.jacobian_vector(v, z, v(z));
    for (double& c : out) c *= -0.5;
    return out;
  };
  return {std::move(v), correction, 1, dt};
}

ModifiedField modified_field_heun(VectorField v, double dt, DerivativeEngine engine) {
  auto correction = [v, engine](const Vec& z) {
    const Vec vz = v(z);
    const Vec vvv = engine.jacobian_vector(v, z, engine.jacobian_vector(v, z, vz));
    return combine(1.0 / 12.0, engine.second_contraction(v, z, vz), -1.0 / 6.0, vvv);
  };
  return {std::move(v), correction, 2, dt};
}

ModifiedField modified_field_taylor2(VectorField v, double dt, DerivativeEngine engine) {
  auto correction = [v, engine](const Vec& z) {
    const Vec vz = v(z);
    const Vec vvv = engine.jacobian_vector(v, z, engine.jacobian_vector(v, z, vz));
    return combine(-1.0 / 6.0, engine.second_contraction(v, z, vz), -1.0 / 6.0, vvv);
  };
  return {std::move(v), correction, 2, dt};
}

ModifiedField modified_field(StepperKind kind, VectorField v, double dt, DerivativeEngine engine) {
  switch (kind) {
    case StepperKind::Euler: return modified_field_euler(std::move(v), dt, std::move(engine));
    case StepperKind::Heun: return modified_field_heun(std::move(v), dt, std::move(engine));
    case StepperKind::Taylor2: return modified_field_taylor2(std::move(v), dt, std::move(engine));
  }
  throw ConfigError("unknown stepper kind");
}

VectorField corrected_field_euler(VectorField v, double dt, DerivativeEngine engine) {
  return [v = std::move(v), dt, engine = std::move(engine)](const Vec& z) {
    const Vec vz = v(z);
    return axpy(vz, 0.5 * dt, engine.jacobian_vector(v, z, vz));
  };
}

std::string OrderCheckResult::table() const {
  std::ostringstream os;
  os.precision(6);
  os << "dt,error\n";
  for (std::size_t i = 0; i < dts.size(); ++i) os << dts[i] << ',' << errors[i] << '\n';
  return os.str();
}

std::vector<double> geometric_steps(double dt0, int count) {
  std::vector<double> out;
  for (int i = 0; i < count; ++i) out.push_back(std::ldexp(dt0, -i));
  return out;
}

OrderCheckResult elevated_order_check(StepperKind kind, const VectorField& v, const Vec& z0,
                                      double t_end, const std::vector<double>& dts,
                                      OrderTarget target, const DerivativeEngine& engine,
                                      int reference_refinement) {
  if (dts.size() < 3) throw ConfigError("elevated_order_check: need at least 3 step sizes");
  for (std::size_t i = 1; i < dts.size(); ++i) {
    if (!(dts[i] < dts[i - 1])) throw ConfigError("elevated_order_check: step sizes must decrease");
  }
  if (reference_refinement < 1) throw ConfigError("elevated_order_check: refinement must be >= 1");

  auto run = [&](StepperKind k, const VectorField& field, double dt) {
    const std::size_t n = step_count(t_end, dt);
    Vec z = z0;
    for (std::size_t i = 0; i < n; ++i) z = one_step(k, field, z, dt);
    return z;
  };

  OrderCheckResult result;
  result.kind = kind;
  result.target = target;
  result.dts = dts;
  std::vector<double> log_dt, log_err;
  for (const double dt : dts) {
    if (std::abs(std::round(t_end / dt) * dt - t_end) > 1e-12 * t_end) {
      throw ConfigError("elevated_order_check: each dt must divide t_end");
    }
    const Vec z = run(kind, v, dt);
    Vec ref;
    if (target == OrderTarget::OriginalField) {
      ref = run(StepperKind::Heun, v, dt / reference_refinement);
    } else {
      const VectorField mod = modified_field(kind, v, dt, engine);
      ref = run(StepperKind::Heun, mod, dt / reference_refinement);
    }
    const double err = norm_inf(combine(1.0, z, -1.0, ref));
    result.errors.push_back(err);
    log_dt.push_back(std::log(dt));
    log_err.push_back(std::log(err));
  }
  for (std::size_t i = 1; i < result.errors.size(); ++i) {
    if (!(result.errors[i] < result.errors[i - 1])) result.monotone = false;
  }
  if (!result.monotone) {
    throw OrderCheckError("elevated_order_check: error sequence is not monotone\n" + result.table(),
                          result);
  }
  result.slope = least_squares_slope(log_dt, log_err);
  return result;
}

}  // namespace msbias
