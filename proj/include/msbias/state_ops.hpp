#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <ranges>

namespace msbias {

// Small helpers so the one-step methods work on scalars, std::array and
// std::vector states alike.

inline double axpy(double z, double a, double v) { return z + a * v; }

template <std::ranges::random_access_range S>
S axpy(const S& z, double a, const S& v) {
  S out = z;
  for (std::size_t i = 0; i < std::size(out); ++i) out[i] += a * v[i];
  return out;
}

inline double scaled_difference(double lhs, double rhs, double inv) { return (lhs - rhs) * inv; }

template <std::ranges::random_access_range S>
S scaled_difference(const S& lhs, const S& rhs, double inv) {
  S out = lhs;
  for (std::size_t i = 0; i < std::size(out); ++i) out[i] = (lhs[i] - rhs[i]) * inv;
  return out;
}

inline double sum_scaled(double a, double x, double b, double y) { return a * x + b * y; }

template <std::ranges::random_access_range S>
S sum_scaled(double a, const S& x, double b, const S& y) {
  S out = x;
  for (std::size_t i = 0; i < std::size(out); ++i) out[i] = a * x[i] + b * y[i];
  return out;
}

inline double max_abs(double z) { return std::abs(z); }

template <std::ranges::random_access_range S>
double max_abs(const S& z) {
  double m = 0.0;
  for (const double v : z) {
    if (std::isnan(v)) return v;
    m = std::max(m, std::abs(v));
  }
  return m;
}

inline bool all_finite(double z) { return std::isfinite(z); }

template <std::ranges::random_access_range S>
bool all_finite(const S& z) {
  for (const double v : z) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace msbias
