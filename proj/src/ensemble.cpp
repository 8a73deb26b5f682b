#include "msbias/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace msbias {

void validate(const EnsembleConfig& c) {
  if (c.n_members < 1) throw ConfigError("ensemble: n_members must be >= 1");
  if (!(c.epsilon > 0.0)) throw ConfigError("ensemble: epsilon must be positive");
  if (!(c.kappa > 0.0)) throw ConfigError("ensemble: kappa must be positive");
  if (c.K < 1) throw ConfigError("ensemble: K must be >= 1");
  if (!(c.t_end > 0.0)) throw ConfigError("ensemble: t_end must be positive");
  if (!(c.x0 >= 0.0)) throw ConfigError("ensemble: x0 must be >= 0");
  if (!(c.transient > 0.0)) throw ConfigError("ensemble: transient must be positive");
}

std::vector<double> EmpiricalPdf::bin_edges() const {
  std::vector<double> e(density.size() + 1);
  for (std::size_t k = 0; k < e.size(); ++k) e[k] = edge(k);
  return e;
}

long bin_index(double v, double dx) {
  long k = static_cast<long>(std::floor(v / dx));
  // v / dx can round across an integer; settle against the edges themselves.
  if (static_cast<double>(k + 1) * dx <= v) ++k;
  if (static_cast<double>(k) * dx > v) --k;
  return k;
}

namespace {

EmpiricalPdf build(const std::vector<double>& values, double dx, long lo_bin, long hi_bin) {
  EmpiricalPdf pdf;
  pdf.bin_width = dx;
  pdf.first_bin = lo_bin;
  pdf.n = values.size();
  std::vector<std::size_t> counts(static_cast<std::size_t>(hi_bin - lo_bin + 1), 0);
  for (const double v : values) ++counts[static_cast<std::size_t>(bin_index(v, dx) - lo_bin)];
  const double norm = 1.0 / (static_cast<double>(pdf.n) * dx);
  pdf.density.resize(counts.size());
  for (std::size_t k = 0; k < counts.size(); ++k) pdf.density[k] = static_cast<double>(counts[k]) * norm;

  const double n = static_cast<double>(pdf.n);
  pdf.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (const double v : values) ss += (v - pdf.mean) * (v - pdf.mean);
  pdf.variance = pdf.n > 1 ? ss / (n - 1.0) : 0.0;
  pdf.mean_stderr = std::sqrt(pdf.variance / n);
  return pdf;
}

void require_values(const std::vector<double>& values, double dx) {
  if (values.empty()) throw ConfigError("histogram: no values");
  if (!(dx > 0.0)) throw ConfigError("histogram: bin width must be positive");
  for (const double v : values) {
    if (!std::isfinite(v)) throw ConfigError("histogram: non-finite value");
  }
}

}  // namespace

EmpiricalPdf histogram(const std::vector<double>& values, double dx) {
  require_values(values, dx);
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return build(values, dx, bin_index(*lo, dx), bin_index(*hi, dx));
}

EmpiricalPdf histogram(const std::vector<double>& values, double dx, double lo, double hi) {
  require_values(values, dx);
  if (!(hi > lo)) throw ConfigError("histogram: empty range");
  const auto [vlo, vhi] = std::minmax_element(values.begin(), values.end());
  const long first = std::min(bin_index(lo, dx), bin_index(*vlo, dx));
  // hi is exclusive; the last bin is the one ending at or after hi.
  const long last = std::max(bin_index(hi, dx) - (static_cast<double>(bin_index(hi, dx)) * dx == hi ? 1 : 0),
                             bin_index(*vhi, dx));
  return build(values, dx, first, last);
}

ComparisonReport compare_pdf(const EmpiricalPdf& emp, const AnalyticDensity& ref) {
  ComparisonReport r;
  const double dx = emp.bin_width;
  std::vector<double> edges = emp.bin_edges();
  const std::vector<double> cdf = ref.cdf_at(edges);
  double emp_cdf = 0.0;
  r.ks_distance = std::abs(cdf[0]);
  for (std::size_t k = 0; k < emp.bins(); ++k) {
    r.l1_distance += std::abs(emp.density[k] - ref.pdf(emp.midpoint(k))) * dx;
    emp_cdf += emp.density[k] * dx;
    r.ks_distance = std::max(r.ks_distance, std::abs(emp_cdf - cdf[k + 1]));
  }
  r.mean_diff = emp.mean - ref.mean;
  r.mean_diff_relative = r.mean_diff / ref.mean;
  r.variance_ratio = emp.variance / ref.variance;
  return r;
}

double ks_distance(std::vector<double> samples, const AnalyticDensity& ref, std::size_t grid_points) {
  if (samples.empty()) throw ConfigError("ks_distance: no samples");
  if (grid_points < 2) throw ConfigError("ks_distance: need at least 2 grid points");
  std::sort(samples.begin(), samples.end());
  const double lo = samples.front(), hi = samples.back();
  if (lo == hi) {
    const double f = ref.cdf_at({lo})[0];
    return std::max(f, 1.0 - f);
  }
  std::vector<double> grid(grid_points);
  for (std::size_t i = 0; i < grid_points; ++i) {
    grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid_points - 1);
  }
  const std::vector<double> cdf = ref.cdf_at(grid);
  const double h = (hi - lo) / static_cast<double>(grid_points - 1);
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double u = (samples[i] - lo) / h;
    const std::size_t g = std::min(static_cast<std::size_t>(u), grid_points - 2);
    const double w = u - static_cast<double>(g);
    const double f = (1.0 - w) * cdf[g] + w * cdf[g + 1];
    d = std::max({d, std::abs(static_cast<double>(i + 1) / n - f), std::abs(f - static_cast<double>(i) / n)});
  }
  return d;
}

double l1_bootstrap_stderr(const std::vector<double>& values, double dx, const AnalyticDensity& ref, int resamples,
                           std::uint64_t seed) {
  if (resamples < 2) throw ConfigError("l1_bootstrap_stderr: need at least 2 resamples");
  require_values(values, dx);
  const auto [vlo, vhi] = std::minmax_element(values.begin(), values.end());
  const long lo = bin_index(*vlo, dx), hi = bin_index(*vhi, dx);
  std::vector<double> pdf_mid(static_cast<std::size_t>(hi - lo + 1));
  for (std::size_t k = 0; k < pdf_mid.size(); ++k) {
    pdf_mid[k] = ref.pdf((static_cast<double>(lo + static_cast<long>(k)) + 0.5) * dx);
  }
  std::vector<long> bins(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) bins[i] = bin_index(values[i], dx) - lo;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> l1(static_cast<std::size_t>(resamples));
  std::vector<std::size_t> counts(pdf_mid.size());
  const double norm = 1.0 / (static_cast<double>(values.size()) * dx);
  for (auto& out : l1) {
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < values.size(); ++i) ++counts[static_cast<std::size_t>(bins[pick(rng)])];
    // Bins a resample leaves empty at either end would not exist in its own
    // histogram, so only the occupied span contributes.
    std::size_t a = 0, b = counts.size();
    while (counts[a] == 0) ++a;
    while (counts[b - 1] == 0) --b;
    double s = 0.0;
    for (std::size_t k = a; k < b; ++k) s += std::abs(static_cast<double>(counts[k]) * norm - pdf_mid[k]) * dx;
    out = s;
  }
  const double mean = std::accumulate(l1.begin(), l1.end(), 0.0) / static_cast<double>(l1.size());
  double ss = 0.0;
  for (const double v : l1) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(l1.size() - 1));
}

}  // namespace msbias
