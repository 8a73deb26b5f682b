#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "msbias/cli.hpp"
#include "msbias/ensemble.hpp"
#include "msbias/errors.hpp"
#include "msbias/modified_eqs.hpp"

namespace msbias::cli {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

void log_line(const std::string& command, const std::string& msg) { std::cerr << "[" << command << "] " << msg << '\n'; }

// Writes next to the target and renames, so readers never see half a file.
void write_atomically(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

fs::path output_dir(const ExperimentConfig& config) {
  fs::path dir(config.output_dir);
  fs::create_directories(dir);
  return dir;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

ordered_json manifest_header(const std::string& command, const ExperimentConfig& config, const Options& options) {
  ordered_json m;
  m["command"] = command;
  m["version"] = MSBIAS_VERSION;
  m["config"] = ordered_json::parse(to_json(config));
  m["workers"] = resolve_workers(options.workers);
  m["seed"] = config.numerical.seed;
  return m;
}

void write_manifest(const fs::path& dir, const std::string& stem, ordered_json& m, const Stopwatch& clock) {
  m["timings"]["total_seconds"] = clock.seconds();
  write_atomically(dir / (stem + ".manifest.json"), m.dump(2) + "\n");
}

std::string cell_name(StepperKind kind, double eps) {
  return std::string(to_string(kind)) + ".eps" + short_number(eps);
}

ParameterSet load_or_estimate_parameters(const ExperimentConfig& config, const Options& options,
                                         std::string& source) {
  const fs::path file = config.estimation.params_file.empty()
                            ? fs::path(config.output_dir) / "estimate-params.params.csv"
                            : fs::path(config.estimation.params_file);
  if (fs::exists(file)) {
    source = file.string();
    return read_parameters_csv(file);
  }
  if (!config.estimation.estimate_if_missing) {
    throw std::runtime_error("parameter file " + file.string() +
                             " not found; run estimate-params or set estimation.estimate_if_missing");
  }
  source = "estimated";
  return estimate_parameters(config, options.workers, [](const std::string& s) { log_line("estimate", s); });
}

// Exact-pdf table on bins [k dx, (k+1) dx): pdf at midpoints, CDF at right edges.
struct ExactTable {
  double dx = 0.0;
  std::vector<double> x, pdf_hmc, pdf_hmd, cdf_hmc, cdf_hmd;
};

// Unlike std::stod this accepts subnormal values in far density tails.
double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw std::runtime_error("not a number: '" + s + "'");
  return v;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path, const std::string& expected_header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != expected_header) throw std::runtime_error("unexpected header in " + path.string());
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    rows.push_back(std::move(f));
  }
  return rows;
}

const char* kExactHeader = "x,pdf_hmc,pdf_hmd,cdf_hmc,cdf_hmd";
const char* kHistHeader = "bin_left,bin_midpoint,density";

ExactTable read_exact_table(const fs::path& path, double dx) {
  ExactTable t;
  t.dx = dx;
  for (const auto& r : read_csv(path, kExactHeader)) {
    if (r.size() != 5) throw std::runtime_error("malformed row in " + path.string());
    t.x.push_back(parse_double(r[0]));
    t.pdf_hmc.push_back(parse_double(r[1]));
    t.pdf_hmd.push_back(parse_double(r[2]));
    t.cdf_hmc.push_back(parse_double(r[3]));
    t.cdf_hmd.push_back(parse_double(r[4]));
  }
  for (std::size_t k = 0; k < t.x.size(); ++k) {
    if (std::abs(t.x[k] - (static_cast<double>(k) + 0.5) * dx) > 1e-9 * dx) {
      throw std::runtime_error("grid mismatch: exact pdf grid is not the histogram grid with bin width " + fmt(dx));
    }
  }
  return t;
}

AnalyticDensity tabulated_density(const ExactTable& t, bool hmd, double mean, double variance) {
  const auto& pdf = hmd ? t.pdf_hmd : t.pdf_hmc;
  const auto& cdf = hmd ? t.cdf_hmd : t.cdf_hmc;
  const double dx = t.dx;
  auto index = [dx](double x) { return std::llround(x / dx); };
  AnalyticDensity d;
  d.pdf = [&pdf, dx, index](double x) {
    const long long k = index(x - 0.5 * dx);
    if (k < 0 || k >= static_cast<long long>(pdf.size())) {
      throw std::runtime_error("grid mismatch: histogram bin outside the exact pdf grid");
    }
    return pdf[static_cast<std::size_t>(k)];
  };
  d.cdf_at = [&cdf, index](const std::vector<double>& edges) {
    std::vector<double> out;
    out.reserve(edges.size());
    for (const double e : edges) {
      const long long k = index(e);
      if (k < 0 || k > static_cast<long long>(cdf.size())) {
        throw std::runtime_error("grid mismatch: histogram edge outside the exact pdf grid");
      }
      out.push_back(k == 0 ? 0.0 : cdf[static_cast<std::size_t>(k - 1)]);
    }
    return out;
  };
  d.mean = mean;
  d.variance = variance;
  return d;
}

std::vector<double> read_values(const fs::path& path) {
  std::vector<double> v;
  for (const auto& r : read_csv(path, "member,x")) {
    if (r.size() != 2) throw std::runtime_error("malformed row in " + path.string());
    v.push_back(parse_double(r[1]));
  }
  return v;
}

EmpiricalPdf read_histogram(const fs::path& path, double dx, const ordered_json& cell) {
  EmpiricalPdf p;
  p.bin_width = dx;
  bool first = true;
  for (const auto& r : read_csv(path, kHistHeader)) {
    if (r.size() != 3) throw std::runtime_error("malformed row in " + path.string());
    const double left = parse_double(r[0]);
    const long k = std::lround(left / dx);
    if (std::abs(left - static_cast<double>(k) * dx) > 1e-9 * dx) {
      throw std::runtime_error("grid mismatch: histogram " + path.string() + " is not aligned to bin width " + fmt(dx));
    }
    if (first) p.first_bin = k;
    if (k != p.first_bin + static_cast<long>(p.density.size())) {
      throw std::runtime_error("histogram " + path.string() + " has non-contiguous bins");
    }
    first = false;
    p.density.push_back(parse_double(r[2]));
  }
  p.n = cell.at("n").get<std::size_t>();
  p.mean = cell.at("mean").get<double>();
  p.variance = cell.at("variance").get<double>();
  p.mean_stderr = cell.at("mean_stderr").get<double>();
  return p;
}

ordered_json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return ordered_json::parse(in);
}

VectorField builtin_field(const std::string& name) {
  if (name == "planar") return [](const Vec& z) { return Vec{std::sin(z[1]) - 0.5 * z[0], z[0] * z[1]}; };
  return [](const Vec& z) { return Vec{z[0] - z[0] * z[0] * z[0]}; };
}

Vec builtin_initial_state(const std::string& name) { return name == "planar" ? Vec{0.3, 0.4} : Vec{0.5}; }

DerivativeEngine builtin_engine(const std::string& field, const std::string& jacobian) {
  if (jacobian == "central_fd") return DerivativeEngine::central_fd();
  if (field == "planar") {
    return DerivativeEngine::analytic(
        [](const Vec& z, const Vec& w) {
          return Vec{-0.5 * w[0] + std::cos(z[1]) * w[1], z[1] * w[0] + z[0] * w[1]};
        },
        [](const Vec& z, const Vec& w) { return Vec{-std::sin(z[1]) * w[1] * w[1], 2.0 * w[0] * w[1]}; });
  }
  return DerivativeEngine::analytic([](const Vec& z, const Vec& w) { return Vec{(1.0 - 3.0 * z[0] * z[0]) * w[0]}; },
                                    [](const Vec& z, const Vec& w) { return Vec{-6.0 * z[0] * w[0] * w[0]}; });
}

}  // namespace

int cmd_estimate_params(const ExperimentConfig& config, const Options& options) {
  const Stopwatch clock;
  const auto dir = output_dir(config);
  auto manifest = manifest_header("estimate-params", config, options);
  const auto p = estimate_parameters(config, options.workers, [](const std::string& s) { log_line("estimate-params", s); });
  write_parameters_csv(p, dir / "estimate-params.params.csv");

  const auto& bp = p.find("sigma_squared", "heun", "brownian_path");
  const auto& acf = p.find("sigma_squared", "heun", "acf_integral");
  const double gap = std::abs(bp.value - acf.value);
  const double combined = std::hypot(bp.standard_error, acf.standard_error);
  const auto& slow = config.physical.slow;
  const double x0 = config.numerical.x0;
  const double t = config.exact_pdf.t;
  const double hmc_mean = cir_mean_variance(p.hmc(slow, x0), t).mean;
  const double hmd_mean = cir_mean_variance(p.hmd(slow, x0), t).mean;
  manifest["outputs"] = {"estimate-params.params.csv"};
  manifest["checks"] = {
      {"sigma_squared_methods_agree_within_2se", gap <= 2.0 * combined},
      {"sigma_squared_gap", gap},
      {"sigma_squared_combined_stderr", combined},
      {"beta_disc_minus_beta_cont", p.find("beta_disc", "euler").value - p.find("beta_cont", "heun").value},
      {"hmc_mean_at_t", hmc_mean},
      {"hmd_mean_at_t", hmd_mean},
      {"relative_mean_gap", (hmc_mean - hmd_mean) / hmc_mean},
      {"t", t}};
  write_manifest(dir, "estimate-params", manifest, clock);
  log_line("estimate-params", "wrote " + (dir / "estimate-params.params.csv").string());
  return 0;
}

int cmd_simulate(const ExperimentConfig& config_in, const Options& options) {
  const Stopwatch clock;
  ExperimentConfig config = config_in;
  auto& n = config.numerical;
  if (options.full_scale) {
    n.n_members = 160000;
    n.epsilons = {0.05, 0.025, 0.0125, 0.00625};
  }
  const double smallest_eps = *std::min_element(n.epsilons.begin(), n.epsilons.end());
  const bool full_scale = n.n_members > 10000 || smallest_eps < 0.0125;
  if (full_scale && !options.full_scale) {
    throw ConfigError("n_members > 10000 or epsilon < 0.0125 is a full-scale run; pass --full-scale to run it");
  }
  double estimate = 0.0;
  for (const double eps : n.epsilons) {
    for (const auto kind : n.steppers) {
      estimate += estimated_ensemble_seconds(kind, n.n_members, eps, n.kappa, n.K, n.t_end, n.transient,
                                             options.workers);
    }
  }
  if (full_scale) {
    std::cerr << "warning: full-scale run, estimated " << short_number(estimate / 3600.0) << " hours with "
              << resolve_workers(options.workers) << " worker(s)\n";
  }

  const auto dir = output_dir(config);
  auto manifest = manifest_header("simulate", config, options);
  manifest["estimated_seconds"] = estimate;
  manifest["initial_condition_box"] = "uniform [-10,10]^3, relaxed for the transient, attractor region check";
  manifest["cells"] = ordered_json::array();
  bool all_valid = true;
  const auto sampler = rossler_ic_sampler(n.transient);
  for (std::size_t ei = 0; ei < n.epsilons.size(); ++ei) {
    const double eps = n.epsilons[ei];
    const auto system = make_system(config, eps);
    for (const auto kind : n.steppers) {
      EnsembleConfig ec;
      ec.n_members = n.n_members;
      ec.epsilon = eps;
      ec.kappa = n.kappa;
      ec.K = n.K;
      ec.t_end = n.t_end;
      ec.stepper = kind;
      ec.x0 = n.x0;
      ec.transient = n.transient;
      ec.seed = n.seed;
      ec.positivity = n.positivity;
      ec.workers = options.workers;
      const auto r = run_ensemble(system, ec, sampler);
      const std::string name = cell_name(kind, eps);
      ordered_json cell{{"epsilon", eps},
                        {"stepper", std::string(to_string(kind))},
                        {"color", color_for_epsilon_index(ei)},
                        {"label", std::string(to_string(kind)) + " eps=" + short_number(eps)},
                        {"n_requested", n.n_members},
                        {"failed_members", r.failed_members.size()},
                        {"valid", r.valid(n.n_members)},
                        {"clamp_total", r.clamp_total},
                        {"unreliable_members", r.unreliable_members},
                        {"n_steps", r.n_steps},
                        {"realized_t_end", r.realized_t_end},
                        {"wall_seconds", r.wall_seconds}};
      all_valid = all_valid && r.valid(n.n_members);
      if (r.values.empty()) {
        cell["error"] = "no member finished";
        manifest["cells"].push_back(cell);
        continue;
      }
      const auto pdf = histogram(r.values, n.bin_width);
      std::string hist = std::string(kHistHeader) + "\n";
      for (std::size_t k = 0; k < pdf.bins(); ++k) {
        hist += fmt(pdf.edge(k)) + "," + fmt(pdf.midpoint(k)) + "," + fmt(pdf.density[k]) + "\n";
      }
      const std::string hist_file = "simulate.hist." + name + ".csv";
      write_atomically(dir / hist_file, hist);
      cell["histogram"] = hist_file;
      if (n.write_values) {
        std::string values = "member,x\n";
        std::size_t f = 0, idx = 0;
        for (std::size_t i = 0; i < n.n_members; ++i) {
          if (f < r.failed_members.size() && r.failed_members[f] == i) {
            ++f;
            continue;
          }
          values += std::to_string(i) + "," + fmt(r.values[idx++]) + "\n";
        }
        const std::string values_file = "simulate.values." + name + ".csv";
        write_atomically(dir / values_file, values);
        cell["values"] = values_file;
      }
      double mass = 0.0;
      for (const double d : pdf.density) mass += d * pdf.bin_width;
      cell["n"] = pdf.n;
      cell["mean"] = pdf.mean;
      cell["variance"] = pdf.variance;
      cell["mean_stderr"] = pdf.mean_stderr;
      cell["bin_width"] = pdf.bin_width;
      cell["histogram_mass"] = mass;
      manifest["cells"].push_back(cell);
      log_line("simulate", name + ": mean " + short_number(pdf.mean) + " +- " + short_number(pdf.mean_stderr) + " (" +
                               short_number(r.wall_seconds) + " s)");
    }
  }
  write_manifest(dir, "simulate", manifest, clock);
  return all_valid ? 0 : 1;
}

int cmd_exact_pdf(const ExperimentConfig& config, const Options& options) {
  const Stopwatch clock;
  const auto dir = output_dir(config);
  auto manifest = manifest_header("exact-pdf", config, options);
  std::string source;
  const auto params = load_or_estimate_parameters(config, options, source);
  const auto& slow = config.physical.slow;
  const double x0 = config.numerical.x0;
  const double t = config.exact_pdf.stationary ? std::numeric_limits<double>::infinity() : config.exact_pdf.t;
  const CirModel hmc = params.hmc(slow, x0), hmd = params.hmd(slow, x0);
  const auto mv_hmc = cir_mean_variance(hmc, t), mv_hmd = cir_mean_variance(hmd, t);

  const double dx = config.numerical.bin_width;
  const double x_max = std::max(mv_hmc.mean + 10.0 * std::sqrt(mv_hmc.variance),
                                mv_hmd.mean + 10.0 * std::sqrt(mv_hmd.variance));
  const auto bins = static_cast<std::size_t>(std::ceil(x_max / dx));
  std::vector<double> mids(bins), right(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    mids[k] = (static_cast<double>(k) + 0.5) * dx;
    right[k] = static_cast<double>(k + 1) * dx;
  }
  const auto cdf_hmc = cir_cdf(right, hmc, t), cdf_hmd = cir_cdf(right, hmd, t);
  std::string csv = std::string(kExactHeader) + "\n";
  double trap_hmc = 0.0, trap_hmd = 0.0, prev_hmc = 0.0, prev_hmd = 0.0;
  std::size_t mode_hmc = 0, mode_hmd = 0;
  std::vector<double> p_hmc(bins), p_hmd(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    p_hmc[k] = cir_pdf(mids[k], hmc, t);
    p_hmd[k] = cir_pdf(mids[k], hmd, t);
    csv += fmt(mids[k]) + "," + fmt(p_hmc[k]) + "," + fmt(p_hmd[k]) + "," + fmt(cdf_hmc[k]) + "," + fmt(cdf_hmd[k]) +
           "\n";
    if (k > 0) {
      trap_hmc += 0.5 * dx * (prev_hmc + p_hmc[k]);
      trap_hmd += 0.5 * dx * (prev_hmd + p_hmd[k]);
    }
    prev_hmc = p_hmc[k];
    prev_hmd = p_hmd[k];
    if (p_hmc[k] > p_hmc[mode_hmc]) mode_hmc = k;
    if (p_hmd[k] > p_hmd[mode_hmd]) mode_hmd = k;
  }
  write_atomically(dir / "exact-pdf.csv", csv);

  auto model_json = [](const CirModel& m, const MeanVariance& mv, double mode) {
    return ordered_json{{"a", m.a},       {"b", m.b},       {"alpha", m.alpha},       {"beta", m.beta},
                        {"sigma_squared", m.sigma_squared}, {"x0", m.x0},         {"mean", mv.mean},
                        {"variance", mv.variance},          {"mode", mode}};
  };
  manifest["parameters_source"] = source;
  manifest["t"] = config.exact_pdf.stationary ? ordered_json("infinity") : ordered_json(t);
  manifest["bin_width"] = dx;
  manifest["hmc"] = model_json(hmc, mv_hmc, mids[mode_hmc]);
  manifest["hmd"] = model_json(hmd, mv_hmd, mids[mode_hmd]);
  manifest["outputs"] = {"exact-pdf.csv"};
  manifest["checks"] = {{"trapezoid_mass_hmc", trap_hmc},
                        {"trapezoid_mass_hmd", trap_hmd},
                        {"hmd_mode_left_of_hmc", mode_hmd < mode_hmc}};
  write_manifest(dir, "exact-pdf", manifest, clock);
  log_line("exact-pdf", "HMC mean " + short_number(mv_hmc.mean) + ", HMD mean " + short_number(mv_hmd.mean));
  return 0;
}

int cmd_compare(const ExperimentConfig& config, const Options& options) {
  const Stopwatch clock;
  const auto dir = output_dir(config);
  auto manifest = manifest_header("compare", config, options);
  const fs::path sim_path = config.compare.simulate_manifest.empty() ? dir / "simulate.manifest.json"
                                                                       : fs::path(config.compare.simulate_manifest);
  const fs::path exact_path =
      config.compare.exact_pdf.empty() ? dir / "exact-pdf.csv" : fs::path(config.compare.exact_pdf);
  const fs::path exact_manifest_path = exact_path.parent_path() / (exact_path.stem().string() + ".manifest.json");
  const auto sim = read_json(sim_path);
  const auto exact_manifest = read_json(exact_manifest_path);
  const double dx = exact_manifest.at("bin_width").get<double>();
  const auto table = read_exact_table(exact_path, dx);
  const auto hmc = tabulated_density(table, false, exact_manifest.at("hmc").at("mean").get<double>(),
                                     exact_manifest.at("hmc").at("variance").get<double>());
  const auto hmd = tabulated_density(table, true, exact_manifest.at("hmd").at("mean").get<double>(),
                                     exact_manifest.at("hmd").at("variance").get<double>());

  std::string csv = "epsilon,stepper,reference,n,l1,l1_stderr,ks,mean_diff,mean_diff_relative,variance_ratio\n";
  const fs::path sim_dir = sim_path.parent_path();
  for (const auto& cell : sim.at("cells")) {
    if (!cell.contains("histogram")) continue;
    const double cell_dx = cell.at("bin_width").get<double>();
    if (cell_dx != dx) {
      throw std::runtime_error("grid mismatch: histogram bin width " + fmt(cell_dx) + " vs exact pdf " + fmt(dx));
    }
    const auto emp = read_histogram(sim_dir / cell.at("histogram").get<std::string>(), dx, cell);
    std::vector<double> values;
    if (cell.contains("values")) values = read_values(sim_dir / cell.at("values").get<std::string>());
    for (const auto& [name, ref] : {std::pair{"HMC", &hmc}, std::pair{"HMD", &hmd}}) {
      const auto r = compare_pdf(emp, *ref);
      const double l1_se = values.empty()
                               ? std::numeric_limits<double>::quiet_NaN()
                               : l1_bootstrap_stderr(values, dx, *ref, config.compare.bootstrap_resamples,
                                                     derive_seed(config.numerical.seed, 0, 20));
      csv += fmt(cell.at("epsilon").get<double>()) + "," + cell.at("stepper").get<std::string>() + "," + name + "," +
             std::to_string(emp.n) + "," + fmt(r.l1_distance) + "," + fmt(l1_se) + "," + fmt(r.ks_distance) + "," +
             fmt(r.mean_diff) + "," + fmt(r.mean_diff_relative) + "," + fmt(r.variance_ratio) + "\n";
    }
  }
  write_atomically(dir / "compare.csv", csv);
  manifest["inputs"] = {{"simulate_manifest", sim_path.string()}, {"exact_pdf", exact_path.string()}};
  manifest["outputs"] = {"compare.csv"};
  write_manifest(dir, "compare", manifest, clock);
  log_line("compare", "wrote " + (dir / "compare.csv").string());
  return 0;
}

int cmd_convergence_order(const ExperimentConfig& config, const Options& options) {
  const Stopwatch clock;
  const auto dir = output_dir(config);
  auto manifest = manifest_header("convergence-order", config, options);
  const auto& c = config.convergence;
  const auto field = builtin_field(c.field);
  const auto z0 = builtin_initial_state(c.field);
  const auto engine = builtin_engine(c.field, c.jacobian);
  const auto dts = geometric_steps(c.dt0, c.levels);

  std::string table = "stepper,target,slope,expected,monotone\n";
  std::string errors = "stepper,target,dt,error\n";
  ordered_json rows = ordered_json::array();
  for (const auto target : {OrderTarget::OriginalField, OrderTarget::ModifiedField}) {
    for (const auto kind : {StepperKind::Euler, StepperKind::Heun, StepperKind::Taylor2}) {
      const double expected = (kind == StepperKind::Euler ? 1.0 : 2.0) + (target == OrderTarget::ModifiedField ? 1.0 : 0.0);
      const std::string target_name = target == OrderTarget::ModifiedField ? "modified" : "original";
      OrderCheckResult r;
      try {
        r = elevated_order_check(kind, field, z0, c.t_end, dts, target, engine);
      } catch (const OrderCheckError& e) {
        r = e.result();
        r.monotone = false;
      }
      table += std::string(to_string(kind)) + "," + target_name + "," + fmt(r.slope) + "," + fmt(expected) + "," +
               (r.monotone ? "true" : "false") + "\n";
      for (std::size_t i = 0; i < r.dts.size(); ++i) {
        errors += std::string(to_string(kind)) + "," + target_name + "," + fmt(r.dts[i]) + "," + fmt(r.errors[i]) + "\n";
      }
      rows.push_back({{"stepper", std::string(to_string(kind))},
                      {"target", target_name},
                      {"slope", r.slope},
                      {"expected", expected},
                      {"monotone", r.monotone}});
      log_line("convergence-order", std::string(to_string(kind)) + " vs " + target_name + ": slope " +
                                        short_number(r.slope) + (r.monotone ? "" : " (non-monotone, flagged)"));
    }
  }
  write_atomically(dir / "convergence-order.csv", table);
  write_atomically(dir / "convergence-order.errors.csv", errors);
  manifest["rows"] = rows;
  manifest["outputs"] = {"convergence-order.csv", "convergence-order.errors.csv"};
  write_manifest(dir, "convergence-order", manifest, clock);
  return 0;
}

int main(int argc, char** argv) {
  CLI::App app{"Multiscale integrator bias experiments: homogenized CIR parameters, ensembles, exact densities."};
  app.require_subcommand(1);
  Options options;
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out;
  app.add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Master seed (overrides numerical.seed)");
  app.add_option("--workers", options.workers, "Worker threads (0 = all cores)");
  auto* out_opt = app.add_option("--out", out, "Output directory (overrides output_dir)");
  app.add_flag("--full-scale", options.full_scale, "Allow the full-scale ensemble (160000 members, 4 epsilons)");
  app.fallthrough();

  using Command = int (*)(const ExperimentConfig&, const Options&);
  std::vector<std::pair<CLI::App*, Command>> commands{
      {app.add_subcommand("estimate-params", "Estimate alpha, sigma^2 and the CIR parameters"), cmd_estimate_params},
      {app.add_subcommand("simulate", "Ensemble histograms per epsilon and stepper"), cmd_simulate},
      {app.add_subcommand("exact-pdf", "Exact HMC and HMD densities on the histogram grid"), cmd_exact_pdf},
      {app.add_subcommand("compare", "Distances between histograms and exact densities"), cmd_compare},
      {app.add_subcommand("convergence-order", "Measured orders against the modified equations"),
       cmd_convergence_order}};

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    ExperimentConfig config = config_path.empty() ? parse_config("{}") : load_config(config_path);
    if (*seed_opt) config.numerical.seed = seed;
    if (*out_opt) config.output_dir = out;
    validate(config);
    if (!config_path.empty()) options.config = config_path;
    for (const auto& [sub, run] : commands) {
      if (sub->parsed()) return run(config, options);
    }
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace msbias::cli
