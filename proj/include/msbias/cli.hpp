#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "msbias/cir_analytics.hpp"
#include "msbias/dynamics.hpp"
#include "msbias/homogenization.hpp"
#include "msbias/integrators.hpp"

namespace msbias::cli {

struct PhysicalParams {
  CirSlowParams slow;
  RosslerParams fast;
};

struct NumericalParams {
  std::vector<double> epsilons{0.05};
  double kappa = 0.5;
  int K = 50;
  std::vector<StepperKind> steppers{StepperKind::Euler, StepperKind::Heun, StepperKind::Taylor2};
  std::size_t n_members = 10000;
  double t_end = 2.5;
  double x0 = 1.0;
  double transient = 25.0;
  std::uint64_t seed = 1;
  PositivityMode positivity = PositivityMode::ClampToZero;
  double bin_width = 0.005;
  bool write_values = true;
};

struct EstimationParams {
  double alpha_T = 3.2e4;
  std::size_t alpha_members = 100;
  double burn_in = 25.0;
  double bp_epsilon = 0.005;
  std::size_t bp_members = 1000;
  std::size_t acf_members = 1000;
  double acf_member_T = 2e4;
  double acf_max_lag = 1000.0;
  double plateau_rel_tol = 0.01;
  int plateau_window_periods = 4;
  std::size_t discrete_members = 24;
  std::size_t discrete_samples = 330000;
  /// Parameter CSV read by exact-pdf; empty means the estimate-params output
  /// in the output directory.
  std::string params_file;
  bool estimate_if_missing = false;
};

struct ExactPdfParams {
  double t = 2.5;
  bool stationary = false;
};

struct CompareParams {
  std::string simulate_manifest;
  std::string exact_pdf;
  int bootstrap_resamples = 200;
};

struct ConvergenceParams {
  std::string field = "cubic";
  double t_end = 1.0;
  double dt0 = 1.0 / 16.0;
  int levels = 6;
  std::string jacobian = "central_fd";
};

struct ExperimentConfig {
  std::string system = "cir_rossler";
  PhysicalParams physical;
  NumericalParams numerical;
  EstimationParams estimation;
  ExactPdfParams exact_pdf;
  CompareParams compare;
  ConvergenceParams convergence;
  std::string output_dir = "out";
};

/// Parses a JSON config. Every key is optional; unknown keys, wrong types and
/// invalid values throw ConfigError.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
void validate(const ExperimentConfig& config);
/// Fully resolved config as JSON text.
std::string to_json(const ExperimentConfig& config);

using SystemFactory = std::function<MultiScaleSystem<Rossler>(const PhysicalParams&, double epsilon)>;
void register_system(const std::string& name, SystemFactory factory);
MultiScaleSystem<Rossler> make_system(const ExperimentConfig& config, double epsilon);
std::vector<std::string> registered_systems();

struct ParameterRow {
  std::string quantity;
  std::string fast_map;
  double value = 0.0;
  double standard_error = 0.0;
  std::string method;
  std::string setting;
};

/// Homogenized parameters of both fast maps. HMC uses the Heun map and the
/// Brownian-path sigma^2; HMD uses the Euler map statistics.
struct ParameterSet {
  std::vector<ParameterRow> rows;

  const ParameterRow& find(const std::string& quantity, const std::string& fast_map,
                           const std::string& method = "") const;
  CirModel hmc(const CirSlowParams& slow, double x0) const;
  CirModel hmd(const CirSlowParams& slow, double x0) const;
};

/// Runs all estimators. `log` receives one line per finished estimator.
ParameterSet estimate_parameters(const ExperimentConfig& config, unsigned workers,
                                 const std::function<void(const std::string&)>& log = {});
void write_parameters_csv(const ParameterSet& p, const std::filesystem::path& path);
ParameterSet read_parameters_csv(const std::filesystem::path& path);

/// Seconds for one ensemble, from measured per-substep costs.
double estimated_ensemble_seconds(StepperKind kind, std::size_t n_members, double epsilon, double kappa, int K,
                                  double t_end, double transient, unsigned workers);

std::string color_for_epsilon_index(std::size_t i);

struct Options {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  unsigned workers = 0;
  std::optional<std::string> out;
  bool full_scale = false;
};

int cmd_estimate_params(const ExperimentConfig& config, const Options& options);
int cmd_simulate(const ExperimentConfig& config, const Options& options);
int cmd_exact_pdf(const ExperimentConfig& config, const Options& options);
int cmd_compare(const ExperimentConfig& config, const Options& options);
int cmd_convergence_order(const ExperimentConfig& config, const Options& options);

/// Entry point of the msbias tool. Exit codes: 0 success, 1 runtime or
/// estimator failure, 2 invalid configuration or command line.
int main(int argc, char** argv);

}  // namespace msbias::cli
