#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "msbias/cli.hpp"
#include "msbias/errors.hpp"

namespace msbias::cli {

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seeds are read as size_t");

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

// Reads the keys of one JSON object and rejects the ones nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      read(*it, out);
    } catch (const json::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
  }

  std::optional<Section> sub(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return std::nullopt;
    return Section(*it, path_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown config key " + path_ + "." + k);
    }
  }

 private:
  static void read(const json& v, double& out) {
    if (!v.is_number()) throw json::type_error::create(302, "number expected", &v);
    out = v.get<double>();
  }
  static void read(const json& v, int& out) {
    if (!v.is_number_integer()) throw json::type_error::create(302, "integer expected", &v);
    out = v.get<int>();
  }
  static void read(const json& v, std::size_t& out) {
    if (!v.is_number_unsigned()) throw json::type_error::create(302, "unsigned integer expected", &v);
    out = v.get<std::size_t>();
  }
  static void read(const json& v, bool& out) {
    if (!v.is_boolean()) throw json::type_error::create(302, "boolean expected", &v);
    out = v.get<bool>();
  }
  static void read(const json& v, std::string& out) {
    if (!v.is_string()) throw json::type_error::create(302, "string expected", &v);
    out = v.get<std::string>();
  }
  static void read(const json& v, std::vector<double>& out) {
    if (!v.is_array()) throw json::type_error::create(302, "array expected", &v);
    out.clear();
    for (const auto& e : v) {
      double d = 0.0;
      read(e, d);
      out.push_back(d);
    }
  }
  static void read(const json& v, std::vector<StepperKind>& out) {
    if (!v.is_array()) throw json::type_error::create(302, "array expected", &v);
    out.clear();
    for (const auto& e : v) {
      std::string s;
      read(e, s);
      out.push_back(parse_stepper(s));
    }
  }
  static void read(const json& v, PositivityMode& out) {
    std::string s;
    read(v, s);
    out = parse_positivity(s);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid config: " + what);
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  Section top(root, "config");
  top.get("system", c.system);
  top.get("output_dir", c.output_dir);
  if (auto s = top.sub("physical")) {
    s->get("a", c.physical.slow.a);
    s->get("b", c.physical.slow.b);
    s->get("c", c.physical.slow.c);
    s->get("r", c.physical.fast.r);
    s->get("s", c.physical.fast.s);
    s->get("u", c.physical.fast.u);
    s->finish();
  }
  if (auto s = top.sub("numerical")) {
    auto& n = c.numerical;
    s->get("epsilon", n.epsilons);
    s->get("kappa", n.kappa);
    s->get("K", n.K);
    s->get("steppers", n.steppers);
    s->get("n_members", n.n_members);
    s->get("t_end", n.t_end);
    s->get("x0", n.x0);
    s->get("transient", n.transient);
    s->get("seed", n.seed);
    s->get("positivity", n.positivity);
    s->get("bin_width", n.bin_width);
    s->get("write_values", n.write_values);
    s->finish();
  }
  if (auto s = top.sub("estimation")) {
    auto& e = c.estimation;
    s->get("alpha_T", e.alpha_T);
    s->get("alpha_members", e.alpha_members);
    s->get("burn_in", e.burn_in);
    s->get("bp_epsilon", e.bp_epsilon);
    s->get("bp_members", e.bp_members);
    s->get("acf_members", e.acf_members);
    s->get("acf_member_T", e.acf_member_T);
    s->get("acf_max_lag", e.acf_max_lag);
    s->get("plateau_rel_tol", e.plateau_rel_tol);
    s->get("plateau_window_periods", e.plateau_window_periods);
    s->get("discrete_members", e.discrete_members);
    s->get("discrete_samples", e.discrete_samples);
    s->get("params_file", e.params_file);
    s->get("estimate_if_missing", e.estimate_if_missing);
    s->finish();
  }
  if (auto s = top.sub("exact_pdf")) {
    s->get("t", c.exact_pdf.t);
    s->get("stationary", c.exact_pdf.stationary);
    s->finish();
  }
  if (auto s = top.sub("compare")) {
    s->get("simulate_manifest", c.compare.simulate_manifest);
    s->get("exact_pdf", c.compare.exact_pdf);
    s->get("bootstrap_resamples", c.compare.bootstrap_resamples);
    s->finish();
  }
  if (auto s = top.sub("convergence")) {
    s->get("field", c.convergence.field);
    s->get("t_end", c.convergence.t_end);
    s->get("dt0", c.convergence.dt0);
    s->get("levels", c.convergence.levels);
    s->get("jacobian", c.convergence.jacobian);
    s->finish();
  }
  top.finish();
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void validate(const ExperimentConfig& c) {
  const auto systems = registered_systems();
  require(std::find(systems.begin(), systems.end(), c.system) != systems.end(), "unknown system " + c.system);
  validate(c.physical.slow);
  for (const double p : {c.physical.fast.r, c.physical.fast.s, c.physical.fast.u}) {
    require(std::isfinite(p), "physical r, s, u must be finite");
  }
  const auto& n = c.numerical;
  require(!n.epsilons.empty(), "numerical.epsilon must list at least one value");
  for (const double e : n.epsilons) require(e > 0.0 && std::isfinite(e), "numerical.epsilon values must be positive");
  require(n.kappa > 0.0, "numerical.kappa must be positive");
  require(n.K >= 1, "numerical.K must be >= 1");
  require(!n.steppers.empty(), "numerical.steppers must list at least one stepper");
  require(n.n_members >= 1, "numerical.n_members must be >= 1");
  require(n.t_end > 0.0, "numerical.t_end must be positive");
  require(n.x0 >= 0.0, "numerical.x0 must be >= 0");
  require(n.transient > 0.0, "numerical.transient must be positive");
  require(n.bin_width > 0.0, "numerical.bin_width must be positive");
  const auto& e = c.estimation;
  require(e.alpha_T > e.burn_in && e.burn_in > 0.0, "estimation needs alpha_T > burn_in > 0");
  require(e.alpha_members >= 2, "estimation.alpha_members must be >= 2");
  require(e.bp_epsilon > 0.0 && e.bp_epsilon <= 0.05, "estimation.bp_epsilon must be in (0, 0.05]");
  require(e.bp_members >= 3, "estimation.bp_members must be >= 3");
  require(e.acf_members >= 2, "estimation.acf_members must be >= 2");
  require(e.acf_max_lag > 0.0 && e.acf_member_T >= 10.0 * e.acf_max_lag,
          "estimation.acf_member_T must be at least 10 acf_max_lag");
  require(e.plateau_rel_tol > 0.0, "estimation.plateau_rel_tol must be positive");
  require(e.plateau_window_periods >= 1, "estimation.plateau_window_periods must be >= 1");
  require(e.discrete_members >= 1 && e.discrete_samples >= 20, "estimation discrete sizes too small");
  require(c.exact_pdf.t > 0.0, "exact_pdf.t must be positive");
  require(c.compare.bootstrap_resamples >= 2, "compare.bootstrap_resamples must be >= 2");
  const auto& v = c.convergence;
  require(v.field == "cubic" || v.field == "planar", "convergence.field must be cubic or planar");
  require(v.jacobian == "central_fd" || v.jacobian == "analytic", "convergence.jacobian must be central_fd or analytic");
  require(v.t_end > 0.0 && v.dt0 > 0.0 && v.levels >= 3, "convergence needs t_end > 0, dt0 > 0, levels >= 3");
  require(!c.output_dir.empty(), "output_dir must not be empty");
}

std::string to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["system"] = c.system;
  j["physical"] = {{"a", c.physical.slow.a}, {"b", c.physical.slow.b}, {"c", c.physical.slow.c},
                   {"r", c.physical.fast.r}, {"s", c.physical.fast.s}, {"u", c.physical.fast.u}};
  const auto& n = c.numerical;
  std::vector<std::string> steppers;
  for (const auto k : n.steppers) steppers.emplace_back(to_string(k));
  j["numerical"] = {{"epsilon", n.epsilons},  {"kappa", n.kappa},         {"K", n.K},
                    {"steppers", steppers},   {"n_members", n.n_members}, {"t_end", n.t_end},
                    {"x0", n.x0},             {"transient", n.transient}, {"seed", n.seed},
                    {"positivity", std::string(to_string(n.positivity))}, {"bin_width", n.bin_width},
                    {"write_values", n.write_values}};
  const auto& e = c.estimation;
  j["estimation"] = {{"alpha_T", e.alpha_T},
                     {"alpha_members", e.alpha_members},
                     {"burn_in", e.burn_in},
                     {"bp_epsilon", e.bp_epsilon},
                     {"bp_members", e.bp_members},
                     {"acf_members", e.acf_members},
                     {"acf_member_T", e.acf_member_T},
                     {"acf_max_lag", e.acf_max_lag},
                     {"plateau_rel_tol", e.plateau_rel_tol},
                     {"plateau_window_periods", e.plateau_window_periods},
                     {"discrete_members", e.discrete_members},
                     {"discrete_samples", e.discrete_samples},
                     {"params_file", e.params_file},
                     {"estimate_if_missing", e.estimate_if_missing}};
  j["exact_pdf"] = {{"t", c.exact_pdf.t}, {"stationary", c.exact_pdf.stationary}};
  j["compare"] = {{"simulate_manifest", c.compare.simulate_manifest},
                  {"exact_pdf", c.compare.exact_pdf},
                  {"bootstrap_resamples", c.compare.bootstrap_resamples}};
  j["convergence"] = {{"field", c.convergence.field},   {"t_end", c.convergence.t_end},
                      {"dt0", c.convergence.dt0},       {"levels", c.convergence.levels},
                      {"jacobian", c.convergence.jacobian}};
  j["output_dir"] = c.output_dir;
  return j.dump(2);
}

namespace {

std::map<std::string, SystemFactory>& registry() {
  static std::map<std::string, SystemFactory> r{
      {"cir_rossler", [](const PhysicalParams& p, double eps) { return make_cir_rossler_system(p.slow, p.fast, eps); }}};
  return r;
}

}  // namespace

void register_system(const std::string& name, SystemFactory factory) { registry()[name] = std::move(factory); }

std::vector<std::string> registered_systems() {
  std::vector<std::string> out;
  for (const auto& [k, v] : registry()) out.push_back(k);
  return out;
}

MultiScaleSystem<Rossler> make_system(const ExperimentConfig& c, double epsilon) {
  const auto it = registry().find(c.system);
  if (it == registry().end()) throw ConfigError("unknown system " + c.system);
  return it->second(c.physical, epsilon);
}

}  // namespace msbias::cli
