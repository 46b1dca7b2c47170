#include "whatif/config.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "whatif/errors.hpp"
#include "whatif/numfmt.hpp"

namespace whatif::harness {

namespace {

std::size_t parse_count(std::string_view key, std::string_view v) {
  const auto n = parse_int(v);
  if (n < 0) throw ConfigError(std::string(key) + " must be nonnegative");
  return static_cast<std::size_t>(n);
}

std::uint64_t parse_u64(std::string_view key, std::string_view v) {
  const std::string s(v);
  try {
    std::size_t used = 0;
    if (!s.empty() && s[0] == '-') throw std::invalid_argument("negative");
    const auto x = std::stoull(s, &used, 0);
    if (used == s.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(std::string(key) + ": expected an unsigned integer, got '" + s + "'");
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(std::string(key) + ": expected true or false, got '" + std::string(v) + "'");
}

bool is_none(std::string_view v) { return v == "none" || v.empty(); }

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "environment", "alpha",     "temperature", "actual_app",          "target_app", "n_train",
      "n_cal",       "n_test",    "n_trials",    "base_seed",           "methods",    "weight_perturbation",
      "kpi_noise",   "users",     "ser_table",   "ser_n_mc",            "ser_seed",   "epochs",
      "retrain",     "sampling",  "max_log_draws"};
  return keys;
}

void apply_config_entry(ExperimentConfig& cfg, std::string_view key, std::string_view raw) {
  const auto v = trim(raw);
  if (key == "environment") {
    cfg.environment = parse_environment(v);
  } else if (key == "alpha") {
    cfg.alpha = parse_double(v);
  } else if (key == "temperature") {
    cfg.temperature = parse_double(v);
  } else if (key == "actual_app") {
    cfg.actual_app = std::string(v);
  } else if (key == "target_app") {
    cfg.target_app = std::string(v);
  } else if (key == "n_train") {
    cfg.n_train = parse_count(key, v);
  } else if (key == "n_cal") {
    cfg.n_cal = parse_count(key, v);
  } else if (key == "n_test") {
    cfg.n_test = parse_count(key, v);
  } else if (key == "n_trials") {
    cfg.n_trials = parse_count(key, v);
  } else if (key == "base_seed") {
    cfg.base_seed = parse_u64(key, v);
  } else if (key == "methods") {
    cfg.methods.clear();
    std::stringstream ss{std::string(v)};
    for (std::string m; std::getline(ss, m, ',');) cfg.methods.push_back(parse_method(trim(m)));
  } else if (key == "weight_perturbation") {
    if (is_none(v)) cfg.weight_perturbation.reset();
    else cfg.weight_perturbation = WeightPerturbation{parse_double(v)};
  } else if (key == "kpi_noise") {
    if (is_none(v)) cfg.kpi_noise.reset();
    else cfg.kpi_noise = NoiseSpec{parse_double(v)};
  } else if (key == "users") {
    cfg.users = parse_count(key, v);
  } else if (key == "ser_table") {
    cfg.ser_table = std::string(v);
  } else if (key == "ser_n_mc") {
    cfg.ser_n_mc = static_cast<int>(parse_int(v));
  } else if (key == "ser_seed") {
    cfg.ser_seed = parse_u64(key, v);
  } else if (key == "epochs") {
    cfg.epochs = parse_count(key, v);
  } else if (key == "retrain") {
    cfg.retrain = parse_bool(key, v);
  } else if (key == "sampling") {
    if (v == "conditional") cfg.sampling = SamplingMode::Conditional;
    else if (v == "logged") cfg.sampling = SamplingMode::Logged;
    else throw ConfigError("sampling: expected conditional or logged, got '" + std::string(v) + "'");
  } else if (key == "max_log_draws") {
    cfg.max_log_draws = parse_count(key, v);
  } else {
    throw ConfigError("unknown config key '" + std::string(key) + "'");
  }
}

std::string config_value(const ExperimentConfig& cfg, std::string_view key) {
  if (key == "environment") return std::string(environment_name(cfg.environment));
  if (key == "alpha") return format_double(cfg.alpha);
  if (key == "temperature") return format_double(cfg.temperature);
  if (key == "actual_app") return cfg.actual_app;
  if (key == "target_app") return cfg.target_app;
  if (key == "n_train") return std::to_string(cfg.n_train);
  if (key == "n_cal") return std::to_string(cfg.n_cal);
  if (key == "n_test") return std::to_string(cfg.n_test);
  if (key == "n_trials") return std::to_string(cfg.n_trials);
  if (key == "base_seed") return std::to_string(cfg.base_seed);
  if (key == "methods") {
    std::string s;
    for (auto m : cfg.methods) s += (s.empty() ? "" : ",") + std::string(method_name(m));
    return s;
  }
  if (key == "weight_perturbation")
    return cfg.weight_perturbation ? format_double(cfg.weight_perturbation->delta) : "none";
  if (key == "kpi_noise") return cfg.kpi_noise ? format_double(cfg.kpi_noise->sigma) : "none";
  if (key == "users") return std::to_string(cfg.users);
  if (key == "ser_table") return cfg.ser_table;
  if (key == "ser_n_mc") return std::to_string(cfg.ser_n_mc);
  if (key == "ser_seed") return std::to_string(cfg.ser_seed);
  if (key == "epochs") return std::to_string(cfg.epochs);
  if (key == "retrain") return cfg.retrain ? "true" : "false";
  if (key == "sampling") return cfg.sampling == SamplingMode::Conditional ? "conditional" : "logged";
  if (key == "max_log_draws") return std::to_string(cfg.max_log_draws);
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

ExperimentConfig parse_config(std::istream& in, ExperimentConfig cfg) {
  std::set<std::string, std::less<>> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const auto key = trim(s.substr(0, eq));
    if (!seen.insert(std::string(key)).second)
      throw ConfigError("config line " + std::to_string(lineno) + ": repeated key '" + std::string(key) + "'");
    try {
      apply_config_entry(cfg, key, s.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  return parse_config(in, std::move(base));
}

void write_config(const ExperimentConfig& cfg, std::ostream& out) {
  for (const auto& k : config_keys()) out << k << " = " << config_value(cfg, k) << '\n';
}

}  // namespace whatif::harness
