#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "whatif/experiment.hpp"

namespace whatif::harness {

/// Every key accepted in a config file, in canonical order.
const std::vector<std::string>& config_keys();

/// Sets one field from its text form; throws ConfigError on unknown keys or bad values.
void apply_config_entry(ExperimentConfig& cfg, std::string_view key, std::string_view value);
std::string config_value(const ExperimentConfig& cfg, std::string_view key);

/// `key = value` lines; `#` starts a comment; blank lines ignored; repeated keys rejected.
ExperimentConfig parse_config(std::istream& in, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});
void write_config(const ExperimentConfig& cfg, std::ostream& out);

}  // namespace whatif::harness
