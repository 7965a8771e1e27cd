#pragma once

// Experiment configuration files: flat `[section]` tables of `key = value`
// lines (INI, and the matching subset of TOML). Sections are data, gen,
// window, clustering, model and pipeline; unknown keys are rejected.

#include "transmuse/pipeline.hpp"

#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <vector>

namespace transmuse {

/// `section.key` -> raw value text.
using Settings = std::map<std::string, std::string>;

/// Parses the file text; quotes are stripped, relative paths are left as is.
Settings parse_settings(std::istream& in);

/// Adds one `section.key=value` override.
void apply_override(Settings& settings, const std::string& assignment);

/// Builds the configuration. Relative `data.csv` and `pipeline.out_dir` paths
/// resolve against `base_dir`. Throws ValidationError naming the offending key.
ExperimentConfig build_config(const Settings& settings, const std::filesystem::path& base_dir);

/// Reads `path`, applies `overrides`, then the TRANSMUSE_SEED environment variable.
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace transmuse
