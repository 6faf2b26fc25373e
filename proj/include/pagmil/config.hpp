#pragma once

#include <string>

#include "pagmil/cl_harness.hpp"

namespace pagmil {

/// The default 4-task synthetic protocol: binary tasks whose tumor directions
/// come in opposing pairs and whose style offsets (descending norm) and
/// thumbnail tints separate the tasks.
ExperimentConfig default_experiment_config();

/// Parse a config document. Starts from the defaults, overrides every key
/// present, rejects unknown keys, and validates. Throws ConfigError with the
/// offending field or line.
ExperimentConfig experiment_config_from_json(const std::string& json_text);
ExperimentConfig read_config_file(const std::string& path);

/// Canonical JSON with every field explicit; parsing it back reproduces the
/// config exactly.
std::string experiment_config_to_json(const ExperimentConfig& config);

void validate_experiment_config(const ExperimentConfig& config);

} // namespace pagmil
