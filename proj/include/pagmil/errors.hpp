#pragma once

#include <stdexcept>
#include <string>

namespace pagmil {

/// Bad configuration or malformed input file. Mapped to exit code 1 by the CLI.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A metric that is mathematically undefined for the given input
/// (e.g. AUC on a single-class label set). Callers that aggregate
/// metrics catch this and record the value as absent.
struct UndefinedMetricError : std::runtime_error {
    explicit UndefinedMetricError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A self-check (gradient check, oracle comparison) failed.
/// Mapped to exit code 3 by the CLI.
struct VerificationError : std::runtime_error {
    explicit VerificationError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace pagmil
