#pragma once

#include <stdexcept>
#include <string>

namespace nireg {

/// Invalid configuration or argument contract violation (CLI exit code 2).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad input data: I/O failures, parse errors, contract violations in
/// ingested datasets (CLI exit code 3).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure: non-finite values, broken monotonicity, degenerate
/// geometry that cannot be repaired (CLI exit code 4).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace nireg
