#pragma once

#include <stdexcept>
#include <string>

namespace cbdemand {

/// Bad run configuration (unknown mode, split outside data range, ...).
/// Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad or missing input data (schema mismatch, empty result after filters).
/// Maps to CLI exit code 3.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite value where a finite one is required (likelihoods, factors).
/// Maps to CLI exit code 4.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cbdemand
