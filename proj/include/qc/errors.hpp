#pragma once

#include <stdexcept>
#include <string>

namespace qc {

// Bad input files: malformed lines, broken taxonomy links, schema violations.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Data that parses but violates a contract (non-leaf click, empty label set, ...).
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Bad configuration values (ratio sums, negative dims, inconsistent toggles).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Failures mid-computation: shape mismatches, NaN gradients, version mismatches.
struct RuntimeFault : std::runtime_error {
    explicit RuntimeFault(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace qc
