#pragma once

#include <stdexcept>
#include <string>

namespace pscr {

// Bad user input: config keys, file contents, out-of-range arguments.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/layer shape mismatches.
struct DimensionError : ValidationError {
    explicit DimensionError(const std::string& msg) : ValidationError(msg) {}
};

// Malformed on-disk data (PPM, CSV, checkpoint).
struct FormatError : ValidationError {
    explicit FormatError(const std::string& msg) : ValidationError(msg) {}
};

// Model used in the wrong mode (Direct vs Contrastive).
struct ConfigError : ValidationError {
    explicit ConfigError(const std::string& msg) : ValidationError(msg) {}
};

// Correlation of a constant vector; never silently reported as 0.
struct UndefinedCorrelationError : std::runtime_error {
    explicit UndefinedCorrelationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace pscr
