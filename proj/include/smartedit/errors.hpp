#pragma once

#include <stdexcept>
#include <string>

namespace smartedit {

/// Bad or inconsistent user configuration. CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A documented invariant was violated at runtime. CLI maps this to exit code 3.
struct InvariantViolation : std::runtime_error {
    explicit InvariantViolation(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor shape mismatch in an operation.
struct ShapeError : InvariantViolation {
    explicit ShapeError(const std::string& msg) : InvariantViolation(msg) {}
};

}  // namespace smartedit
