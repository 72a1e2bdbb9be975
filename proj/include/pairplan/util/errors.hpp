#pragma once

#include <stdexcept>
#include <string>

namespace pairplan {

// Bad user-facing configuration: unknown enum value, empty suite, G < 2, ...
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Dimension / length mismatch between tensors, trajectories or manifests.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// On-disk artifact cannot be decoded (wrong magic, truncation, version skew).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// A documented precondition of an operation was violated by the caller.
struct ContractViolation : std::logic_error {
    explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// Filesystem-level failure, carries the offending path in the message.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pairplan
