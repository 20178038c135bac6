#pragma once

#include <stdexcept>
#include <string>

namespace redbench {

// Invalid arguments or inputs that violate an operation's preconditions.
struct InputError : std::invalid_argument {
    explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed or truncated on-disk artifacts (models, datasets, tensors).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values surfaced during numeric evaluation.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Training diverged or could not proceed.
struct TrainError : std::runtime_error {
    explicit TrainError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem failures (unwritable paths, missing files).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Null-model fit with no usable spread (all statistics identical).
struct DegenerateFitError : std::runtime_error {
    explicit DegenerateFitError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace redbench
