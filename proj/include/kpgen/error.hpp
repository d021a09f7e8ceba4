#pragma once

#include <stdexcept>
#include <string>

namespace kpgen {

/// Malformed or inconsistent input data (corpus lines, vector files, index files).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid hyperparameters or run configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad command-line usage (missing flags, missing input files).
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace kpgen
