#pragma once

#include <stdexcept>
#include <string>

namespace ctms {

/// Invalid or inconsistent configuration, parameters or arguments.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical fault inside the plant or a model builder (NaN, negative
/// occupancy, dimension mismatch).
class ModelFault : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File-system or parse failures of persisted artifacts.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The QP solver did not return a usable optimum.
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace ctms
