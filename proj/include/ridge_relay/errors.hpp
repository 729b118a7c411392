#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ridge_relay {

class RelayError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unknown covariate name or registry misuse.
class RegistryError : public RelayError {
public:
    using RelayError::RelayError;
};

/// Input failed a precondition (dimensions, finiteness, simplex, family).
class ValidationError : public RelayError {
public:
    using RelayError::RelayError;
};

class ConfigError : public RelayError {
public:
    using RelayError::RelayError;
};

/// A system that must be solved is singular (e.g. lambda = 0 with rank-deficient X).
class SingularityError : public RelayError {
public:
    using RelayError::RelayError;
};

/// IRLS failed to reach the gradient tolerance. Carries the last iterate.
class ConvergenceError : public RelayError {
public:
    ConvergenceError(const std::string& what, Eigen::VectorXd last_iterate, double gradient_norm,
                     int iterations)
        : RelayError(what),
          last_iterate_(std::move(last_iterate)),
          gradient_norm_(gradient_norm),
          iterations_(iterations) {}

    const Eigen::VectorXd& last_iterate() const noexcept { return last_iterate_; }
    double gradient_norm() const noexcept { return gradient_norm_; }
    int iterations() const noexcept { return iterations_; }

private:
    Eigen::VectorXd last_iterate_;
    double gradient_norm_;
    int iterations_;
};

/// Penalty selection could not produce a candidate (all scores infinite).
class SelectionError : public RelayError {
public:
    using RelayError::RelayError;
};

/// Variance-component estimation failed at every grid point.
class EstimationError : public RelayError {
public:
    using RelayError::RelayError;
};

/// Malformed CSV input.
class CsvError : public RelayError {
public:
    using RelayError::RelayError;
};

/// Malformed or incompatible state / config document.
class StateError : public RelayError {
public:
    using RelayError::RelayError;
};

/// Another process holds the state file's lock.
class LockError : public RelayError {
public:
    using RelayError::RelayError;
};

}  // namespace ridge_relay
