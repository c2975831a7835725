#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace anisochill {

/// Base of every error the library throws. `exit_code()` is what the CLI
/// returns when the error escapes an experiment.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 3; }
};

/// Argument outside the mathematical domain of an operation (e.g. z = 0 for a
/// singular kernel, |s| > 1 for the logarithmic potential).
class DomainError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

/// Caller violated a documented precondition (incompatible Neumann data,
/// fields on mismatched grids, ...).
class UsageError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

/// Configuration failed validation. `key()` names the offending config key.
class ValidationError : public Error {
public:
    ValidationError(std::string key, const std::string& what)
        : Error("invalid `" + key + "`: " + what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }
    int exit_code() const noexcept override { return 2; }

private:
    std::string key_;
};

/// Family constants or other configured data are inconsistent (e.g. a kernel
/// whose bounding radial kernel is not normalized).
class ConfigurationError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

/// Iterative method or quadrature failed to reach its tolerance.
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, std::vector<double> history = {})
        : Error(what), history_(std::move(history)) {}
    /// Residual (or error-estimate) history leading to the failure.
    const std::vector<double>& history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

/// Pair storage would exceed the configured budget.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// A convergence claim checked at run time did not hold.
class AssertionFailure : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 4; }
};

} // namespace anisochill
