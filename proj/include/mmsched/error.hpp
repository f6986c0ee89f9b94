#pragma once

#include <stdexcept>
#include <string>

namespace mmsched {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A model or operation parameter is outside its valid domain.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Malformed or empty input data (traces, CSV rows).
class InputError : public Error {
public:
    using Error::Error;
};

/// Run configuration is inconsistent or cannot be parsed.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// An iterative numerical method failed to converge.
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, double residual)
        : Error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}

    [[nodiscard]] double residual() const noexcept { return residual_; }

private:
    double residual_;
};

/// A model would exceed the configured state-space budget.
class SizeError : public Error {
public:
    using Error::Error;
};

}  // namespace mmsched
