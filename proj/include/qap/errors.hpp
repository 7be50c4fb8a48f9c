#ifndef QAP_ERRORS_HPP
#define QAP_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace qap {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "Error"; }
};

/// A precondition on a physical parameter was violated.
class DomainError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "DomainError"; }
};

/// Array lengths or grid shapes disagree.
class ShapeError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "ShapeError"; }
};

/// The explicit transport integrator would be unstable on the requested grid.
class StepSizeError : public Error {
public:
    StepSizeError(const std::string& what, int suggested_steps)
        : Error(what), suggested_steps_(suggested_steps) {}
    const char* kind() const noexcept override { return "StepSizeError"; }
    int suggested_steps() const noexcept { return suggested_steps_; }

private:
    int suggested_steps_;
};

/// The stationarity (KKT) matrix is singular to working precision.
class DegenerateSystemError : public Error {
public:
    DegenerateSystemError(const std::string& what, std::size_t null_dimension)
        : Error(what), null_dimension_(null_dimension) {}
    const char* kind() const noexcept override { return "DegenerateSystemError"; }
    std::size_t null_dimension() const noexcept { return null_dimension_; }

private:
    std::size_t null_dimension_;
};

/// The quadratic form handed to the normal-mode solver is indefinite.
class NotAHamiltonianError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "NotAHamiltonianError"; }
};

/// Root finding on the multiplier gradient did not reach tolerance.
class NoStationaryPointError : public Error {
public:
    NoStationaryPointError(const std::string& what, std::vector<double> gradient_trace)
        : Error(what), trace_(std::move(gradient_trace)) {}
    const char* kind() const noexcept override { return "NoStationaryPointError"; }
    const std::vector<double>& trace() const noexcept { return trace_; }

private:
    std::vector<double> trace_;
};

/// One side of the A/s + B*s scale structure vanishes, so no interior stationary scale exists.
class DegenerateScaleError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "DegenerateScaleError"; }
};

/// Malformed or invalid run configuration.
class ConfigError : public Error {
public:
    ConfigError(const std::string& what, std::string field, int line = 0, int column = 0)
        : Error(what), field_(std::move(field)), line_(line), column_(column) {}
    const char* kind() const noexcept override { return "ConfigError"; }
    const std::string& field() const noexcept { return field_; }
    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }

private:
    std::string field_;
    int line_;
    int column_;
};

}  // namespace qap

#endif  // QAP_ERRORS_HPP
