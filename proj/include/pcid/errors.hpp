#pragma once

#include <stdexcept>
#include <string>

namespace pcid {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Argument outside the domain of the operation (time before t0, empty window, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

/// A filter or plant state became non-finite.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, double time)
        : Error(what + " (t = " + std::to_string(time) + ")"), time_(time) {}

    [[nodiscard]] double time() const noexcept { return time_; }

private:
    double time_;
};

}  // namespace pcid
