#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ttsa {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid or incomplete configuration (bad schedule, missing fixed point, ...).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Outside the mathematical domain of an operation (e.g. delta == 1 in m(x)).
class DomainError : public Error {
public:
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

/// Iterative numerics that failed to converge or hit an impossible value.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

/// A trajectory left the finite region. Carries the iteration that produced it.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& msg, std::uint64_t iteration)
        : Error(msg), iteration_(iteration) {}
    std::uint64_t iteration() const noexcept { return iteration_; }

private:
    std::uint64_t iteration_;
};

class PreconditionError : public Error {
public:
    explicit PreconditionError(const std::string& msg) : Error(msg) {}
};

class InsufficientDataError : public Error {
public:
    explicit InsufficientDataError(const std::string& msg) : Error(msg) {}
};

/// File schema problems: wrong version, missing column or field.
class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace ttsa
