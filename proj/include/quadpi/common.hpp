#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace quadpi {

// Error hierarchy. Everything user-facing derives from Error so the CLI can
// map failures onto its exit-code contract.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad arguments or states violating a documented precondition.
struct InvalidInputError : Error {
    using Error::Error;
};

// Iterative solver failed to converge; carries the last residual seen.
struct ConvergenceError : Error {
    double last_residual;
    ConvergenceError(const std::string& msg, double residual)
        : Error(msg), last_residual(residual) {}
};

// Rank-deficient or near-singular regression problem; names the column.
struct ConditioningError : Error {
    std::string column;
    ConditioningError(const std::string& msg, std::string col)
        : Error(msg), column(std::move(col)) {}
};

// Not enough samples for the requested estimate.
struct InsufficientDataError : Error {
    using Error::Error;
};

// Malformed configuration / preset document; names the offending key.
struct SchemaError : Error {
    std::string key;
    SchemaError(const std::string& msg, std::string k) : Error(msg), key(std::move(k)) {}
};

// Training produced a non-finite loss or parameter.
struct DivergenceError : Error {
    int epoch;
    DivergenceError(const std::string& msg, int at_epoch) : Error(msg), epoch(at_epoch) {}
};

struct IoError : Error {
    using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidInputError(msg);
}

inline void require_finite(double x, const char* name) {
    if (!std::isfinite(x)) throw InvalidInputError(std::string(name) + " is not finite");
}

}  // namespace quadpi
