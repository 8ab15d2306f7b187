#pragma once

#include <stdexcept>
#include <string>

namespace msplit {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand sizes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// An argument lies outside the documented domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// An iterative estimator ran out of iterations. Carries what it had.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double best, double lower, double upper, int iterations)
        : Error(what), best_(best), lower_(lower), upper_(upper), iterations_(iterations) {}

    double best_estimate() const noexcept { return best_; }
    double lower() const noexcept { return lower_; }
    double upper() const noexcept { return upper_; }
    int iterations() const noexcept { return iterations_; }

private:
    double best_;
    double lower_;
    double upper_;
    int iterations_;
};

inline void require_dims(long expected, long actual, const char* what) {
    if (expected != actual) {
        throw DimensionError(std::string(what) + ": expected dimension " + std::to_string(expected) +
                             ", got " + std::to_string(actual));
    }
}

} // namespace msplit
