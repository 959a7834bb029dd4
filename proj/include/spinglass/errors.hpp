#pragma once

#include <stdexcept>
#include <string>

namespace spinglass {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input failed a structural check (bad model, bad pair, bad config).
class ValidationError : public Error {
public:
    using Error::Error;
};

// Argument outside the domain of a function, e.g. |q^s| > 1.
class DomainError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// b^s <= d^s(0) or a log of a nonpositive argument in the Parisi functional.
class ConstraintViolation : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Overflow, non-convergence, or a memory guard tripping.
class NumericalError : public Error {
public:
    using Error::Error;
};

// The requested computation is not justified for this input (convexity guard).
class RefusedError : public Error {
public:
    using Error::Error;
};

}  // namespace spinglass
