// errors.hpp - exception types shared by the cavityqed headers

#pragma once

#include <stdexcept>
#include <string>

namespace cavityqed {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Caller handed in something outside the documented domain.
struct InvalidArgument : Error {
    using Error::Error;
};

struct DimensionMismatch : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

struct UnsupportedLevelStructure : InvalidArgument {
    using InvalidArgument::InvalidArgument;
};

// Numerical failures: the inputs were fine but the computation did not
// produce a trustworthy answer.
struct NumericalError : Error {
    using Error::Error;
};

struct AmbiguousSteadyState : NumericalError {
    using NumericalError::NumericalError;
};

struct ConvergenceError : NumericalError {
    using NumericalError::NumericalError;
};

struct IntegrationError : NumericalError {
    using NumericalError::NumericalError;
};

struct UndefinedCorrelation : NumericalError {
    using NumericalError::NumericalError;
};

} // namespace cavityqed
