#pragma once

#include <stdexcept>
#include <string>

namespace cspcl {

// Base class for every error thrown by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Vector norm below the configured floor where a direction is required.
struct ZeroNorm : Error {
    using Error::Error;
};

// Operands disagree on embedding dimension (or row counts are inconsistent).
struct DimensionMismatch : Error {
    using Error::Error;
};

// A scalar parameter is outside its documented domain.
struct DomainError : Error {
    using Error::Error;
};

// A loss was asked to operate on a group structure it cannot handle
// (e.g. fewer than two classes, or group size below the minimum).
struct DegenerateGroup : Error {
    using Error::Error;
};

// Strict grouping was requested but rows % k != 0.
struct IndivisibleCount : Error {
    using Error::Error;
};

// Fewer query rows than classes.
struct TooFewQueries : Error {
    using Error::Error;
};

// A synthetic prototype geometry cannot be realized (e.g. more orthogonal
// prototypes than dimensions, or unsatisfiable pairwise similarity targets).
struct InfeasibleGeometry : Error {
    using Error::Error;
};

// Loss or iterate became NaN/Inf during optimization; message names the step.
struct NonFiniteLoss : Error {
    using Error::Error;
};

// A finite-difference check was requested too close to a gradient branch
// boundary for the probe to be trustworthy.
struct BoundaryProximity : Error {
    using Error::Error;
};

// Configuration file / CLI argument problems (exit code 2 territory).
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace cspcl
