#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ieti {

/// Base class for all errors raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Knot insertion would exceed the maximal interior multiplicity.
struct RefinementError : Error {
    using Error::Error;
};

/// Two patch sides declared as an interface do not match.
struct NonConformingError : Error {
    using Error::Error;
};

/// det(grad G) <= 0 at a requested parameter point.
struct SingularGeometryError : Error {
    using Error::Error;
};

/// Cholesky pivot failure: the matrix is not symmetric positive definite.
struct NotSpdError : Error {
    using Error::Error;
};

/// The saddle point matrix [[K, C^T], [C, 0]] is rank deficient.
struct SingularSaddleError : Error {
    using Error::Error;
};

/// Non-positive curvature p^T A p encountered inside PCG.
struct IndefiniteOperatorError : Error {
    using Error::Error;
};

/// Invalid solver configuration, e.g. a floating patch without primal
/// constraints controlling its kernel.
struct ConfigError : Error {
    using Error::Error;
};

/// PCG failed to reach the requested tolerance within max_it iterations.
struct SolverError : Error {
    SolverError(const std::string& what, std::vector<double> history)
        : Error(what), residual_history(std::move(history)) {}

    std::vector<double> residual_history;
};

}  // namespace ieti
