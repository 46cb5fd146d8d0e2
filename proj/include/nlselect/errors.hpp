#pragma once

#include <stdexcept>
#include <string>

namespace nlselect {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A pMOM coefficient sits on the density's zero pole (|beta_i| < 1e-300).
struct ZeroCoefficient : Error {
    using Error::Error;
};

/// tau or sigma^2 outside (0, inf).
struct NonPositiveScale : Error {
    using Error::Error;
};

/// Newton iteration cap reached with the gradient still above tolerance.
struct NonConvergence : Error {
    using Error::Error;
};

/// X_k'X_k numerically rank-deficient beyond what the ridge can absorb.
struct SingularDesign : Error {
    using Error::Error;
};

/// Asked for the best entry of an empty scored-model set.
struct EmptySet : Error {
    using Error::Error;
};

/// Exact Gaussian moments are only available up to dimension 2.
struct DimensionTooLarge : Error {
    using Error::Error;
};

/// Node doubling moved the quadrature value by more than the tolerance.
struct NonConvergedQuadrature : Error {
    using Error::Error;
};

struct MalformedCsv : Error {
    using Error::Error;
};

struct ZeroVarianceColumn : Error {
    using Error::Error;
};

struct MissingColumn : Error {
    using Error::Error;
};

} // namespace nlselect
