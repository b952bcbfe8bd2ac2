#pragma once

#include <stdexcept>
#include <string>

namespace sfp {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid argument values or malformed data.
struct InputError : Error {
    using Error::Error;
};

/// Incompatible matrix/vector dimensions or rank requests.
struct DimensionError : Error {
    using Error::Error;
};

/// Numerically singular problem with no regularization requested.
struct ConditioningError : Error {
    using Error::Error;
};

/// A grouped metric was asked of data that cannot support it.
struct MetricError : Error {
    using Error::Error;
};

/// Eigenvalue gaps too small for perturbation formulas.
struct DegenerateSpectrumError : Error {
    using Error::Error;
};

/// Report/config file does not match the expected schema or version.
struct SchemaError : Error {
    using Error::Error;
};

} // namespace sfp
