#pragma once

#include <stdexcept>
#include <string>

namespace hslim {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Argument outside the admissible domain (e.g. density at or past the packing limit).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Adaptive quadrature failed to reach its tolerance.
class QuadratureError : public Error {
public:
    using Error::Error;
};

/// No valid (threshold, constant) pair found for a pointwise-bound certificate,
/// or a renormalization function failed its admissibility check.
class CertificateError : public Error {
public:
    using Error::Error;
};

/// Fields on incompatible grids were combined.
class GridMismatch : public Error {
public:
    using Error::Error;
};

/// Grid cannot support the requested construction (e.g. cutoff shell too thin).
class GridError : public Error {
public:
    using Error::Error;
};

/// An iterative or spectral solve failed to reach its tolerance.
class SolverError : public Error {
public:
    using Error::Error;
};

/// Field expected to have zero mean does not, beyond tolerance.
class MeanError : public Error {
public:
    using Error::Error;
};

/// Time step violates a stability constraint.
class CFLError : public Error {
public:
    using Error::Error;
};

/// Vector field expected to be a discrete gradient is not curl-free.
class CurlError : public Error {
public:
    using Error::Error;
};

/// Fit window does not span the required range.
class WindowError : public Error {
public:
    using Error::Error;
};

/// Spectral tail of a solution exceeds the resolution-health threshold.
class ResolutionError : public Error {
public:
    using Error::Error;
};

/// Density left the admissible interval during a compressible solve.
class DensityError : public Error {
public:
    using Error::Error;
};

/// Snapshot sets passed to a comparison are not time-synchronized.
class SyncError : public Error {
public:
    using Error::Error;
};

/// Scalar parameter outside its admissible interval.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Study configuration violates an admissibility inequality.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Rate fit attempted on unusable data (e.g. non-positive gaps).
class FitError : public Error {
public:
    using Error::Error;
};

/// Filesystem failure while persisting outputs.
class IOError : public Error {
public:
    using Error::Error;
};

} // namespace hslim
