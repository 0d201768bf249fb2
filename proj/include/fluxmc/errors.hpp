#pragma once

#include <stdexcept>
#include <string>

namespace fluxmc {

/// Input dimensions (or other preconditions on caller-supplied shapes) are wrong.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A quantity that must be strictly positive (variance, weight) is not.
class DefinitenessError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A matrix factorization failed (e.g. Cholesky of a non-SPD precision).
class FactorizationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The requested operation is not available on this code path
/// (matrix-free operator where an explicit matrix is required, or a
/// dense materialization above the configured cap).
class UnsupportedPathError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// A user-supplied matrix-free operator failed the randomized
/// adjoint-consistency probes at registration.
class AdjointConsistencyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Iterative numerics failed to converge within safeguards.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Experiment configuration is malformed or inconsistent.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Ensemble member solves failed beyond the configured tolerance.
class SolverPolicyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Base class for ensemble/matrix persistence failures.
class StoreIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File header is not a recognized format/version.
class StoreFormatError : public StoreIoError {
public:
    using StoreIoError::StoreIoError;
};

/// Payload length disagrees with the shape declared in the header.
class StoreShapeError : public StoreIoError {
public:
    using StoreIoError::StoreIoError;
};

/// Payload checksum does not match the header.
class StoreChecksumError : public StoreIoError {
public:
    using StoreIoError::StoreIoError;
};

/// Header metadata is missing fields or internally inconsistent.
class StoreMetadataError : public StoreIoError {
public:
    using StoreIoError::StoreIoError;
};

} // namespace fluxmc
