#pragma once

// Observation operators y = A x + z with diagonal Gaussian noise, plus the
// prior specification on the dimensionless control vector.

#include <cstdint>
#include <functional>
#include <memory>

#include "fluxmc/linalg.hpp"

namespace fluxmc {

struct PriorSpec {
    Vector mean;  // c^b
    double b2;    // shared prior variance, > 0

    PriorSpec(Vector mean_, double b2_);
    std::size_t dim() const { return mean.size(); }
};

struct NoiseSpec {
    Vector variances; // diagonal of R, strictly positive

    explicit NoiseSpec(Vector variances_);
    static NoiseSpec isotropic(double sigma2, std::size_t n);

    std::size_t dim() const { return variances.size(); }
    Vector precision_diag() const; // 1 / R_ii
};

/// Affine observation operator. Explicit (dense matrix) or matrix-free
/// (apply/adjoint callables, validated by randomized adjoint probes).
/// Copies share immutable state; a non-reentrant matrix-free operator is
/// serialized internally so callers may use it from worker threads.
class ForwardOperator {
public:
    using ApplyFn = std::function<Vector(const Vector&)>;

    static ForwardOperator from_matrix(Matrix a, Vector offset = {});
    static ForwardOperator from_callables(std::size_t output_dim, std::size_t input_dim,
                                          ApplyFn apply, ApplyFn adjoint,
                                          Vector offset = {}, bool reentrant = true,
                                          int probe_pairs = 32);

    std::size_t input_dim() const;  // m
    std::size_t output_dim() const; // n

    /// Linear part only: A x.
    Vector apply(const Vector& x) const;
    /// A^T w.
    Vector adjoint(const Vector& w) const;
    /// Full affine map A x + z.
    Vector observe(const Vector& x) const;

    const Vector& offset() const; // z, zero vector if none was given

    bool is_explicit() const;
    /// Dense matrix; UnsupportedPathError on matrix-free operators.
    const Matrix& matrix() const;

    /// Behavioral hash used to detect operator mismatch on reload.
    std::uint64_t fingerprint() const;

private:
    struct Impl;
    std::shared_ptr<const Impl> impl_;
    explicit ForwardOperator(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
};

/// Largest relative defect of <A v, w> == <v, A^T w> over random probe pairs.
double adjoint_defect(const ForwardOperator& op, int pairs = 32);

/// Remove the affine offset from raw observations: y = y_tilde - z.
Vector debias_observations(const Vector& y_tilde, const ForwardOperator& op);

/// 2x2 mixing operator [[1-eps, eps], [eps, 1-eps]], eps > 0.
ForwardOperator toy_operator(double epsilon);

/// Row-stochastic smoothing operator: n observations, each a normalized
/// Gaussian bump over the m control indices with seeded center/width jitter.
/// smoothness == 0 degenerates to one-hot rows.
ForwardOperator synthetic_operator(std::size_t output_dim, std::size_t input_dim,
                                   double smoothness, std::uint64_t seed);

} // namespace fluxmc
