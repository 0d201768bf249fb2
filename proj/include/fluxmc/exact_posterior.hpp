#pragma once

// Closed-form Gaussian posterior for the linear model
//   y = A (c .* mu) + noise,   c ~ N(c^b, b^2 I),
// in the dimensionless control space, plus the push-forward to flux space.

#include "fluxmc/forward_model.hpp"
#include "fluxmc/linalg.hpp"

namespace fluxmc {

inline constexpr std::size_t kDefaultDenseCap = 4096;

struct GaussianPosterior {
    Vector mean;       // alpha
    Matrix covariance; // Sigma

    /// Checks shape, symmetry (1e-12 relative) and positive definiteness.
    void validate() const;
};

struct FluxPosterior {
    Vector mean;       // alpha .* mu
    Matrix covariance; // Sigma .* (mu mu^T)
};

/// Posterior precision (A^T R^-1 A) .* (mu mu^T) + I / b^2, Cholesky-factorized.
/// Requires an explicit operator matrix.
class PosteriorPrecision {
public:
    PosteriorPrecision(const ForwardOperator& op, const NoiseSpec& noise,
                       const PriorSpec& prior, const Vector& mu);

    std::size_t dim() const { return precision_.rows; }
    const Matrix& precision() const { return precision_; }

    /// x = Sigma rhs, i.e. solves (precision) x = rhs.
    Vector solve(const Vector& rhs) const;

    /// Materializes Sigma; refuses above the dense cap.
    Matrix covariance(std::size_t dense_cap = kDefaultDenseCap) const;

private:
    Matrix precision_;
    Matrix chol_lower_;
};

/// Sigma = ((A^T R^-1 A) .* mu mu^T + I / b^2)^-1, materialized.
Matrix posterior_covariance(const ForwardOperator& op, const NoiseSpec& noise,
                            const PriorSpec& prior, const Vector& mu,
                            std::size_t dense_cap = kDefaultDenseCap);

/// alpha = Sigma ((A^T R^-1 y) .* mu + c^b / b^2).
Vector posterior_mean(const Matrix& sigma, const ForwardOperator& op,
                      const NoiseSpec& noise, const Vector& y, const PriorSpec& prior,
                      const Vector& mu);

/// Push a control-space posterior to flux space through theta = c .* mu.
FluxPosterior flux_posterior(const GaussianPosterior& posterior, const Vector& mu);

/// One-step estimator c_map = Sigma ((A^T R^-1 y_k) .* mu + c_k / b^2).
Vector map_estimator(const ForwardOperator& op, const NoiseSpec& noise,
                     const Vector& prior_mean_k, const Vector& y_k,
                     const PriorSpec& prior, const Vector& mu, const Matrix& sigma);

/// Covariance of the estimator above under the sampling distribution of
/// (c_k, y_k), composed explicitly as Sigma P Sigma.
Matrix map_estimator_covariance(const ForwardOperator& op, const NoiseSpec& noise,
                                const PriorSpec& prior, const Vector& mu,
                                std::size_t dense_cap = kDefaultDenseCap);

} // namespace fluxmc
