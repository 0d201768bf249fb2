#include "fluxmc/exact_posterior.hpp"

#include <cmath>
#include <string>

#include "fluxmc/hadamard.hpp"

namespace fluxmc {

namespace {

void check_model_dims(const ForwardOperator& op, const NoiseSpec& noise,
                      const PriorSpec& prior, const Vector& mu) {
    require_dim(noise.dim() == op.output_dim(), "noise dimension != operator output");
    require_dim(prior.dim() == op.input_dim(), "prior dimension != operator input");
    require_dim(mu.size() == op.input_dim(), "mu dimension != operator input");
    require_finite(mu, "mu");
}

Matrix build_precision(const ForwardOperator& op, const NoiseSpec& noise,
                       const PriorSpec& prior, const Vector& mu) {
    check_model_dims(op, noise, prior, mu);
    if (!op.is_explicit())
        throw UnsupportedPathError(
            "posterior precision requires an explicit operator matrix");
    Matrix p = scaled_gram(op.matrix(), noise.precision_diag(), mu);
    add_scaled_identity(p, 1.0 / prior.b2);
    return symmetrize(p);
}

} // namespace

void GaussianPosterior::validate() const {
    require_dim(covariance.rows == covariance.cols, "posterior covariance not square");
    require_dim(mean.size() == covariance.rows, "posterior mean/covariance mismatch");
    require_finite(mean, "posterior mean");
    require_finite(covariance, "posterior covariance");
    const double asym = frobenius_norm(sub(covariance, transpose(covariance)));
    const double scale = frobenius_norm(covariance);
    if (asym > 1e-12 * std::max(scale, 1e-300))
        throw FactorizationError("posterior covariance is not symmetric");
    cholesky_lower(symmetrize(covariance)); // throws if not positive definite
}

PosteriorPrecision::PosteriorPrecision(const ForwardOperator& op, const NoiseSpec& noise,
                                       const PriorSpec& prior, const Vector& mu)
    : precision_(build_precision(op, noise, prior, mu)) {
    chol_lower_ = cholesky_lower(precision_);
}

Vector PosteriorPrecision::solve(const Vector& rhs) const {
    require_dim(rhs.size() == dim(), "PosteriorPrecision::solve: length mismatch");
    return cholesky_solve(chol_lower_, rhs);
}

Matrix PosteriorPrecision::covariance(std::size_t dense_cap) const {
    if (dim() > dense_cap)
        throw UnsupportedPathError("covariance materialization above dense cap (" +
                                   std::to_string(dim()) + " > " +
                                   std::to_string(dense_cap) + ")");
    return spd_inverse(precision_);
}

Matrix posterior_covariance(const ForwardOperator& op, const NoiseSpec& noise,
                            const PriorSpec& prior, const Vector& mu,
                            std::size_t dense_cap) {
    return PosteriorPrecision(op, noise, prior, mu).covariance(dense_cap);
}

Vector posterior_mean(const Matrix& sigma, const ForwardOperator& op,
                      const NoiseSpec& noise, const Vector& y, const PriorSpec& prior,
                      const Vector& mu) {
    check_model_dims(op, noise, prior, mu);
    require_dim(y.size() == op.output_dim(), "posterior_mean: observation length");
    require_dim(sigma.rows == op.input_dim() && sigma.cols == op.input_dim(),
                "posterior_mean: sigma shape");

    Vector weighted(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) weighted[i] = y[i] / noise.variances[i];
    Vector rhs = hadamard(op.adjoint(weighted), mu);
    axpy(1.0 / prior.b2, prior.mean, rhs);
    return matvec(sigma, rhs);
}

FluxPosterior flux_posterior(const GaussianPosterior& posterior, const Vector& mu) {
    require_dim(posterior.mean.size() == mu.size(), "flux_posterior: mu length");
    FluxPosterior fp;
    fp.mean = hadamard(posterior.mean, mu);
    fp.covariance = hadamard_outer(posterior.covariance, mu);
    return fp;
}

Vector map_estimator(const ForwardOperator& op, const NoiseSpec& noise,
                     const Vector& prior_mean_k, const Vector& y_k,
                     const PriorSpec& prior, const Vector& mu, const Matrix& sigma) {
    check_model_dims(op, noise, prior, mu);
    require_dim(prior_mean_k.size() == op.input_dim(), "map_estimator: prior draw length");
    require_dim(y_k.size() == op.output_dim(), "map_estimator: observation length");
    require_dim(sigma.rows == op.input_dim() && sigma.cols == op.input_dim(),
                "map_estimator: sigma shape");

    Vector weighted(y_k.size());
    for (std::size_t i = 0; i < y_k.size(); ++i) weighted[i] = y_k[i] / noise.variances[i];
    Vector rhs = hadamard(op.adjoint(weighted), mu);
    axpy(1.0 / prior.b2, prior_mean_k, rhs);
    return matvec(sigma, rhs);
}

Matrix map_estimator_covariance(const ForwardOperator& op, const NoiseSpec& noise,
                                const PriorSpec& prior, const Vector& mu,
                                std::size_t dense_cap) {
    // Cov[c_map] = Sigma (G + I/b^2) Sigma with G the noise-weighted gram;
    // composed literally rather than simplified, so round-trip identity
    // failures would be visible to callers comparing against Sigma.
    PosteriorPrecision prec(op, noise, prior, mu);
    const Matrix sigma = prec.covariance(dense_cap);
    return matmul(matmul(sigma, prec.precision()), sigma);
}

} // namespace fluxmc
