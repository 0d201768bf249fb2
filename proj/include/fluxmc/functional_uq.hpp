#pragma once

// Uncertainty quantification for scalar functionals phi = h^T theta of the
// flux field. The ensemble variance of phi is chi-squared distributed around
// the true posterior variance, which yields exact confidence intervals for
// the variance, multiplicative inflation/deflation factors for the reported
// standard deviation, and bracketed credible-interval endpoints.

#include <cstdint>
#include <string>
#include <vector>

#include "fluxmc/ensemble.hpp"
#include "fluxmc/linalg.hpp"

namespace fluxmc {

struct FunctionalSpec {
    std::string label;
    Vector weights; // h, length = control dim
    // true: phi = h^T (c .* mu) (flux space); false: phi = h^T c.
    bool include_control = true;
};

/// phi_k for every retained member, streamed row by row.
Vector functional_values(const EnsembleStore& store, const FunctionalSpec& spec);

/// Two-pass unbiased sample variance, divisor M - 1. Requires M >= 2.
double empirical_functional_variance(const Vector& phis);

enum class IntervalSide { two_sided, lower, upper };

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Equal-tailed confidence interval for the true variance sigma^2 given the
/// sample variance of M members: [(M-1) s2 / q_hi, (M-1) s2 / q_lo] with
/// chi-squared quantiles on M - 1 degrees of freedom. One-sided variants
/// put all of alpha in the named tail (lower -> [bound, inf)).
Interval variance_confidence_interval(double s2, std::size_t members, double alpha,
                                      IntervalSide side = IntervalSide::two_sided);

/// Square root of the variance interval, as an interval for sigma.
Interval sd_confidence_interval(double s_hat, std::size_t members, double alpha,
                                IntervalSide side = IntervalSide::two_sided);

struct SdFactors {
    double deflate = 0.0; // L: s_hat * L bounds sigma from below
    double inflate = 0.0; // R: s_hat * R bounds sigma from above
};

/// Multiplicative factors L = sqrt(M / q_hi), R = sqrt(M / q_lo) with
/// chi-squared quantiles on M degrees of freedom. Note the convention:
/// reported factor tables use dof = M, while the confidence intervals above
/// use dof = M - 1.
SdFactors inflation_deflation_factors(std::size_t members, double alpha);

/// phi_map +- z_{1 - gamma/2} sigma.
Interval credible_interval(double phi_map, double sigma, double gamma);

struct BracketedReport {
    double phi_map = 0.0;
    double sigma_hat = 0.0;
    std::size_t members = 0;
    double alpha = 0.0; // confidence level for the factors
    double gamma = 0.0; // credibility level for the interval
    double z = 0.0;     // normal quantile z_{1 - gamma/2}
    SdFactors factors;
    Interval nominal;        // phi_map -+ z s_hat
    Interval deflated;       // phi_map -+ z s_hat L
    Interval inflated;       // phi_map -+ z s_hat R
    Interval lower_endpoint; // bracket for the interval's lower endpoint
    Interval upper_endpoint; // bracket for the interval's upper endpoint
};

/// Nominal credible interval plus brackets that bound where each endpoint
/// can lie once the sd estimation error is accounted for. Invariant:
/// deflated within nominal within inflated.
BracketedReport bracketed_report(double phi_map, double sigma_hat, std::size_t members,
                                 double alpha, double gamma);

/// 1 - sigma_posterior / sigma_prior, the fraction of prior sd removed.
double uncertainty_reduction(double sigma_posterior, double sigma_prior);

/// Prior sd of the functional. Under the sampling model c ~ N(., b^2 I) the
/// flux-space functional has sd b * sqrt(sum_i h_i^2 mu_i^2); the coherent
/// alternative b * |h^T mu| treats the whole field as one scaled draw.
enum class PriorSdConvention { independent, coherent };
double prior_functional_sd(const FunctionalSpec& spec, const Vector& mu, double b2,
                           PriorSdConvention convention = PriorSdConvention::independent);

} // namespace fluxmc
