#pragma once

// Dependency-free distribution functions: regularized incomplete gamma,
// chi-squared CDF/PDF/quantile, standard normal CDF/quantile, and a
// one-sample Kolmogorov-Smirnov helper.

#include <cstddef>
#include <functional>
#include <vector>

namespace fluxmc::stats {

/// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
/// Series expansion for x < a, continued fraction otherwise.
double reg_lower_gamma(double a, double x);

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
double reg_upper_gamma(double a, double x);

double chi2_cdf(double x, double dof);
double chi2_pdf(double x, double dof);

/// Inverse chi-squared CDF: x with CDF(x) = p, p in (0, 1), dof > 0.
/// Wilson-Hilferty start refined by safeguarded Newton to 1e-12 relative.
double chi2_quantile(double dof, double p);

double normal_cdf(double x);

/// Inverse standard normal CDF, p in (0, 1). Antisymmetric by construction:
/// quantile(1 - p) == -quantile(p) exactly.
double normal_quantile(double p);

/// One-sample KS statistic sup_x |F_n(x) - F(x)| against a given CDF.
double ks_statistic(std::vector<double> samples,
                    const std::function<double(double)>& cdf);

/// Asymptotic two-sided KS critical value sqrt(-ln(alpha/2)/2) / sqrt(n).
double ks_critical_value(double alpha, std::size_t n);

} // namespace fluxmc::stats
