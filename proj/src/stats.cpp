#include "fluxmc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "fluxmc/errors.hpp"

namespace fluxmc::stats {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kTiny = std::numeric_limits<double>::min();
constexpr int kMaxGammaIter = 10'000'000;

// P(a,x) by the power series, valid and fast for x < a + 1.
double gamma_series(double a, double x, double log_prefactor) {
    double ap = a;
    double term = 1.0 / a;
    double sum = term;
    for (int i = 0; i < kMaxGammaIter; ++i) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::abs(term) < std::abs(sum) * kEps)
            return sum * std::exp(log_prefactor);
    }
    throw NumericalError("reg_lower_gamma: series did not converge");
}

// Q(a,x) by the Lentz continued fraction, valid for x >= a.
double gamma_cont_fraction(double a, double x, double log_prefactor) {
    double b = x + 1.0 - a;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kMaxGammaIter; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) return h * std::exp(log_prefactor);
    }
    throw NumericalError("reg_upper_gamma: continued fraction did not converge");
}

void check_gamma_args(double a, double x) {
    if (!(a > 0.0) || !std::isfinite(a))
        throw std::invalid_argument("incomplete gamma: a must be positive and finite");
    if (!(x >= 0.0) || !std::isfinite(x))
        throw std::invalid_argument("incomplete gamma: x must be nonnegative and finite");
}

// Acklam's rational approximation to the normal quantile, lower half only.
double normal_quantile_approx(double p) {
    static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                -2.759285104469687e+02, 1.383577518672690e+02,
                                -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                -1.556989798598866e+02, 6.680131188771972e+01,
                                -1.328068155288572e+01};
    static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                -2.400758277161838e+00, -2.549732539343734e+00,
                                4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

// Survival function 1 - CDF computed without cancellation.
double chi2_sf(double x, double dof) {
    if (!(x > 0.0)) return 1.0;
    if (std::isinf(x)) return 0.0;
    return reg_upper_gamma(0.5 * dof, 0.5 * x);
}

} // namespace

double reg_lower_gamma(double a, double x) {
    check_gamma_args(a, x);
    if (x == 0.0) return 0.0;
    const double log_prefactor = a * std::log(x) - x - std::lgamma(a);
    if (x < a) return gamma_series(a, x, log_prefactor);
    return 1.0 - gamma_cont_fraction(a, x, log_prefactor);
}

double reg_upper_gamma(double a, double x) {
    check_gamma_args(a, x);
    if (x == 0.0) return 1.0;
    const double log_prefactor = a * std::log(x) - x - std::lgamma(a);
    if (x < a) return 1.0 - gamma_series(a, x, log_prefactor);
    return gamma_cont_fraction(a, x, log_prefactor);
}

double chi2_cdf(double x, double dof) {
    if (!(dof > 0.0) || !std::isfinite(dof))
        throw std::invalid_argument("chi2_cdf: dof must be positive");
    if (!(x >= 0.0)) {
        if (std::isfinite(x)) return 0.0;
        if (x == -std::numeric_limits<double>::infinity()) return 0.0;
        throw std::invalid_argument("chi2_cdf: x is NaN");
    }
    if (std::isinf(x)) return 1.0;
    return reg_lower_gamma(0.5 * dof, 0.5 * x);
}

double chi2_pdf(double x, double dof) {
    if (!(dof > 0.0) || !std::isfinite(dof))
        throw std::invalid_argument("chi2_pdf: dof must be positive");
    if (!(x > 0.0)) return 0.0;
    const double a = 0.5 * dof;
    return std::exp((a - 1.0) * std::log(x) - 0.5 * x - std::lgamma(a) - a * std::numbers::ln2);
}

double chi2_quantile(double dof, double p) {
    if (!(dof > 0.0) || !std::isfinite(dof))
        throw std::invalid_argument("chi2_quantile: dof must be positive");
    if (!(p > 0.0 && p < 1.0))
        throw std::invalid_argument("chi2_quantile: p must lie in (0, 1)");

    // Newton targets the nearer tail so residuals stay well conditioned.
    const bool upper = p > 0.5;
    const double tail = upper ? 1.0 - p : p;

    // Wilson-Hilferty starting point.
    const double z = normal_quantile(p);
    const double t = 2.0 / (9.0 * dof);
    double x = dof * std::pow(std::max(1.0 - t + z * std::sqrt(t), 0.0), 3);
    if (!(x > 0.0) || !std::isfinite(x)) {
        const double a = 0.5 * dof;
        x = 2.0 * std::exp((std::log(p) + std::lgamma(a + 1.0)) / a);
        if (!(x > 0.0) || !std::isfinite(x)) x = dof;
    }

    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 200; ++iter) {
        const double resid = upper ? tail - chi2_sf(x, dof)
                                   : chi2_cdf(x, dof) - p;
        if (resid > 0.0)
            hi = std::min(hi, x);
        else
            lo = std::max(lo, x);

        const double pdf = chi2_pdf(x, dof);
        double next;
        if (pdf > 0.0 && std::isfinite(pdf)) {
            next = x - resid / pdf;
        } else {
            next = std::numeric_limits<double>::quiet_NaN();
        }
        if (!(next > lo) || !(next < hi) || !std::isfinite(next)) {
            next = std::isinf(hi) ? std::max(2.0 * x, x + 1.0) : 0.5 * (lo + hi);
        }
        const double delta = std::abs(next - x);
        x = next;
        if (delta <= 1e-12 * std::max(x, kTiny)) return x;
    }
    throw NumericalError("chi2_quantile: iteration did not converge");
}

double normal_cdf(double x) {
    return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0);
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::invalid_argument("normal_quantile: p must lie in (0, 1)");
    if (p == 0.5) return 0.0;
    if (p > 0.5) return -normal_quantile(1.0 - p);

    double x = normal_quantile_approx(p);
    // Two Halley refinements take the rational approximation to full precision.
    for (int i = 0; i < 2; ++i) {
        const double e = normal_cdf(x) - p;
        const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

double ks_statistic(std::vector<double> samples,
                    const std::function<double(double)>& cdf) {
    const std::size_t n = samples.size();
    if (n == 0) throw std::invalid_argument("ks_statistic: empty sample");
    std::sort(samples.begin(), samples.end());
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double f = cdf(samples[i]);
        const double lo = static_cast<double>(i) / static_cast<double>(n);
        const double hi = static_cast<double>(i + 1) / static_cast<double>(n);
        d = std::max(d, std::max(f - lo, hi - f));
    }
    return d;
}

double ks_critical_value(double alpha, std::size_t n) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("ks_critical_value: alpha must lie in (0, 1)");
    if (n == 0) throw std::invalid_argument("ks_critical_value: n must be positive");
    return std::sqrt(-std::log(0.5 * alpha) / 2.0) / std::sqrt(static_cast<double>(n));
}

} // namespace fluxmc::stats
