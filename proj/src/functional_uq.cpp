#include "fluxmc/functional_uq.hpp"

#include <cmath>
#include <limits>

#include "fluxmc/stats.hpp"

namespace fluxmc {

namespace {

void check_level(double level, const char* name) {
    if (!(level > 0.0 && level < 1.0))
        throw ConfigError(std::string(name) + " must lie in (0, 1)");
}

} // namespace

Vector functional_values(const EnsembleStore& store, const FunctionalSpec& spec) {
    const std::size_t m = store.members.cols;
    require_dim(spec.weights.size() == m, "functional_values: weight length mismatch");
    require_finite(spec.weights, "functional weights");

    Vector phis(store.size());
    for (std::size_t k = 0; k < store.size(); ++k) {
        const auto row = store.member(k);
        double s = 0.0;
        if (spec.include_control) {
            for (std::size_t i = 0; i < m; ++i) s += spec.weights[i] * row[i] * store.mu[i];
        } else {
            for (std::size_t i = 0; i < m; ++i) s += spec.weights[i] * row[i];
        }
        phis[k] = s;
    }
    return phis;
}

double empirical_functional_variance(const Vector& phis) {
    const std::size_t M = phis.size();
    require_dim(M >= 2, "empirical_functional_variance: need at least 2 values");
    double mean = 0.0;
    for (double v : phis) mean += v;
    mean /= static_cast<double>(M);
    double ss = 0.0;
    for (double v : phis) {
        const double d = v - mean;
        ss += d * d;
    }
    return ss / static_cast<double>(M - 1);
}

Interval variance_confidence_interval(double s2, std::size_t members, double alpha,
                                      IntervalSide side) {
    require_dim(members >= 2, "variance_confidence_interval: members >= 2 required");
    if (!(s2 >= 0.0) || !std::isfinite(s2))
        throw DefinitenessError("variance_confidence_interval: s2 must be nonnegative");
    check_level(alpha, "alpha");

    const double dof = static_cast<double>(members - 1);
    const double scaled = dof * s2;
    const double inf = std::numeric_limits<double>::infinity();
    switch (side) {
        case IntervalSide::two_sided:
            return {scaled / stats::chi2_quantile(dof, 1.0 - 0.5 * alpha),
                    scaled / stats::chi2_quantile(dof, 0.5 * alpha)};
        case IntervalSide::lower:
            return {scaled / stats::chi2_quantile(dof, 1.0 - alpha), inf};
        case IntervalSide::upper:
            return {0.0, scaled / stats::chi2_quantile(dof, alpha)};
    }
    throw ConfigError("variance_confidence_interval: unknown side");
}

Interval sd_confidence_interval(double s_hat, std::size_t members, double alpha,
                                IntervalSide side) {
    if (!(s_hat >= 0.0) || !std::isfinite(s_hat))
        throw DefinitenessError("sd_confidence_interval: s_hat must be nonnegative");
    const Interval v = variance_confidence_interval(s_hat * s_hat, members, alpha, side);
    return {std::sqrt(v.lo), std::sqrt(v.hi)};
}

SdFactors inflation_deflation_factors(std::size_t members, double alpha) {
    require_dim(members >= 2, "inflation_deflation_factors: members >= 2 required");
    check_level(alpha, "alpha");
    const double dof = static_cast<double>(members);
    return {std::sqrt(dof / stats::chi2_quantile(dof, 1.0 - 0.5 * alpha)),
            std::sqrt(dof / stats::chi2_quantile(dof, 0.5 * alpha))};
}

Interval credible_interval(double phi_map, double sigma, double gamma) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
        throw DefinitenessError("credible_interval: sigma must be nonnegative");
    if (!std::isfinite(phi_map))
        throw DefinitenessError("credible_interval: phi_map must be finite");
    check_level(gamma, "gamma");
    const double z = stats::normal_quantile(1.0 - 0.5 * gamma);
    return {phi_map - z * sigma, phi_map + z * sigma};
}

BracketedReport bracketed_report(double phi_map, double sigma_hat, std::size_t members,
                                 double alpha, double gamma) {
    if (!(sigma_hat >= 0.0) || !std::isfinite(sigma_hat))
        throw DefinitenessError("bracketed_report: sigma_hat must be nonnegative");
    if (!std::isfinite(phi_map))
        throw DefinitenessError("bracketed_report: phi_map must be finite");
    check_level(gamma, "gamma");

    BracketedReport r;
    r.phi_map = phi_map;
    r.sigma_hat = sigma_hat;
    r.members = members;
    r.alpha = alpha;
    r.gamma = gamma;
    r.z = stats::normal_quantile(1.0 - 0.5 * gamma);
    r.factors = inflation_deflation_factors(members, alpha);

    const double nominal = r.z * sigma_hat;
    const double shrunk = nominal * r.factors.deflate;
    const double grown = nominal * r.factors.inflate;
    r.nominal = {phi_map - nominal, phi_map + nominal};
    r.deflated = {phi_map - shrunk, phi_map + shrunk};
    r.inflated = {phi_map - grown, phi_map + grown};
    r.lower_endpoint = {phi_map - grown, phi_map - shrunk};
    r.upper_endpoint = {phi_map + shrunk, phi_map + grown};
    return r;
}

double uncertainty_reduction(double sigma_posterior, double sigma_prior) {
    if (!(sigma_prior > 0.0) || !std::isfinite(sigma_prior))
        throw DefinitenessError("uncertainty_reduction: prior sd must be positive");
    if (!(sigma_posterior >= 0.0) || !std::isfinite(sigma_posterior))
        throw DefinitenessError("uncertainty_reduction: posterior sd must be nonnegative");
    return 1.0 - sigma_posterior / sigma_prior;
}

double prior_functional_sd(const FunctionalSpec& spec, const Vector& mu, double b2,
                           PriorSdConvention convention) {
    require_dim(spec.weights.size() == mu.size(), "prior_functional_sd: length mismatch");
    if (!(b2 > 0.0) || !std::isfinite(b2))
        throw DefinitenessError("prior_functional_sd: b2 must be strictly positive");
    const double b = std::sqrt(b2);

    if (convention == PriorSdConvention::coherent) {
        double s = 0.0;
        for (std::size_t i = 0; i < mu.size(); ++i)
            s += spec.weights[i] * (spec.include_control ? mu[i] : 1.0);
        return b * std::abs(s);
    }
    double ss = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double w = spec.weights[i] * (spec.include_control ? mu[i] : 1.0);
        ss += w * w;
    }
    return b * std::sqrt(ss);
}

} // namespace fluxmc
