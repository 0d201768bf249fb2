#include "fluxmc/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "fluxmc/hadamard.hpp"
#include "fluxmc/io.hpp"
#include "fluxmc/rng.hpp"
#include "fluxmc/stats.hpp"

namespace fluxmc {

namespace {

// Small-ensemble threshold: warn once the 97.5% inflation factor exceeds 1.5.
constexpr double kNoisySdFactor = 1.5;

std::string ensure_out_dir(const std::string& out_dir) {
    if (out_dir.empty()) return out_dir;
    std::filesystem::create_directories(out_dir);
    return out_dir;
}

std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

void maybe_warn_small_ensemble(std::size_t members, double alpha,
                               std::vector<std::string>& warnings) {
    const SdFactors f = inflation_deflation_factors(members, alpha);
    if (f.inflate > kNoisySdFactor) {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "ensemble of %zu members: sd estimates carry large Monte Carlo "
                      "uncertainty (inflation factor %.4g)",
                      members, f.inflate);
        warnings.emplace_back(buf);
    }
}

Matrix sample_covariance_of_rows(const Matrix& rows) {
    EnsembleStore shim;
    shim.members = rows;
    shim.mu.assign(rows.cols, 1.0);
    shim.metadata.members = rows.rows;
    shim.metadata.control_dim = rows.cols;
    return empirical_covariance(shim);
}

} // namespace

double sample_covariance_error_bound(std::size_t members) {
    // Gaussian sample covariances concentrate at the 1/sqrt(M) rate; the
    // constant pins the 95% deviation bound for the 2x2 case at M = 1e6.
    return 0.01784 * std::sqrt(1e6 / static_cast<double>(members));
}

Toy2dResult run_toy2d(const Toy2dSettings& s) {
    require_dim(s.mu.size() == 2, "toy2d: mu must have length 2");
    require_dim(s.theta_true.size() == 2, "toy2d: theta_true must have length 2");

    const ForwardOperator op = toy_operator(s.epsilon);
    const NoiseSpec noise = NoiseSpec::isotropic(s.sigma2, 2);
    const PriorSpec prior(Vector(2, 1.0), s.b2);

    Toy2dResult r;
    r.sigma = posterior_covariance(op, noise, prior, s.mu);
    r.estimator_cov = map_estimator_covariance(op, noise, prior, s.mu);
    r.flux_cov = hadamard_outer(r.sigma, s.mu);
    r.flux_estimator_cov = hadamard_outer(r.estimator_cov, s.mu);

    EnsembleConfig cfg;
    cfg.members = s.members;
    cfg.master_seed = s.master_seed;
    cfg.solver = s.solver;
    cfg.solver_config = s.solver_config;
    const EnsembleStore store = run_ensemble(op, noise, prior, s.mu, cfg, s.workers);

    r.empirical_cov = empirical_covariance(store);
    r.empirical_flux_cov = sample_covariance_of_rows(flux_members(store));

    r.composition_rel_error = rel_frobenius_error(r.estimator_cov, r.sigma);
    r.scaling_rel_error = rel_spectral_error_symmetric(r.empirical_cov, r.sigma);
    r.flux_rel_error = rel_spectral_error_symmetric(r.empirical_flux_cov, r.flux_cov);
    r.error_bound = sample_covariance_error_bound(store.size());
    r.within_bound = r.scaling_rel_error <= r.error_bound;

    maybe_warn_small_ensemble(store.size(), 0.05, r.warnings);

    if (!s.out_dir.empty()) {
        const std::string dir = ensure_out_dir(s.out_dir);
        nlohmann::json doc;
        doc["settings"] = {{"epsilon", s.epsilon},
                           {"b2", s.b2},
                           {"sigma2", s.sigma2},
                           {"mu", s.mu},
                           {"theta_true", s.theta_true},
                           {"members", s.members},
                           {"master_seed", s.master_seed},
                           {"solver", to_string(s.solver)}};
        doc["posterior_covariance"] = to_json(r.sigma);
        doc["estimator_covariance"] = to_json(r.estimator_cov);
        doc["empirical_covariance"] = to_json(r.empirical_cov);
        doc["flux_covariance"] = to_json(r.flux_cov);
        doc["flux_estimator_covariance"] = to_json(r.flux_estimator_cov);
        doc["empirical_flux_covariance"] = to_json(r.empirical_flux_cov);
        doc["errors"] = {{"composition_rel_frobenius", r.composition_rel_error},
                         {"empirical_rel_spectral", r.scaling_rel_error},
                         {"flux_rel_spectral", r.flux_rel_error},
                         {"bound", r.error_bound},
                         {"within_bound", r.within_bound}};
        doc["warnings"] = r.warnings;
        r.report_path = join_path(dir, "toy2d_report.json");
        write_text_file(r.report_path, doc.dump(2) + "\n");
    }
    return r;
}

FactorsResult run_factors(const FactorsSettings& s) {
    require_dim(!s.member_counts.empty(), "factors: empty member count list");
    FactorsResult result;
    result.rows.reserve(s.member_counts.size());
    for (std::size_t m : s.member_counts) {
        const SdFactors f = inflation_deflation_factors(m, s.alpha);
        result.rows.push_back({m, f.deflate, f.inflate});
    }
    if (!s.out_dir.empty()) {
        const std::string dir = ensure_out_dir(s.out_dir);
        std::ostringstream os;
        os << "M,L,R\n";
        char buf[80];
        for (const FactorRow& row : result.rows) {
            std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f\n", row.members, row.deflate,
                          row.inflate);
            os << buf;
        }
        result.table_path = join_path(dir, "factors.csv");
        write_text_file(result.table_path, os.str());
    }
    return result;
}

Vector seasonal_control_field(std::size_t cells, std::size_t months,
                              std::uint64_t seed) {
    require_dim(cells > 0 && months > 0, "seasonal_control_field: empty grid");
    rng::Stream amp(seed, rng::kPurposeScenario, 0);
    rng::Stream phase(seed, rng::kPurposeScenario, 1);
    Vector mu(cells * months);
    for (std::size_t c = 0; c < cells; ++c) {
        const double amplitude = 0.5 + amp.uniform(c);
        const double shift = 2.0 * std::numbers::pi * phase.uniform(c);
        for (std::size_t t = 0; t < months; ++t) {
            const double cycle =
                std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / 12.0 + shift);
            mu[t * cells + c] = amplitude * (1.0 + 0.75 * cycle);
        }
    }
    return mu;
}

Vector generated_cell_areas(std::size_t cells, std::uint64_t seed) {
    require_dim(cells > 0, "generated_cell_areas: empty grid");
    rng::Stream area(seed, rng::kPurposeScenario, 2);
    Vector areas(cells);
    for (std::size_t c = 0; c < cells; ++c) areas[c] = 0.5 + area.uniform(c);
    return areas;
}

Vector aggregate_weights(const AggregateSpec& spec, std::size_t months) {
    require_dim(spec.cells > 0, "aggregate_weights: cells must be positive");
    require_dim(spec.areas.size() == spec.cells, "aggregate_weights: areas length");
    for (double a : spec.areas)
        if (!(a > 0.0) || !std::isfinite(a))
            throw DefinitenessError("aggregate_weights: areas must be strictly positive");
    require_dim(!spec.target_ranges.empty(), "aggregate_weights: empty target bucket");

    std::vector<bool> used(months, false);
    std::size_t bucket_months = 0;
    for (const auto& [begin, end] : spec.target_ranges) {
        require_dim(begin < end && end <= months, "aggregate_weights: bad month range");
        for (std::size_t t = begin; t < end; ++t) {
            if (used[t])
                throw DimensionError("aggregate_weights: overlapping month ranges");
            used[t] = true;
            ++bucket_months;
        }
    }

    double area_sum = 0.0;
    for (double a : spec.areas) area_sum += a;
    const double norm = area_sum * static_cast<double>(bucket_months);

    Vector h(spec.cells * months, 0.0);
    for (const auto& [begin, end] : spec.target_ranges)
        for (std::size_t t = begin; t < end; ++t)
            for (std::size_t c = 0; c < spec.cells; ++c)
                h[t * spec.cells + c] = spec.areas[c] / norm;
    return h;
}

SyntheticResult run_synthetic(const SyntheticSettings& s) {
    const std::size_t m = s.control_dim();
    const std::size_t n = s.observations;
    require_dim(m > 0 && n > 0, "synthetic: empty problem");
    if (!(std::isfinite(s.truth)))
        throw ConfigError("synthetic: truth must be finite");

    SyntheticResult r;
    r.control_dim = m;
    r.observation_dim = n;
    r.mu = s.mu.empty() ? seasonal_control_field(s.cells, s.months, s.scenario_seed)
                        : s.mu;
    require_dim(r.mu.size() == m, "synthetic: mu length mismatch");
    const Vector areas =
        s.areas.empty() ? generated_cell_areas(s.cells, s.scenario_seed) : s.areas;
    require_dim(areas.size() == s.cells, "synthetic: areas length mismatch");

    const ForwardOperator op = synthetic_operator(n, m, s.smoothness, s.operator_seed);
    const NoiseSpec noise = NoiseSpec::isotropic(s.sigma2, n);
    const PriorSpec prior(Vector(m, 1.0), s.b2);

    {
        Matrix scaled = op.matrix();
        for (std::size_t i = 0; i < scaled.rows; ++i)
            for (std::size_t j = 0; j < scaled.cols; ++j) scaled(i, j) *= r.mu[j];
        r.condition_number = condition_number(scaled);
    }

    // Central observations: truth pushed through the operator plus one noise draw.
    const Vector c_true(m, s.truth);
    Vector y_central = op.apply(hadamard(c_true, r.mu));
    {
        rng::Stream obs(s.master_seed, rng::kPurposeObservation, 0);
        const double sd = std::sqrt(s.sigma2);
        for (std::size_t i = 0; i < n; ++i) y_central[i] += sd * obs.normal(i);
    }

    r.central_report = minimize(
        prior.mean, make_cost(prior, prior.mean, y_central, noise, op, r.mu),
        s.solver_config);
    if (!r.central_report.converged)
        throw SolverPolicyError("central inversion did not converge: " +
                                r.central_report.diagnostic);
    r.c_map_central = r.central_report.solution;

    const Matrix sigma = posterior_covariance(op, noise, prior, r.mu);
    const Vector alpha_exact = posterior_mean(sigma, op, noise, y_central, prior, r.mu);
    r.central_vs_analytic =
        inf_norm(sub(r.c_map_central, alpha_exact)) /
        std::max(inf_norm(alpha_exact), std::numeric_limits<double>::min());

    EnsembleConfig cfg;
    cfg.members = s.members;
    cfg.master_seed = s.master_seed;
    cfg.solver = s.solver;
    cfg.solver_config = s.solver_config;
    r.store = run_ensemble(op, noise, prior, r.mu, cfg, s.workers);

    if (s.cross_check && r.store.metadata.failed == 0) {
        // Re-derive each member with the other solve path and compare.
        const Vector a_mu = op.apply(r.mu);
        Vector noise_sd(n);
        for (std::size_t i = 0; i < n; ++i) noise_sd[i] = std::sqrt(noise.variances[i]);
        double worst = 0.0;
        for (std::size_t k = 0; k < s.members; ++k) {
            const auto [c_k, y_k] =
                sample_member_inputs(k, s.master_seed, prior.b2, a_mu, noise_sd, m);
            Vector other;
            if (s.solver == SolverChoice::variational) {
                other = map_estimator(op, noise, c_k, y_k, prior, r.mu, sigma);
            } else {
                const SolverReport rep = minimize(
                    c_k, make_cost(prior, c_k, y_k, noise, op, r.mu), s.solver_config);
                if (!rep.converged) continue;
                other = rep.solution;
            }
            const Vector row(r.store.member(k).begin(), r.store.member(k).end());
            const double gap = inf_norm(sub(row, other)) /
                               std::max(inf_norm(other), std::numeric_limits<double>::min());
            worst = std::max(worst, gap);
        }
        r.member_cross_check = worst;
    }

    // One area-weighted mean-flux functional per month.
    for (std::size_t t = 0; t < s.months; ++t) {
        AggregateSpec agg;
        agg.cells = s.cells;
        agg.areas = areas;
        agg.target_ranges = {{t, t + 1}};

        FunctionalSpec spec;
        char label[16];
        std::snprintf(label, sizeof label, "m%02zu", t + 1);
        spec.label = label;
        spec.weights = aggregate_weights(agg, s.months);
        spec.include_control = true;

        const Vector phis = functional_values(r.store, spec);
        double phi_bar = 0.0;
        for (double v : phis) phi_bar += v;
        phi_bar /= static_cast<double>(phis.size());
        const double s2 = empirical_functional_variance(phis);
        const double s_hat = std::sqrt(s2);

        const double phi_map = dot(spec.weights, hadamard(r.c_map_central, r.mu));

        SyntheticMonthRow row;
        row.label = spec.label;
        row.phi_bar = phi_bar;
        row.report = bracketed_report(phi_map, s_hat, r.store.size(), s.alpha, s.gamma);
        row.prior_sd = prior_functional_sd(spec, r.mu, s.b2, s.prior_sd_convention);
        row.reduction_point = uncertainty_reduction(s_hat, row.prior_sd);
        row.reduction_inflated =
            uncertainty_reduction(s_hat * row.report.factors.inflate, row.prior_sd);
        r.months.push_back(std::move(row));
    }

    maybe_warn_small_ensemble(r.store.size(), s.alpha, r.warnings);
    if (r.store.metadata.failed > 0)
        r.warnings.push_back(std::to_string(r.store.metadata.failed) +
                             " ensemble members failed to converge and were dropped");

    if (!s.out_dir.empty()) {
        const std::string dir = ensure_out_dir(s.out_dir);
        r.timeseries_path = join_path(dir, "fig1_timeseries.csv");
        write_text_file(r.timeseries_path, timeseries_csv(r.months));

        nlohmann::json doc;
        doc["settings"] = {{"cells", s.cells},
                           {"months", s.months},
                           {"observations", s.observations},
                           {"smoothness", s.smoothness},
                           {"operator_seed", s.operator_seed},
                           {"scenario_seed", s.scenario_seed},
                           {"b2", s.b2},
                           {"sigma2", s.sigma2},
                           {"truth", s.truth},
                           {"members", s.members},
                           {"master_seed", s.master_seed},
                           {"solver", to_string(s.solver)},
                           {"alpha", s.alpha},
                           {"gamma", s.gamma}};
        doc["condition_number"] = r.condition_number;
        doc["central"] = {{"converged", r.central_report.converged},
                          {"iterations", r.central_report.iterations},
                          {"final_gradient_norm", r.central_report.final_gradient_norm},
                          {"final_cost", r.central_report.final_cost},
                          {"vs_closed_form", r.central_vs_analytic}};
        doc["member_cross_check"] = r.member_cross_check;
        doc["ensemble"] = {{"members", r.store.metadata.members},
                           {"attempted", r.store.metadata.attempted},
                           {"failed", r.store.metadata.failed}};
        nlohmann::json months = nlohmann::json::array();
        for (const SyntheticMonthRow& row : r.months) {
            nlohmann::json month = to_json(row.report);
            month["label"] = row.label;
            month["phi_bar"] = row.phi_bar;
            month["prior_sd"] = row.prior_sd;
            month["reduction_point"] = row.reduction_point;
            month["reduction_inflated"] = row.reduction_inflated;
            months.push_back(std::move(month));
        }
        doc["months"] = std::move(months);
        doc["warnings"] = r.warnings;
        r.report_path = join_path(dir, "synthetic_report.json");
        write_text_file(r.report_path, doc.dump(2) + "\n");
    }
    return r;
}

CoverageResult run_coverage(const CoverageSettings& s) {
    require_dim(s.mu.size() == 2, "coverage: mu must have length 2");
    require_dim(s.weights.size() == 2, "coverage: weights must have length 2");
    require_dim(s.replicates >= 2, "coverage: need at least 2 replicates");
    require_dim(s.members >= 2, "coverage: need at least 2 members");

    const ForwardOperator op = toy_operator(s.epsilon);
    const NoiseSpec noise = NoiseSpec::isotropic(s.sigma2, 2);
    const PriorSpec prior(Vector(2, 1.0), s.b2);
    const Matrix sigma = posterior_covariance(op, noise, prior, s.mu);

    const Vector h_eff = hadamard(s.weights, s.mu);
    const double sigma2_true = dot(h_eff, matvec(sigma, h_eff));
    const double sigma_true = std::sqrt(sigma2_true);
    const double z = stats::normal_quantile(1.0 - 0.5 * s.gamma);

    FunctionalSpec spec;
    spec.label = "coverage";
    spec.weights = s.weights;
    spec.include_control = true;

    const std::size_t M = s.members;
    Vector s2s(s.replicates), phi_bars(s.replicates);
    parallel_for_indexed(s.replicates, s.workers, [&](std::size_t rep) {
        EnsembleConfig cfg;
        cfg.members = M;
        cfg.master_seed = rng::derive_seed(s.master_seed, rep);
        cfg.solver = SolverChoice::analytic;
        const EnsembleStore store = run_ensemble(op, noise, prior, s.mu, cfg, 1);
        const Vector phis = functional_values(store, spec);
        double mean = 0.0;
        for (double v : phis) mean += v;
        s2s[rep] = empirical_functional_variance(phis);
        phi_bars[rep] = mean / static_cast<double>(phis.size());
    });

    std::size_t var_hits = 0, sd_hits = 0, endpoint_hits = 0;
    Vector pivots(s.replicates);
    for (std::size_t rep = 0; rep < s.replicates; ++rep) {
        const double s2 = s2s[rep];
        const Interval vci = variance_confidence_interval(s2, M, s.alpha);
        var_hits += (sigma2_true >= vci.lo && sigma2_true <= vci.hi);
        const Interval sci = sd_confidence_interval(std::sqrt(s2), M, s.alpha);
        sd_hits += (sigma_true >= sci.lo && sigma_true <= sci.hi);

        const BracketedReport rep_report =
            bracketed_report(phi_bars[rep], std::sqrt(s2), M, s.alpha, s.gamma);
        const double true_lo = phi_bars[rep] - z * sigma_true;
        const double true_hi = phi_bars[rep] + z * sigma_true;
        endpoint_hits += (true_lo >= rep_report.lower_endpoint.lo &&
                          true_lo <= rep_report.lower_endpoint.hi &&
                          true_hi >= rep_report.upper_endpoint.lo &&
                          true_hi <= rep_report.upper_endpoint.hi);

        pivots[rep] = static_cast<double>(M - 1) * s2 / sigma2_true;
    }

    CoverageResult r;
    r.sigma2_true = sigma2_true;
    r.replicates = s.replicates;
    const double n_rep = static_cast<double>(s.replicates);
    r.variance_ci_coverage = static_cast<double>(var_hits) / n_rep;
    r.sd_ci_coverage = static_cast<double>(sd_hits) / n_rep;
    r.endpoint_coverage = static_cast<double>(endpoint_hits) / n_rep;
    r.binomial_se = std::sqrt((1.0 - s.alpha) * s.alpha / n_rep);

    const double dof = static_cast<double>(M - 1);
    r.ks_stat = stats::ks_statistic(
        pivots, [dof](double x) { return stats::chi2_cdf(x, dof); });
    r.ks_critical = stats::ks_critical_value(0.01, s.replicates);
    r.ks_pass = r.ks_stat <= r.ks_critical;

    if (!s.out_dir.empty()) {
        const std::string dir = ensure_out_dir(s.out_dir);
        nlohmann::json doc;
        doc["settings"] = {{"epsilon", s.epsilon},
                           {"b2", s.b2},
                           {"sigma2", s.sigma2},
                           {"mu", s.mu},
                           {"weights", s.weights},
                           {"members", s.members},
                           {"replicates", s.replicates},
                           {"alpha", s.alpha},
                           {"gamma", s.gamma},
                           {"master_seed", s.master_seed}};
        doc["sigma2_true"] = r.sigma2_true;
        doc["variance_ci_coverage"] = r.variance_ci_coverage;
        doc["sd_ci_coverage"] = r.sd_ci_coverage;
        doc["endpoint_coverage"] = r.endpoint_coverage;
        doc["binomial_se"] = r.binomial_se;
        doc["ks"] = {{"statistic", r.ks_stat},
                     {"critical_1pct", r.ks_critical},
                     {"pass", r.ks_pass}};
        r.report_path = join_path(dir, "coverage_summary.json");
        write_text_file(r.report_path, doc.dump(2) + "\n");
    }
    return r;
}

// ---- report plumbing ----

nlohmann::json to_json(const Interval& interval) {
    return {{"lo", interval.lo}, {"hi", interval.hi}};
}

nlohmann::json to_json(const SdFactors& factors) {
    return {{"deflate", factors.deflate}, {"inflate", factors.inflate}};
}

nlohmann::json to_json(const BracketedReport& report) {
    nlohmann::json j;
    j["phi_map"] = report.phi_map;
    j["sigma_hat"] = report.sigma_hat;
    j["members"] = report.members;
    j["alpha"] = report.alpha;
    j["gamma"] = report.gamma;
    j["z"] = report.z;
    j["factors"] = to_json(report.factors);
    j["nominal"] = to_json(report.nominal);
    j["deflated"] = to_json(report.deflated);
    j["inflated"] = to_json(report.inflated);
    j["lower_endpoint"] = to_json(report.lower_endpoint);
    j["upper_endpoint"] = to_json(report.upper_endpoint);
    return j;
}

nlohmann::json to_json(const Matrix& a) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < a.rows; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < a.cols; ++j) row.push_back(a(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

const char* const kTimeseriesCsvHeader =
    "label,phi_map,sigma_hat,L,R,nominal_lo,nominal_hi,deflated_lo,deflated_hi,"
    "inflated_lo,inflated_hi,pct_reduction_point,pct_reduction_inflated";

std::string timeseries_csv(const std::vector<SyntheticMonthRow>& rows) {
    std::ostringstream os;
    os << kTimeseriesCsvHeader << '\n';
    char buf[512];
    for (const SyntheticMonthRow& row : rows) {
        const BracketedReport& rep = row.report;
        std::snprintf(buf, sizeof buf,
                      "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                      "%.17g,%.17g\n",
                      row.label.c_str(), rep.phi_map, rep.sigma_hat, rep.factors.deflate,
                      rep.factors.inflate, rep.nominal.lo, rep.nominal.hi,
                      rep.deflated.lo, rep.deflated.hi, rep.inflated.lo, rep.inflated.hi,
                      100.0 * row.reduction_point, 100.0 * row.reduction_inflated);
        os << buf;
    }
    return os.str();
}

// ---- configuration document ----

namespace {

nlohmann::json shared_defaults() {
    nlohmann::json j;
    j["problem"] = {{"operator", "toy"}, {"epsilon", 0.05}};
    j["prior"] = {{"b2", 4.0}, {"mean", 1.0}};
    j["noise"] = {{"scalar", 1.0}};
    j["control"] = {{"mu", {0.5, 1.0}}};
    j["ensemble"] = {{"M", 1000},
                     {"master_seed", 42},
                     {"solver", "analytic"},
                     {"workers", 1},
                     {"max_failure_fraction", 0.0},
                     {"max_iterations", 500},
                     {"gradient_tolerance", 1e-9},
                     {"memory", 10},
                     {"path", "ensemble.ens"}};
    j["uq"] = {{"alpha", 0.05},
               {"gamma", 0.05},
               {"prior_sd_convention", "independent"},
               {"functionals", nullptr}};
    j["output"] = {{"dir", "out"}};
    return j;
}

[[noreturn]] void config_fail(const std::string& where, const std::string& what) {
    throw ConfigError("config " + where + ": " + what);
}

const nlohmann::json& section(const nlohmann::json& config, const char* name) {
    if (!config.contains(name) || !config.at(name).is_object())
        config_fail(name, "missing section");
    return config.at(name);
}

double get_number(const nlohmann::json& sec, const std::string& where, const char* key) {
    if (!sec.contains(key) || !sec.at(key).is_number())
        config_fail(where + "." + key, "expected a number");
    return sec.at(key).get<double>();
}

bool is_nonneg_integer(const nlohmann::json& x) {
    if (x.is_number_unsigned()) return true;
    return x.is_number_integer() && x.get<long long>() >= 0;
}

std::size_t get_count(const nlohmann::json& sec, const std::string& where,
                      const char* key) {
    if (!sec.contains(key) || !is_nonneg_integer(sec.at(key)))
        config_fail(where + "." + key, "expected a nonnegative integer");
    return sec.at(key).get<std::size_t>();
}

std::uint64_t get_seed(const nlohmann::json& sec, const std::string& where,
                       const char* key) {
    if (!sec.contains(key) || !is_nonneg_integer(sec.at(key)))
        config_fail(where + "." + key, "expected a nonnegative integer");
    return sec.at(key).get<std::uint64_t>();
}

std::string get_string(const nlohmann::json& sec, const std::string& where,
                       const char* key) {
    if (!sec.contains(key) || !sec.at(key).is_string())
        config_fail(where + "." + key, "expected a string");
    return sec.at(key).get<std::string>();
}

bool get_bool(const nlohmann::json& sec, const std::string& where, const char* key) {
    if (!sec.contains(key) || !sec.at(key).is_boolean())
        config_fail(where + "." + key, "expected a boolean");
    return sec.at(key).get<bool>();
}

Vector get_vector(const nlohmann::json& node, const std::string& where) {
    if (!node.is_array()) config_fail(where, "expected an array of numbers");
    Vector v;
    v.reserve(node.size());
    for (const auto& x : node) {
        if (!x.is_number()) config_fail(where, "expected an array of numbers");
        v.push_back(x.get<double>());
    }
    return v;
}

LbfgsConfig solver_config_from(const nlohmann::json& ens) {
    LbfgsConfig cfg;
    cfg.max_iterations = get_count(ens, "ensemble", "max_iterations");
    cfg.gradient_tolerance = get_number(ens, "ensemble", "gradient_tolerance");
    cfg.memory = get_count(ens, "ensemble", "memory");
    return cfg;
}

SolverChoice solver_from(const nlohmann::json& ens) {
    return solver_choice_from_string(get_string(ens, "ensemble", "solver"));
}

unsigned workers_from(const nlohmann::json& ens) {
    const std::size_t w = get_count(ens, "ensemble", "workers");
    if (w == 0 || w > 1024) config_fail("ensemble.workers", "expected 1..1024");
    return static_cast<unsigned>(w);
}

} // namespace

nlohmann::json default_config(const std::string& command) {
    nlohmann::json j = shared_defaults();
    if (command == "toy2d") {
        j["ensemble"]["M"] = 1000000;
        j["toy2d"] = {{"theta_true", {1.0, 2.0}}};
    } else if (command == "factors") {
        j["factors"] = {{"members", {10, 100, 1000, 10000, 100000, 1000000}}};
    } else if (command == "synthetic") {
        j["problem"] = {{"operator", "synthetic"},
                        {"n", 200},
                        {"smoothness", 2.0},
                        {"operator_seed", 7}};
        j["prior"]["b2"] = 2.25;
        j["control"]["mu"] = nullptr;
        j["ensemble"]["M"] = 60;
        j["ensemble"]["solver"] = "variational";
        j["synthetic"] = {{"cells", 8},
                          {"months", 6},
                          {"truth", 1.0},
                          {"cross_check", true},
                          {"scenario_seed", 7},
                          {"areas", nullptr}};
    } else if (command == "coverage") {
        j["ensemble"]["M"] = 30;
        j["coverage"] = {{"replicates", 10000}, {"weights", {1.0, 1.0}}};
    } else if (command == "ensemble") {
        // shared defaults as-is
    } else if (command == "report") {
        j["report"] = {{"phi_map", nullptr}, {"label", "functional"}};
    } else {
        throw ConfigError("unknown command '" + command + "'");
    }
    return j;
}

nlohmann::json effective_config(const std::string& command, const nlohmann::json& user,
                                const std::vector<std::string>& overrides) {
    nlohmann::json config = default_config(command);
    if (!user.is_null()) {
        if (!user.is_object()) throw ConfigError("config document must be a JSON object");
        config.merge_patch(user);
    }
    for (const std::string& assignment : overrides) apply_override(config, assignment);
    return config;
}

void apply_override(nlohmann::json& config, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override '" + assignment + "' is not of the form key=value");
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    std::string pointer = "/";
    for (char ch : path) pointer += (ch == '.') ? '/' : ch;

    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        value = raw; // plain string
    }
    try {
        config[nlohmann::json::json_pointer(pointer)] = std::move(value);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot apply override '" + assignment + "': " + e.what());
    }
}

ProblemSetup build_problem(const nlohmann::json& config) {
    const auto& prob = section(config, "problem");
    const std::string kind = get_string(prob, "problem", "operator");

    ForwardOperator op = [&] {
        if (kind == "toy") return toy_operator(get_number(prob, "problem", "epsilon"));
        if (kind == "synthetic") {
            std::size_t m;
            if (prob.contains("m")) {
                m = get_count(prob, "problem", "m");
            } else if (config.contains("synthetic")) {
                const auto& syn = section(config, "synthetic");
                m = get_count(syn, "synthetic", "cells") *
                    get_count(syn, "synthetic", "months");
            } else {
                config_fail("problem.m", "required for the synthetic operator");
            }
            return synthetic_operator(get_count(prob, "problem", "n"), m,
                                      get_number(prob, "problem", "smoothness"),
                                      get_seed(prob, "problem", "operator_seed"));
        }
        if (kind == "file") {
            const std::string path = get_string(prob, "problem", "path");
            const Matrix a = path.ends_with(".csv") ? read_matrix_csv(path)
                                                    : read_matrix_binary(path);
            return ForwardOperator::from_matrix(a);
        }
        config_fail("problem.operator", "expected toy, synthetic, or file");
    }();

    const std::size_t m = op.input_dim();
    const std::size_t n = op.output_dim();

    const auto& noise_sec = section(config, "noise");
    NoiseSpec noise = [&] {
        if (noise_sec.contains("variances") && !noise_sec.at("variances").is_null()) {
            Vector v = get_vector(noise_sec.at("variances"), "noise.variances");
            if (v.size() != n) config_fail("noise.variances", "length mismatch");
            return NoiseSpec(std::move(v));
        }
        return NoiseSpec::isotropic(get_number(noise_sec, "noise", "scalar"), n);
    }();

    const auto& prior_sec = section(config, "prior");
    PriorSpec prior = [&] {
        const double b2 = get_number(prior_sec, "prior", "b2");
        if (prior_sec.contains("mean") && prior_sec.at("mean").is_array()) {
            Vector mean = get_vector(prior_sec.at("mean"), "prior.mean");
            if (mean.size() != m) config_fail("prior.mean", "length mismatch");
            return PriorSpec(std::move(mean), b2);
        }
        return PriorSpec(Vector(m, get_number(prior_sec, "prior", "mean")), b2);
    }();

    const auto& control = section(config, "control");
    Vector mu = [&]() -> Vector {
        if (!control.contains("mu") || control.at("mu").is_null())
            config_fail("control.mu", "required (array or scalar)");
        const auto& node = control.at("mu");
        if (node.is_number()) return Vector(m, node.get<double>());
        Vector v = get_vector(node, "control.mu");
        if (v.size() != m) config_fail("control.mu", "length mismatch");
        return v;
    }();

    return ProblemSetup{std::move(op), std::move(noise), std::move(prior), std::move(mu)};
}

Toy2dSettings parse_toy2d_settings(const nlohmann::json& config) {
    const auto& prob = section(config, "problem");
    if (get_string(prob, "problem", "operator") != "toy")
        config_fail("problem.operator", "toy2d runs the toy operator only");

    Toy2dSettings s;
    s.epsilon = get_number(prob, "problem", "epsilon");
    s.b2 = get_number(section(config, "prior"), "prior", "b2");
    s.sigma2 = get_number(section(config, "noise"), "noise", "scalar");
    s.mu = get_vector(section(config, "control").at("mu"), "control.mu");

    const auto& toy = section(config, "toy2d");
    s.theta_true = get_vector(toy.at("theta_true"), "toy2d.theta_true");

    const auto& ens = section(config, "ensemble");
    s.members = get_count(ens, "ensemble", "M");
    s.master_seed = get_seed(ens, "ensemble", "master_seed");
    s.solver = solver_from(ens);
    s.solver_config = solver_config_from(ens);
    s.workers = workers_from(ens);
    s.out_dir = get_string(section(config, "output"), "output", "dir");
    return s;
}

FactorsSettings parse_factors_settings(const nlohmann::json& config) {
    FactorsSettings s;
    s.alpha = get_number(section(config, "uq"), "uq", "alpha");
    const auto& fac = section(config, "factors");
    if (!fac.contains("members") || !fac.at("members").is_array())
        config_fail("factors.members", "expected an array of member counts");
    s.member_counts.clear();
    for (const auto& x : fac.at("members")) {
        if (!is_nonneg_integer(x) || x.get<std::size_t>() < 2)
            config_fail("factors.members", "member counts must be integers >= 2");
        s.member_counts.push_back(x.get<std::size_t>());
    }
    s.out_dir = get_string(section(config, "output"), "output", "dir");
    return s;
}

SyntheticSettings parse_synthetic_settings(const nlohmann::json& config) {
    const auto& prob = section(config, "problem");
    if (get_string(prob, "problem", "operator") != "synthetic")
        config_fail("problem.operator", "synthetic runs the synthetic operator only");

    SyntheticSettings s;
    const auto& syn = section(config, "synthetic");
    s.cells = get_count(syn, "synthetic", "cells");
    s.months = get_count(syn, "synthetic", "months");
    s.truth = get_number(syn, "synthetic", "truth");
    s.cross_check = get_bool(syn, "synthetic", "cross_check");
    s.scenario_seed = get_seed(syn, "synthetic", "scenario_seed");
    if (syn.contains("areas") && !syn.at("areas").is_null())
        s.areas = get_vector(syn.at("areas"), "synthetic.areas");

    s.observations = get_count(prob, "problem", "n");
    s.smoothness = get_number(prob, "problem", "smoothness");
    s.operator_seed = get_seed(prob, "problem", "operator_seed");

    s.b2 = get_number(section(config, "prior"), "prior", "b2");
    s.sigma2 = get_number(section(config, "noise"), "noise", "scalar");

    const auto& control = section(config, "control");
    if (control.contains("mu") && !control.at("mu").is_null())
        s.mu = get_vector(control.at("mu"), "control.mu");

    const auto& ens = section(config, "ensemble");
    s.members = get_count(ens, "ensemble", "M");
    s.master_seed = get_seed(ens, "ensemble", "master_seed");
    s.solver = solver_from(ens);
    s.solver_config = solver_config_from(ens);
    s.workers = workers_from(ens);

    const auto& uq = section(config, "uq");
    s.alpha = get_number(uq, "uq", "alpha");
    s.gamma = get_number(uq, "uq", "gamma");
    const std::string conv = get_string(uq, "uq", "prior_sd_convention");
    if (conv == "independent")
        s.prior_sd_convention = PriorSdConvention::independent;
    else if (conv == "coherent")
        s.prior_sd_convention = PriorSdConvention::coherent;
    else
        config_fail("uq.prior_sd_convention", "expected independent or coherent");

    s.out_dir = get_string(section(config, "output"), "output", "dir");
    return s;
}

CoverageSettings parse_coverage_settings(const nlohmann::json& config) {
    const auto& prob = section(config, "problem");
    if (get_string(prob, "problem", "operator") != "toy")
        config_fail("problem.operator", "coverage runs the toy operator only");

    CoverageSettings s;
    s.epsilon = get_number(prob, "problem", "epsilon");
    s.b2 = get_number(section(config, "prior"), "prior", "b2");
    s.sigma2 = get_number(section(config, "noise"), "noise", "scalar");
    s.mu = get_vector(section(config, "control").at("mu"), "control.mu");

    const auto& cov = section(config, "coverage");
    s.replicates = get_count(cov, "coverage", "replicates");
    s.weights = get_vector(cov.at("weights"), "coverage.weights");

    const auto& ens = section(config, "ensemble");
    s.members = get_count(ens, "ensemble", "M");
    s.master_seed = get_seed(ens, "ensemble", "master_seed");
    s.workers = workers_from(ens);

    const auto& uq = section(config, "uq");
    s.alpha = get_number(uq, "uq", "alpha");
    s.gamma = get_number(uq, "uq", "gamma");
    s.out_dir = get_string(section(config, "output"), "output", "dir");
    return s;
}

std::vector<FunctionalSpec> parse_functionals(const nlohmann::json& config,
                                              std::size_t control_dim) {
    const auto& uq = section(config, "uq");
    std::vector<FunctionalSpec> specs;
    if (!uq.contains("functionals") || uq.at("functionals").is_null()) {
        FunctionalSpec spec;
        spec.label = "total";
        spec.weights.assign(control_dim, 1.0);
        spec.include_control = true;
        specs.push_back(std::move(spec));
        return specs;
    }
    if (!uq.at("functionals").is_array())
        config_fail("uq.functionals", "expected an array");

    std::size_t index = 0;
    for (const auto& node : uq.at("functionals")) {
        const std::string where = "uq.functionals[" + std::to_string(index++) + "]";
        if (!node.is_object()) config_fail(where, "expected an object");

        FunctionalSpec spec;
        spec.label = node.contains("label") ? node.at("label").get<std::string>()
                                            : "f" + std::to_string(index);
        spec.include_control =
            node.contains("include_control") ? node.at("include_control").get<bool>() : true;

        if (node.contains("weights")) {
            if (node.at("weights").is_string() && node.at("weights") == "uniform") {
                spec.weights.assign(control_dim, 1.0);
            } else {
                spec.weights = get_vector(node.at("weights"), where + ".weights");
                if (spec.weights.size() != control_dim)
                    config_fail(where + ".weights", "length mismatch");
            }
        } else if (node.contains("aggregate")) {
            const auto& agg = node.at("aggregate");
            if (!agg.is_object()) config_fail(where + ".aggregate", "expected an object");
            AggregateSpec aspec;
            aspec.cells = get_count(agg, where + ".aggregate", "cells");
            if (!agg.contains("areas"))
                config_fail(where + ".aggregate.areas", "required");
            aspec.areas = get_vector(agg.at("areas"), where + ".aggregate.areas");
            if (control_dim % aspec.cells != 0)
                config_fail(where + ".aggregate.cells",
                            "control dimension is not a multiple of cells");
            const std::size_t months = control_dim / aspec.cells;

            if (!agg.contains("buckets") || !agg.at("buckets").is_object())
                config_fail(where + ".aggregate.buckets", "expected an object");
            const std::string target = get_string(agg, where + ".aggregate", "target");
            if (!agg.at("buckets").contains(target))
                config_fail(where + ".aggregate.target",
                            "bucket '" + target + "' not defined");
            for (const auto& range : agg.at("buckets").at(target)) {
                if (!range.is_array() || range.size() != 2)
                    config_fail(where + ".aggregate.buckets", "ranges are [begin, end)");
                aspec.target_ranges.emplace_back(range.at(0).get<std::size_t>(),
                                                 range.at(1).get<std::size_t>());
            }
            spec.weights = aggregate_weights(aspec, months);
        } else {
            config_fail(where, "needs either weights or aggregate");
        }
        specs.push_back(std::move(spec));
    }
    if (specs.empty()) config_fail("uq.functionals", "empty list");
    return specs;
}

} // namespace fluxmc
