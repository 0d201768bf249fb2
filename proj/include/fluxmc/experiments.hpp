#pragma once

// End-to-end experiment drivers behind the CLI subcommands. Each runner is a
// pure function of its settings struct; file output is skipped when out_dir
// is empty, so tests can run the drivers in memory. Human-readable printing
// stays in the CLI layer.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fluxmc/ensemble.hpp"
#include "fluxmc/functional_uq.hpp"

namespace fluxmc {

// ---- two-cell demonstration problem ----

struct Toy2dSettings {
    double epsilon = 0.05;
    double b2 = 4.0;
    double sigma2 = 1.0;
    Vector mu = {0.5, 1.0};
    Vector theta_true = {1.0, 2.0}; // echoed in the report only
    std::size_t members = 1'000'000;
    std::uint64_t master_seed = 42;
    SolverChoice solver = SolverChoice::analytic;
    LbfgsConfig solver_config;
    unsigned workers = 1;
    std::string out_dir; // empty: no files written
};

struct Toy2dResult {
    Matrix sigma;              // exact posterior covariance, control space
    Matrix estimator_cov;      // Sigma P Sigma composition
    Matrix empirical_cov;      // ensemble sample covariance
    Matrix flux_cov;           // Sigma .* mu mu^T
    Matrix flux_estimator_cov; // estimator covariance pushed to flux space
    Matrix empirical_flux_cov; // sample covariance of flux members
    double composition_rel_error = 0.0; // |estimator_cov - sigma| / |sigma|, Frobenius
    double scaling_rel_error = 0.0;     // |empirical - sigma| / |sigma|, spectral
    double flux_rel_error = 0.0;        // same in flux space
    double error_bound = 0.0;           // high-probability bound for this M
    bool within_bound = false;
    std::vector<std::string> warnings;
    std::string report_path;
};

Toy2dResult run_toy2d(const Toy2dSettings& settings);

/// High-probability bound on the spectral relative error of an M-member
/// sample covariance of the 2-dimensional Gaussian estimator (95% level),
/// following the 1/sqrt(M) concentration rate.
double sample_covariance_error_bound(std::size_t members);

// ---- sd inflation/deflation factor table ----

struct FactorsSettings {
    std::vector<std::size_t> member_counts = {10, 100, 1000, 10000, 100000, 1000000};
    double alpha = 0.05;
    std::string out_dir;
};

struct FactorRow {
    std::size_t members = 0;
    double deflate = 0.0;
    double inflate = 0.0;
};

struct FactorsResult {
    std::vector<FactorRow> rows;
    std::string table_path;
};

FactorsResult run_factors(const FactorsSettings& settings);

// ---- gridded synthetic scenario (cells x months) ----

struct SyntheticSettings {
    std::size_t cells = 8;
    std::size_t months = 6;
    std::size_t observations = 200;
    double smoothness = 2.0;
    std::uint64_t operator_seed = 7;
    std::uint64_t scenario_seed = 7; // mu field and cell areas
    double b2 = 2.25;
    double sigma2 = 1.0;
    double truth = 1.0; // true scaling factor, shared by all cells
    Vector mu;          // empty: seasonal field generated from scenario_seed
    Vector areas;       // empty: generated from scenario_seed
    std::size_t members = 60;
    std::uint64_t master_seed = 42;
    SolverChoice solver = SolverChoice::variational;
    bool cross_check = true; // compare members against the closed form
    double alpha = 0.05;
    double gamma = 0.05;
    PriorSdConvention prior_sd_convention = PriorSdConvention::independent;
    unsigned workers = 1;
    LbfgsConfig solver_config;
    std::string out_dir;

    std::size_t control_dim() const { return cells * months; }
};

struct SyntheticMonthRow {
    std::string label;
    double phi_bar = 0.0; // ensemble mean of the functional
    BracketedReport report;
    double prior_sd = 0.0;
    double reduction_point = 0.0;    // 1 - s_hat / prior_sd
    double reduction_inflated = 0.0; // conservative variant using s_hat * R
};

struct SyntheticResult {
    std::size_t control_dim = 0;
    std::size_t observation_dim = 0;
    double condition_number = 0.0; // of the mu-scaled operator matrix
    Vector mu;
    Vector c_map_central; // variational solution for the central observations
    SolverReport central_report;
    double central_vs_analytic = 0.0; // inf-norm relative gap to the closed form
    double member_cross_check = -1.0; // max member relative gap, -1 when skipped
    std::vector<SyntheticMonthRow> months;
    EnsembleStore store;
    std::vector<std::string> warnings;
    std::string timeseries_path;
    std::string report_path;
};

SyntheticResult run_synthetic(const SyntheticSettings& settings);

/// Seasonal control-flux field mu[(t, c)] generated from a seed: positive,
/// cell-specific amplitude and phase. Index layout is t * cells + c.
Vector seasonal_control_field(std::size_t cells, std::size_t months,
                              std::uint64_t seed);

/// Positive cell areas generated from a seed.
Vector generated_cell_areas(std::size_t cells, std::uint64_t seed);

// ---- area-weighted time-bucket functionals ----

struct AggregateSpec {
    std::size_t cells = 0;
    Vector areas; // length cells, strictly positive
    std::vector<std::pair<std::size_t, std::size_t>> target_ranges; // [begin, end) months
};

/// Weights for the area-weighted mean flux over the target months, uniform
/// across the bucket's months. Length cells * months, layout t * cells + c.
Vector aggregate_weights(const AggregateSpec& spec, std::size_t months);

// ---- frequentist coverage of the chi-squared machinery ----

struct CoverageSettings {
    double epsilon = 0.05;
    double b2 = 4.0;
    double sigma2 = 1.0;
    Vector mu = {0.5, 1.0};
    Vector weights = {1.0, 1.0}; // functional on the flux field
    std::size_t members = 30;
    std::size_t replicates = 10000;
    double alpha = 0.05;
    double gamma = 0.05;
    std::uint64_t master_seed = 42;
    unsigned workers = 1;
    std::string out_dir;
};

struct CoverageResult {
    double sigma2_true = 0.0;
    std::size_t replicates = 0;
    double variance_ci_coverage = 0.0;
    double sd_ci_coverage = 0.0;
    double endpoint_coverage = 0.0; // both endpoint brackets capture simultaneously
    double binomial_se = 0.0;       // at the nominal 95% level
    double ks_stat = 0.0;           // pivot sample vs chi2 on members-1 dof
    double ks_critical = 0.0;       // asymptotic 1% critical value
    bool ks_pass = false;
    std::string report_path;
};

CoverageResult run_coverage(const CoverageSettings& settings);

// ---- shared report plumbing ----

nlohmann::json to_json(const Interval& interval);
nlohmann::json to_json(const SdFactors& factors);
nlohmann::json to_json(const BracketedReport& report);
nlohmann::json to_json(const Matrix& a);

/// Exact column set used by the synthetic timeseries CSV.
extern const char* const kTimeseriesCsvHeader;
std::string timeseries_csv(const std::vector<SyntheticMonthRow>& rows);

// ---- configuration document (shared by CLI and tests) ----
//
// One JSON document with sections problem / prior / noise / control /
// ensemble / uq / output plus per-command extras (toy2d, synthetic,
// coverage, report). Each command deep-merges the user's document over its
// own defaults, then applies dotted-path overrides.

nlohmann::json default_config(const std::string& command);
nlohmann::json effective_config(const std::string& command, const nlohmann::json& user,
                                const std::vector<std::string>& overrides);

/// Apply one "dotted.path=value" override; the value is parsed as JSON when
/// possible and falls back to a plain string.
void apply_override(nlohmann::json& config, const std::string& assignment);

struct ProblemSetup {
    ForwardOperator op;
    NoiseSpec noise;
    PriorSpec prior;
    Vector mu;
};

/// Build operator/noise/prior/mu from the shared config sections.
ProblemSetup build_problem(const nlohmann::json& config);

Toy2dSettings parse_toy2d_settings(const nlohmann::json& config);
FactorsSettings parse_factors_settings(const nlohmann::json& config);
SyntheticSettings parse_synthetic_settings(const nlohmann::json& config);
CoverageSettings parse_coverage_settings(const nlohmann::json& config);

/// Functional list from uq.functionals for a store of control dimension m.
std::vector<FunctionalSpec> parse_functionals(const nlohmann::json& config,
                                              std::size_t control_dim);

} // namespace fluxmc
