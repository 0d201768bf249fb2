// Acceptance gate: one line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "json.hpp"

#include "fluxmc/ensemble.hpp"
#include "fluxmc/exact_posterior.hpp"
#include "fluxmc/experiments.hpp"
#include "fluxmc/forward_model.hpp"
#include "fluxmc/functional_uq.hpp"
#include "fluxmc/hadamard.hpp"
#include "fluxmc/io.hpp"
#include "fluxmc/solver.hpp"
#include "test_support.hpp"

using namespace fluxmc;
using testsup::TestRng;

namespace {

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
    std::printf("[%s] %s (%s)\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* spec, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, spec, a, b, c);
    return std::string(buf);
}

struct ToyProblem {
    ForwardOperator op = toy_operator(0.05);
    NoiseSpec noise = NoiseSpec::isotropic(1.0, 2);
    PriorSpec prior = PriorSpec({1.0, 1.0}, 4.0);
    Vector mu{0.5, 1.0};
};

double frobenius_gap(const Matrix& got, const Matrix& want) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < want.data.size(); ++i) {
        num += (got.data[i] - want.data[i]) * (got.data[i] - want.data[i]);
        den += want.data[i] * want.data[i];
    }
    return std::sqrt(num / std::max(den, 1e-300));
}

// ---- criterion 1: closed-form toy posterior matrices ----

void toy_matrix_values() {
    const ToyProblem t;
    const Matrix sigma = posterior_covariance(t.op, t.noise, t.prior, t.mu);
    const Matrix estimator = map_estimator_covariance(t.op, t.noise, t.prior, t.mu);
    const FluxPosterior flux =
        flux_posterior(GaussianPosterior{Vector{0.0, 0.0}, sigma}, t.mu);

    const double want[4] = {2.10838562, -0.0867085, -0.0867085, 0.8693668};
    const double want_flux[4] = {0.52709641, -0.04335425, -0.04335425, 0.8693668};
    double worst = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        worst = std::max(worst, std::abs(sigma.data[i] - want[i]));
        worst = std::max(worst, std::abs(estimator.data[i] - want[i]));
        worst = std::max(worst, std::abs(flux.covariance.data[i] - want_flux[i]));
    }
    report(worst <= 1e-6, "two-cell posterior matrices match reference values",
           fmt("max abs err %.3g, tol 1e-6", worst));
}

// ---- criterion 2: estimator covariance equals the posterior covariance ----

void composition_identity() {
    TestRng rng(901);
    double worst = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t m = 1 + rng.index(32);
        const std::size_t n = 1 + rng.index(64);
        const ForwardOperator op =
            ForwardOperator::from_matrix(testsup::random_matrix(rng, n, m));
        const NoiseSpec noise(testsup::random_positive_vector(rng, n, 0.2, 3.0));
        const PriorSpec prior(testsup::random_vector(rng, m, -1.0, 2.0),
                              rng.uniform(0.25, 9.0));
        const Vector mu = testsup::random_vector(rng, m, -2.0, 2.0);

        const Matrix sigma = posterior_covariance(op, noise, prior, mu);
        const Matrix estimator = map_estimator_covariance(op, noise, prior, mu);
        worst = std::max(worst, frobenius_gap(estimator, sigma));
    }
    report(worst <= 1e-10,
           "estimator covariance composition reproduces the posterior covariance",
           fmt("50 instances, worst relative Frobenius gap %.3g, tol 1e-10", worst));
}

// ---- criterion 3: million-member empirical covariance convergence ----

void empirical_convergence() {
    const auto t0 = std::chrono::steady_clock::now();
    const ToyProblem t;
    const Matrix sigma = posterior_covariance(t.op, t.noise, t.prior, t.mu);
    const double sigma_norm = spectral_norm_symmetric(sigma);

    const auto rel_error = [&](std::uint64_t seed) {
        EnsembleConfig cfg;
        cfg.members = 1000000;
        cfg.master_seed = seed;
        const EnsembleStore store =
            run_ensemble(t.op, t.noise, t.prior, t.mu, cfg, 4);
        Matrix diff = empirical_covariance(store);
        for (std::size_t i = 0; i < diff.data.size(); ++i) diff.data[i] -= sigma.data[i];
        return spectral_norm_symmetric(diff) / sigma_norm;
    };

    const double bound = 0.01784;
    const double default_err = rel_error(42);
    int hits = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed)
        if (rel_error(seed) <= bound) ++hits;

    const double elapsed = seconds_since(t0);
    const bool ok = default_err <= bound && hits >= 18 && elapsed < 60.0;
    report(ok, "million-member sample covariance meets the error bound",
           fmt("default-seed err %.4g vs bound 0.01784, ", default_err) +
               fmt("%.0f of 20 alternate seeds, %.1fs", hits, elapsed));
}

// ---- criterion 4: sd inflation/deflation factor table ----

void factor_table() {
    const struct {
        std::size_t members;
        double deflate, inflate;
    } rows[] = {
        {10, 0.6987, 1.7549},     {100, 0.8785, 1.1607},
        {1000, 0.9580, 1.0458},   {10000, 0.9863, 1.0141},
        {100000, 0.9956, 1.0044}, {1000000, 0.9986, 1.0014},
    };
    double worst = 0.0;
    for (const auto& row : rows) {
        const SdFactors f = inflation_deflation_factors(row.members, 0.05);
        worst = std::max(worst, std::abs(f.deflate - row.deflate));
        worst = std::max(worst, std::abs(f.inflate - row.inflate));
    }
    const SdFactors f60 = inflation_deflation_factors(60, 0.05);
    const bool sixty_ok =
        std::abs(f60.inflate - 1.22) <= 0.005 && std::abs(f60.deflate - 0.85) <= 0.005;
    report(worst < 5e-5 && sixty_ok, "sd factor table matches to four decimals",
           fmt("six-row max abs err %.2g; M=60 gives L %.4f, R %.4f", worst,
               f60.deflate, f60.inflate));
}

// ---- criterion 5: variational solver equivalence on implicit operators ----

void solver_equivalence() {
    TestRng rng(905);
    double worst_solution = 0.0, worst_gradient = 0.0;
    bool all_converged = true;
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t m = 1 + rng.index(64);
        const std::size_t n = 1 + rng.index(64);
        const Matrix a = testsup::random_matrix(rng, n, m);
        const ForwardOperator implicit_op = ForwardOperator::from_callables(
            n, m, [a](const Vector& x) { return matvec(a, x); },
            [a](const Vector& w) { return tmatvec(a, w); });
        const NoiseSpec noise(testsup::random_positive_vector(rng, n, 0.3, 2.0));
        const PriorSpec prior(testsup::random_vector(rng, m, 0.0, 2.0),
                              rng.uniform(0.5, 6.0));
        const Vector mu = testsup::random_vector(rng, m, -1.5, 1.5);
        const Vector c_k = testsup::random_vector(rng, m, -1.0, 3.0);
        const Vector y_k = testsup::random_vector(rng, n, -2.0, 2.0);

        const ForwardOperator dense = ForwardOperator::from_matrix(a);
        const Matrix sigma = posterior_covariance(dense, noise, prior, mu);
        const Vector exact = map_estimator(dense, noise, c_k, y_k, prior, mu, sigma);

        const CostFunction cost = make_cost(prior, c_k, y_k, noise, implicit_op, mu);
        const SolverReport rep_out = minimize(c_k, cost);
        all_converged = all_converged && rep_out.converged;
        worst_solution =
            std::max(worst_solution, two_norm(sub(rep_out.solution, exact)) /
                                         std::max(two_norm(exact), 1e-300));

        const Vector x = testsup::random_vector(rng, m, -2.0, 2.0);
        const CostEvaluation at = cost(x);
        Vector fd(m);
        for (std::size_t i = 0; i < m; ++i) {
            const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
            Vector xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            fd[i] = (cost(xp).value - cost(xm).value) / (2.0 * h);
        }
        worst_gradient =
            std::max(worst_gradient, two_norm(sub(fd, at.gradient)) /
                                         std::max(two_norm(at.gradient), 1e-300));
    }
    report(all_converged && worst_solution <= 1e-6 && worst_gradient <= 1e-6,
           "matrix-free minimization reproduces the closed-form mode",
           fmt("20 problems, worst solution gap %.3g, worst gradient gap %.3g",
               worst_solution, worst_gradient));
}

// ---- criterion 6: variance interval and endpoint coverage calibration ----

void coverage_calibration() {
    const auto t0 = std::chrono::steady_clock::now();
    CoverageSettings settings; // two-cell problem, M=30, 10^4 replicates
    settings.workers = 4;
    const CoverageResult r = run_coverage(settings);
    const double elapsed = seconds_since(t0);
    const bool ok = std::abs(r.variance_ci_coverage - 0.95) <= 0.007 &&
                    std::abs(r.endpoint_coverage - 0.95) <= 0.01 && r.ks_pass &&
                    elapsed < 60.0;
    report(ok, "interval coverage and pivot distribution are calibrated",
           fmt("variance CI %.4f, endpoints %.4f, ", r.variance_ci_coverage,
               r.endpoint_coverage) +
               fmt("KS %.4g vs %.4g, ", r.ks_stat, r.ks_critical) +
               fmt("%.1fs", elapsed));
}

// ---- criterion 7: entrywise-scaling identity suite ----

// Largest relative entry gap between two equal-shape matrices.
double matrix_gap(const Matrix& got, const Matrix& want) {
    double worst = 0.0;
    for (std::size_t i = 0; i < want.data.size(); ++i)
        worst = std::max(worst, std::abs(got.data[i] - want.data[i]) /
                                    std::max(std::abs(want.data[i]), 1.0));
    return worst;
}

double vector_gap(const Vector& got, const Vector& want) {
    double worst = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i)
        worst = std::max(worst, std::abs(got[i] - want[i]) /
                                    std::max(std::abs(want[i]), 1.0));
    return worst;
}

Matrix scale_columns(const Matrix& a, const Vector& mu) {
    Matrix out = a;
    for (std::size_t i = 0; i < out.rows; ++i)
        for (std::size_t j = 0; j < out.cols; ++j) out(i, j) *= mu[j];
    return out;
}

void identity_suite() {
    TestRng rng(907);
    double worst = 0.0;
    const int cases = 200;

    for (int rep = 0; rep < cases; ++rep) {
        const std::size_t m = 1 + rng.index(64);
        const std::size_t n = 1 + rng.index(64);
        const Matrix a = testsup::random_matrix(rng, n, m);
        const Vector mu = testsup::random_vector(rng, m, -2.0, 2.0);
        const Matrix a_mu = scale_columns(a, mu);

        // scaling slides through the operator: A (c .* mu) = (A diag mu) c
        const Vector c = testsup::random_vector(rng, m, -2.0, 2.0);
        worst = std::max(worst, vector_gap(scaled_apply(a, mu, c), matvec(a_mu, c)));

        // ... linearly in c
        const Vector d = testsup::random_vector(rng, m, -2.0, 2.0);
        const double al = rng.uniform(-2.0, 2.0), be = rng.uniform(-2.0, 2.0);
        Vector combo(m);
        for (std::size_t i = 0; i < m; ++i) combo[i] = al * c[i] + be * d[i];
        Vector lin = scaled_apply(a, mu, c);
        const Vector lin_d = scaled_apply(a, mu, d);
        for (std::size_t i = 0; i < n; ++i) lin[i] = al * lin[i] + be * lin_d[i];
        worst = std::max(worst, vector_gap(scaled_apply(a, mu, combo), lin));

        // adjoint: (A diag mu)^T w = (A^T w) .* mu
        const Vector w = testsup::random_vector(rng, n, -2.0, 2.0);
        worst = std::max(worst,
                         vector_gap(scaled_adjoint_apply(a, mu, w), tmatvec(a_mu, w)));

        // gram: (A diag mu)^T (A diag mu) = (A^T A) .* (mu mu^T)
        const Matrix gram_direct = matmul(transpose(a_mu), a_mu);
        const Matrix gram_hadamard = hadamard_outer(matmul(transpose(a), a), mu);
        worst = std::max(worst, matrix_gap(gram_hadamard, gram_direct));
    }

    // weighted variants with a PD middle matrix, plus sample-moment scaling
    for (int rep = 0; rep < cases; ++rep) {
        const std::size_t m = 1 + rng.index(16);
        const std::size_t n = 1 + rng.index(16);
        const Matrix a = testsup::random_matrix(rng, n, m);
        const Vector mu = testsup::random_vector(rng, m, -2.0, 2.0);
        const Matrix a_mu = scale_columns(a, mu);

        const Matrix b = testsup::random_matrix(rng, n, n);
        Matrix pd = matmul(transpose(b), b);
        for (std::size_t i = 0; i < n; ++i) pd(i, i) += 0.5;

        const Matrix weighted_direct = matmul(transpose(a_mu), matmul(pd, a_mu));
        const Matrix weighted_hadamard =
            hadamard_outer(matmul(transpose(a), matmul(pd, a)), mu);
        worst = std::max(worst, matrix_gap(weighted_hadamard, weighted_direct));

        // the scaled gram with positive diagonal weights takes the same form
        const Vector diag = testsup::random_positive_vector(rng, n, 0.2, 3.0);
        Matrix diag_direct(m, m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                double s = 0.0;
                for (std::size_t l = 0; l < n; ++l) s += a(l, i) * diag[l] * a(l, j);
                diag_direct(i, j) = s * mu[i] * mu[j];
            }
        worst = std::max(worst, matrix_gap(scaled_gram(a, diag, mu), diag_direct));

        // (A diag mu)^T M y = (A^T M y) .* mu
        const Vector y = testsup::random_vector(rng, n, -2.0, 2.0);
        const Vector my = matvec(pd, y);
        worst = std::max(worst, vector_gap(tmatvec(a_mu, my), hadamard(tmatvec(a, my), mu)));

        // sample mean and covariance commute with entrywise scaling
        const std::size_t draws = 2 + rng.index(12);
        Matrix xs(draws, m);
        for (std::size_t k = 0; k < draws; ++k)
            for (std::size_t i = 0; i < m; ++i) xs(k, i) = rng.uniform(-3.0, 3.0);
        Vector mean(m, 0.0);
        Matrix cov(m, m);
        for (std::size_t k = 0; k < draws; ++k)
            for (std::size_t i = 0; i < m; ++i) mean[i] += xs(k, i) / draws;
        for (std::size_t k = 0; k < draws; ++k)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < m; ++j)
                    cov(i, j) += (xs(k, i) - mean[i]) * (xs(k, j) - mean[j]) /
                                 std::max<std::size_t>(draws - 1, 1);

        Vector scaled_mean(m, 0.0);
        Matrix scaled_cov(m, m);
        for (std::size_t k = 0; k < draws; ++k)
            for (std::size_t i = 0; i < m; ++i) scaled_mean[i] += xs(k, i) * mu[i] / draws;
        for (std::size_t k = 0; k < draws; ++k)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < m; ++j)
                    scaled_cov(i, j) += (xs(k, i) * mu[i] - scaled_mean[i]) *
                                        (xs(k, j) * mu[j] - scaled_mean[j]) /
                                        std::max<std::size_t>(draws - 1, 1);

        worst = std::max(worst, vector_gap(hadamard(mean, mu), scaled_mean));
        worst = std::max(worst, matrix_gap(hadamard_outer(cov, mu), scaled_cov));
    }

    report(worst <= 1e-12, "entrywise-scaling identities hold across random instances",
           fmt("200 cases per identity, worst relative gap %.3g, tol 1e-12", worst));
}

// ---- criterion 8: worker-count determinism ----

void worker_determinism() {
    namespace fs = std::filesystem;
    const ToyProblem t;
    EnsembleConfig cfg;
    cfg.members = 20000;
    cfg.master_seed = 77;

    const fs::path dir = fs::temp_directory_path() / "fluxmc_acceptance";
    fs::create_directories(dir);
    const std::string p1 = (dir / "one_worker.ens").string();
    const std::string p8 = (dir / "eight_workers.ens").string();

    const EnsembleStore s1 = run_ensemble(t.op, t.noise, t.prior, t.mu, cfg, 1);
    const EnsembleStore s8 = run_ensemble(t.op, t.noise, t.prior, t.mu, cfg, 8);
    save_store(s1, p1);
    save_store(s8, p8);
    const bool files_equal = read_file_bytes(p1) == read_file_bytes(p8);

    const auto report_text = [&](const EnsembleStore& store) {
        FunctionalSpec spec{"total", Vector(store.members.cols, 1.0), true};
        const Vector phis = functional_values(store, spec);
        double phi_bar = 0.0;
        for (double p : phis) phi_bar += p / phis.size();
        const double s_hat = std::sqrt(empirical_functional_variance(phis));
        const BracketedReport rep =
            bracketed_report(phi_bar, s_hat, store.size(), 0.05, 0.05);
        SyntheticMonthRow row;
        row.label = "total";
        row.phi_bar = phi_bar;
        row.report = rep;
        row.prior_sd = prior_functional_sd(spec, store.mu, store.metadata.b2);
        row.reduction_point = uncertainty_reduction(s_hat, row.prior_sd);
        row.reduction_inflated =
            uncertainty_reduction(s_hat * rep.factors.inflate, row.prior_sd);
        return timeseries_csv({row}) + to_json(rep).dump();
    };
    const bool reports_equal = report_text(load_store(p1)) == report_text(load_store(p8));

    report(files_equal && reports_equal,
           "one worker and eight workers write byte-identical stores and reports",
           std::string("files ") + (files_equal ? "identical" : "differ") +
               ", reports " + (reports_equal ? "identical" : "differ"));
}

// ---- criterion 9: synthetic inversion end-to-end ----

void synthetic_end_to_end() {
    namespace fs = std::filesystem;
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir = fs::temp_directory_path() / "fluxmc_acceptance" / "synthetic";
    fs::create_directories(dir);

    SyntheticSettings settings;
    settings.out_dir = dir.string();
    const SyntheticResult r = run_synthetic(settings);

    const bool members_agree =
        r.member_cross_check >= 0.0 && r.member_cross_check <= 1e-6 &&
        r.central_vs_analytic <= 1e-6;

    // schema of the emitted timeseries and report
    bool schema_ok = true;
    {
        const auto bytes = read_file_bytes(r.timeseries_path);
        const std::string csv(bytes.begin(), bytes.end());
        schema_ok = csv.rfind(std::string(kTimeseriesCsvHeader) + "\n", 0) == 0;
        std::size_t lines = 0;
        for (char ch : csv)
            if (ch == '\n') ++lines;
        schema_ok = schema_ok && lines == 1 + settings.months;

        const auto jb = read_file_bytes(r.report_path);
        const nlohmann::json doc = nlohmann::json::parse(std::string(jb.begin(), jb.end()));
        schema_ok = schema_ok && doc.contains("months") &&
                    doc.at("months").size() == settings.months;
        for (const auto& month : doc.at("months"))
            schema_ok = schema_ok && month.contains("label") &&
                        month.contains("prior_sd") && month.contains("nominal") &&
                        month.contains("inflated") && month.contains("deflated") &&
                        month.contains("lower_endpoint") &&
                        month.contains("upper_endpoint");
    }

    // repeated small ensembles: the variance CI should contain the true
    // functional variance at its nominal 95% rate
    const std::size_t cells = settings.cells, months = settings.months;
    const std::size_t m = cells * months;
    const ForwardOperator op = synthetic_operator(settings.observations, m,
                                                  settings.smoothness,
                                                  settings.operator_seed);
    const NoiseSpec noise = NoiseSpec::isotropic(settings.sigma2, settings.observations);
    const PriorSpec prior(Vector(m, 1.0), settings.b2);
    const Vector mu = seasonal_control_field(cells, months, settings.scenario_seed);

    const Matrix sigma = posterior_covariance(op, noise, prior, mu);
    const Vector h_eff = mu; // uniform weights on the flux field
    double sigma2_true = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            sigma2_true += h_eff[i] * sigma(i, j) * h_eff[j];

    const int runs = 200;
    int hits = 0;
    const FunctionalSpec total{"total", Vector(m, 1.0), true};
    for (int run = 0; run < runs; ++run) {
        EnsembleConfig cfg;
        cfg.members = settings.members;
        cfg.master_seed = 1000 + static_cast<std::uint64_t>(run);
        const EnsembleStore store = run_ensemble(op, noise, prior, mu, cfg, 4);
        const double s2 =
            empirical_functional_variance(functional_values(store, total));
        const Interval ci = variance_confidence_interval(s2, store.size(), 0.05);
        if (ci.lo <= sigma2_true && sigma2_true <= ci.hi) ++hits;
    }
    // three binomial standard errors around the nominal rate
    const bool coverage_ok = hits >= 181 && hits <= 199;

    const double elapsed = seconds_since(t0);
    report(members_agree && schema_ok && coverage_ok,
           "synthetic inversion members, schema, and interval coverage hold",
           fmt("member gap %.3g, central gap %.3g, ", r.member_cross_check,
               r.central_vs_analytic) +
               std::string(schema_ok ? "schema ok" : "schema broken") +
               fmt(", CI hits %.0f/200, %.1fs", hits, elapsed));
}

} // namespace

int main() {
    toy_matrix_values();
    composition_identity();
    empirical_convergence();
    factor_table();
    solver_equivalence();
    coverage_calibration();
    identity_suite();
    worker_determinism();
    synthetic_end_to_end();

    if (failures == 0) {
        std::printf("all acceptance criteria passed\n");
        return 0;
    }
    std::printf("%d acceptance criteria failed\n", failures);
    return 1;
}
