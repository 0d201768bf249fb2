#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fluxmc/ensemble.hpp"
#include "fluxmc/errors.hpp"
#include "fluxmc/experiments.hpp"
#include "fluxmc/functional_uq.hpp"
#include "fluxmc/io.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitSolver = 3;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    std::string out_dir;
};

void add_common_flags(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON configuration file");
    cmd->add_option("--set", args.overrides,
                    "override one config value, dotted.path=value (repeatable)");
    cmd->add_option("--seed", args.seed, "master seed (overrides ensemble.master_seed)");
    cmd->add_option("--workers", args.workers, "worker threads (overrides ensemble.workers)");
    cmd->add_option("--out", args.out_dir, "output directory (overrides output.dir)");
}

nlohmann::json load_user_config(const std::string& path) {
    if (path.empty()) return nullptr;
    std::ifstream in(path);
    if (!in) throw fluxmc::ConfigError("cannot open config file '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw fluxmc::ConfigError("config file '" + path + "' is not valid JSON: " +
                                  e.what());
    }
}

nlohmann::json finalize_config(const std::string& command, const CommonArgs& args) {
    nlohmann::json config =
        fluxmc::effective_config(command, load_user_config(args.config_path),
                                 args.overrides);
    if (args.seed) config["ensemble"]["master_seed"] = *args.seed;
    if (args.workers) config["ensemble"]["workers"] = *args.workers;
    if (!args.out_dir.empty()) config["output"]["dir"] = args.out_dir;
    return config;
}

void print_matrix(const char* name, const fluxmc::Matrix& a) {
    std::printf("%s:\n", name);
    for (std::size_t i = 0; i < a.rows; ++i) {
        std::printf(" ");
        for (std::size_t j = 0; j < a.cols; ++j) std::printf(" %13.6g", a(i, j));
        std::printf("\n");
    }
}

void print_warnings(const std::vector<std::string>& warnings) {
    for (const std::string& w : warnings) std::printf("warning: %s\n", w.c_str());
}

int cmd_toy2d(const CommonArgs& args) {
    const nlohmann::json config = finalize_config("toy2d", args);
    const fluxmc::Toy2dSettings settings = fluxmc::parse_toy2d_settings(config);
    const fluxmc::Toy2dResult r = fluxmc::run_toy2d(settings);

    std::printf("two-cell problem: %zu members, seed %llu, %s solver\n",
                settings.members,
                static_cast<unsigned long long>(settings.master_seed),
                fluxmc::to_string(settings.solver).c_str());
    print_matrix("posterior covariance (control space)", r.sigma);
    print_matrix("estimator covariance (precision composition)", r.estimator_cov);
    print_matrix("ensemble sample covariance", r.empirical_cov);
    print_matrix("posterior covariance (flux space)", r.flux_cov);
    print_matrix("estimator covariance (flux space)", r.flux_estimator_cov);
    print_matrix("ensemble sample covariance (flux space)", r.empirical_flux_cov);
    std::printf("composition vs exact, relative Frobenius error: %.6g\n",
                r.composition_rel_error);
    std::printf("sample vs exact, relative spectral error: %.6g (bound %.6g) %s\n",
                r.scaling_rel_error, r.error_bound, r.within_bound ? "OK" : "EXCEEDED");
    std::printf("flux-space sample vs exact, relative spectral error: %.6g\n",
                r.flux_rel_error);
    print_warnings(r.warnings);
    if (!r.report_path.empty()) std::printf("wrote %s\n", r.report_path.c_str());
    return kExitOk;
}

int cmd_factors(const CommonArgs& args) {
    const nlohmann::json config = finalize_config("factors", args);
    const fluxmc::FactorsSettings settings = fluxmc::parse_factors_settings(config);
    const fluxmc::FactorsResult r = fluxmc::run_factors(settings);

    std::printf("sd deflation/inflation factors at alpha = %g\n", settings.alpha);
    std::printf("%10s %10s %10s\n", "M", "L", "R");
    for (const fluxmc::FactorRow& row : r.rows)
        std::printf("%10zu %10.4f %10.4f\n", row.members, row.deflate, row.inflate);
    if (!r.table_path.empty()) std::printf("wrote %s\n", r.table_path.c_str());
    return kExitOk;
}

int cmd_synthetic(const CommonArgs& args) {
    const nlohmann::json config = finalize_config("synthetic", args);
    const fluxmc::SyntheticSettings settings = fluxmc::parse_synthetic_settings(config);
    const fluxmc::SyntheticResult r = fluxmc::run_synthetic(settings);

    std::printf("synthetic inversion: %zu controls (%zu cells x %zu months), "
                "%zu observations\n",
                r.control_dim, settings.cells, settings.months, r.observation_dim);
    std::printf("scaled operator condition number: %.6g\n", r.condition_number);
    std::printf("central inversion: %s in %zu iterations, |grad| %.3g, "
                "vs closed form %.3g\n",
                r.central_report.converged ? "converged" : "NOT CONVERGED",
                r.central_report.iterations, r.central_report.final_gradient_norm,
                r.central_vs_analytic);
    if (r.member_cross_check >= 0.0)
        std::printf("ensemble cross-check (other solve path): max relative gap %.3g\n",
                    r.member_cross_check);
    std::printf("ensemble: %zu retained of %zu attempted, %s solver\n",
                r.store.metadata.members, r.store.metadata.attempted,
                r.store.metadata.solver.c_str());

    std::printf("%-6s %12s %12s %26s %26s %8s\n", "label", "phi_map", "sd_hat",
                "nominal 95% interval", "inflated 95% interval", "reduc%");
    for (const fluxmc::SyntheticMonthRow& row : r.months) {
        std::printf("%-6s %12.6g %12.6g [%11.6g, %11.6g] [%11.6g, %11.6g] %8.2f\n",
                    row.label.c_str(), row.report.phi_map, row.report.sigma_hat,
                    row.report.nominal.lo, row.report.nominal.hi, row.report.inflated.lo,
                    row.report.inflated.hi, 100.0 * row.reduction_point);
    }
    print_warnings(r.warnings);
    if (!r.timeseries_path.empty()) std::printf("wrote %s\n", r.timeseries_path.c_str());
    if (!r.report_path.empty()) std::printf("wrote %s\n", r.report_path.c_str());
    return kExitOk;
}

int cmd_coverage(const CommonArgs& args) {
    const nlohmann::json config = finalize_config("coverage", args);
    const fluxmc::CoverageSettings settings = fluxmc::parse_coverage_settings(config);
    const fluxmc::CoverageResult r = fluxmc::run_coverage(settings);

    std::printf("coverage over %zu replicate ensembles of %zu members\n", r.replicates,
                settings.members);
    std::printf("true functional variance: %.6g\n", r.sigma2_true);
    std::printf("variance CI coverage:            %.4f (nominal %.4f, se %.4f)\n",
                r.variance_ci_coverage, 1.0 - settings.alpha, r.binomial_se);
    std::printf("sd CI coverage:                  %.4f\n", r.sd_ci_coverage);
    std::printf("simultaneous endpoint coverage:  %.4f\n", r.endpoint_coverage);
    std::printf("pivot KS statistic: %.6g (1%% critical %.6g) %s\n", r.ks_stat,
                r.ks_critical, r.ks_pass ? "OK" : "REJECTED");
    if (!r.report_path.empty()) std::printf("wrote %s\n", r.report_path.c_str());
    return kExitOk;
}

std::string resolve_store_path(const nlohmann::json& config) {
    const std::string name = config.at("ensemble").at("path").get<std::string>();
    std::filesystem::path p(name);
    if (p.is_absolute()) return p.string();
    const std::string dir = config.at("output").at("dir").get<std::string>();
    if (dir.empty()) return p.string();
    std::filesystem::create_directories(dir);
    return (std::filesystem::path(dir) / p).string();
}

int cmd_ensemble_run(const CommonArgs& args) {
    const nlohmann::json config = finalize_config("ensemble", args);
    fluxmc::ProblemSetup problem = fluxmc::build_problem(config);

    const auto& ens = config.at("ensemble");
    fluxmc::EnsembleConfig cfg;
    cfg.members = ens.at("M").get<std::size_t>();
    cfg.master_seed = ens.at("master_seed").get<std::uint64_t>();
    cfg.solver = fluxmc::solver_choice_from_string(ens.at("solver").get<std::string>());
    cfg.solver_config.max_iterations = ens.at("max_iterations").get<std::size_t>();
    cfg.solver_config.gradient_tolerance = ens.at("gradient_tolerance").get<double>();
    cfg.solver_config.memory = ens.at("memory").get<std::size_t>();
    cfg.max_failure_fraction = ens.at("max_failure_fraction").get<double>();
    const unsigned workers = ens.at("workers").get<unsigned>();

    const fluxmc::EnsembleStore store = fluxmc::run_ensemble(
        problem.op, problem.noise, problem.prior, problem.mu, cfg, workers);

    const std::string path = resolve_store_path(config);
    fluxmc::save_store(store, path);
    std::printf("wrote %s: %zu members (%zu attempted, %zu failed), control dim %zu, "
                "%s solver, seed %llu\n",
                path.c_str(), store.metadata.members, store.metadata.attempted,
                store.metadata.failed, store.metadata.control_dim,
                store.metadata.solver.c_str(),
                static_cast<unsigned long long>(store.metadata.master_seed));
    return kExitOk;
}

int cmd_ensemble_info(const std::string& path) {
    const fluxmc::EnsembleStore store = fluxmc::load_store(path);
    const fluxmc::StoreMetadata& md = store.metadata;
    std::printf("%s\n", path.c_str());
    std::printf("  members:              %zu\n", md.members);
    std::printf("  attempted:            %zu\n", md.attempted);
    std::printf("  failed:               %zu\n", md.failed);
    std::printf("  control dimension:    %zu\n", md.control_dim);
    std::printf("  observation dim:      %zu\n", md.observation_dim);
    std::printf("  prior variance b2:    %.6g\n", md.b2);
    std::printf("  master seed:          %llu\n",
                static_cast<unsigned long long>(md.master_seed));
    std::printf("  solver:               %s\n", md.solver.c_str());
    std::printf("  operator fingerprint: %016llx\n",
                static_cast<unsigned long long>(md.operator_fingerprint));
    return kExitOk;
}

int cmd_report(const CommonArgs& args, const std::string& store_path) {
    const nlohmann::json config = finalize_config("report", args);
    const fluxmc::EnsembleStore store = fluxmc::load_store(store_path);

    const double alpha = config.at("uq").at("alpha").get<double>();
    const double gamma = config.at("uq").at("gamma").get<double>();
    const std::string conv_name =
        config.at("uq").at("prior_sd_convention").get<std::string>();
    if (conv_name != "independent" && conv_name != "coherent")
        throw fluxmc::ConfigError(
            "config uq.prior_sd_convention: expected independent or coherent");
    const fluxmc::PriorSdConvention convention =
        conv_name == "coherent" ? fluxmc::PriorSdConvention::coherent
                                : fluxmc::PriorSdConvention::independent;
    const auto& phi_map_node = config.at("report").at("phi_map");
    if (!phi_map_node.is_null() && !phi_map_node.is_number())
        throw fluxmc::ConfigError("config report.phi_map: expected a number or null");

    const std::vector<fluxmc::FunctionalSpec> specs =
        fluxmc::parse_functionals(config, store.metadata.control_dim);

    std::vector<fluxmc::SyntheticMonthRow> rows;
    rows.reserve(specs.size());
    for (const fluxmc::FunctionalSpec& spec : specs) {
        const fluxmc::Vector phis = fluxmc::functional_values(store, spec);
        double phi_bar = 0.0;
        for (double v : phis) phi_bar += v;
        phi_bar /= static_cast<double>(phis.size());
        const double s2 = fluxmc::empirical_functional_variance(phis);
        const double phi_map =
            phi_map_node.is_null() ? phi_bar : phi_map_node.get<double>();

        fluxmc::SyntheticMonthRow row;
        row.label = spec.label;
        row.phi_bar = phi_bar;
        row.report = fluxmc::bracketed_report(phi_map, std::sqrt(s2), store.size(),
                                              alpha, gamma);
        row.prior_sd =
            fluxmc::prior_functional_sd(spec, store.mu, store.metadata.b2, convention);
        row.reduction_point = fluxmc::uncertainty_reduction(std::sqrt(s2), row.prior_sd);
        row.reduction_inflated = fluxmc::uncertainty_reduction(
            std::sqrt(s2) * row.report.factors.inflate, row.prior_sd);
        rows.push_back(std::move(row));
    }

    std::printf("%zu members, %zu functional(s), alpha %g, gamma %g\n", store.size(),
                rows.size(), alpha, gamma);
    std::printf("%-12s %12s %12s %26s %26s %8s\n", "label", "phi_map", "sd_hat",
                "nominal interval", "inflated interval", "reduc%");
    for (const fluxmc::SyntheticMonthRow& row : rows) {
        std::printf("%-12s %12.6g %12.6g [%11.6g, %11.6g] [%11.6g, %11.6g] %8.2f\n",
                    row.label.c_str(), row.report.phi_map, row.report.sigma_hat,
                    row.report.nominal.lo, row.report.nominal.hi, row.report.inflated.lo,
                    row.report.inflated.hi, 100.0 * row.reduction_point);
    }

    const std::string dir = config.at("output").at("dir").get<std::string>();
    if (!dir.empty()) {
        std::filesystem::create_directories(dir);
        const std::string csv_path = (std::filesystem::path(dir) / "report.csv").string();
        fluxmc::write_text_file(csv_path, fluxmc::timeseries_csv(rows));

        nlohmann::json doc;
        doc["store"] = store_path;
        doc["members"] = store.size();
        nlohmann::json items = nlohmann::json::array();
        for (const fluxmc::SyntheticMonthRow& row : rows) {
            nlohmann::json item = fluxmc::to_json(row.report);
            item["label"] = row.label;
            item["phi_bar"] = row.phi_bar;
            item["prior_sd"] = row.prior_sd;
            item["reduction_point"] = row.reduction_point;
            item["reduction_inflated"] = row.reduction_inflated;
            items.push_back(std::move(item));
        }
        doc["functionals"] = std::move(items);
        const std::string json_path =
            (std::filesystem::path(dir) / "report.json").string();
        fluxmc::write_text_file(json_path, doc.dump(2) + "\n");
        std::printf("wrote %s\n", csv_path.c_str());
        std::printf("wrote %s\n", json_path.c_str());
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte Carlo posterior uncertainty for scaled linear-Gaussian inversion"};
    app.require_subcommand(1);

    CommonArgs toy_args, factor_args, synth_args, cov_args, run_args, report_args;

    CLI::App* toy = app.add_subcommand("toy2d", "two-cell closed-form demonstration");
    add_common_flags(toy, toy_args);

    CLI::App* factors =
        app.add_subcommand("factors", "sd deflation/inflation factor table");
    add_common_flags(factors, factor_args);

    CLI::App* synthetic =
        app.add_subcommand("synthetic", "gridded synthetic inversion with monthly UQ");
    add_common_flags(synthetic, synth_args);

    CLI::App* coverage =
        app.add_subcommand("coverage", "frequentist coverage of the interval machinery");
    add_common_flags(coverage, cov_args);

    CLI::App* ensemble = app.add_subcommand("ensemble", "ensemble store operations");
    ensemble->require_subcommand(1);
    CLI::App* ens_run = ensemble->add_subcommand("run", "run an ensemble and save it");
    add_common_flags(ens_run, run_args);
    std::string info_path;
    CLI::App* ens_info = ensemble->add_subcommand("info", "print store metadata");
    ens_info->add_option("path", info_path, "ensemble store file")->required();

    std::string report_store;
    CLI::App* report =
        app.add_subcommand("report", "functional UQ report from a saved store");
    report->add_option("store", report_store, "ensemble store file")->required();
    add_common_flags(report, report_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (toy->parsed()) return cmd_toy2d(toy_args);
        if (factors->parsed()) return cmd_factors(factor_args);
        if (synthetic->parsed()) return cmd_synthetic(synth_args);
        if (coverage->parsed()) return cmd_coverage(cov_args);
        if (ensemble->parsed()) {
            if (ens_run->parsed()) return cmd_ensemble_run(run_args);
            if (ens_info->parsed()) return cmd_ensemble_info(info_path);
        }
        if (report->parsed()) return cmd_report(report_args, report_store);
        std::fprintf(stderr, "error: no subcommand\n");
        return kExitConfig;
    } catch (const fluxmc::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const fluxmc::SolverPolicyError& e) {
        std::fprintf(stderr, "solver failure: %s\n", e.what());
        return kExitSolver;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumerical;
    }
    return kExitOk;
}
