#pragma once

// Monte Carlo ensemble of one-step posterior-mode estimates. Each member k
// draws a prior-mean perturbation c_k ~ N(1, b^2 I) and synthetic
// observations y_k = A mu + eps_k, eps_k ~ N(0, R), then solves for the
// resulting posterior mode. Rows of the store sample the estimator's
// distribution, whose covariance equals the posterior covariance.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fluxmc/exact_posterior.hpp"
#include "fluxmc/forward_model.hpp"
#include "fluxmc/linalg.hpp"
#include "fluxmc/solver.hpp"

namespace fluxmc {

/// Runs body(0..count-1) on a small thread pool. Work items must be
/// independent; the first exception thrown aborts remaining work and is
/// rethrown on the calling thread.
void parallel_for_indexed(std::size_t count, unsigned workers,
                          const std::function<void(std::size_t)>& body);

enum class SolverChoice { analytic, variational };

std::string to_string(SolverChoice s);
SolverChoice solver_choice_from_string(const std::string& s);

struct EnsembleConfig {
    std::size_t members = 0; // M >= 2
    std::uint64_t master_seed = 0;
    SolverChoice solver = SolverChoice::analytic;
    LbfgsConfig solver_config;

    // A member whose variational solve does not converge counts as failed.
    // With max_failure_fraction == 0 any failure aborts the run; otherwise
    // failures up to the fraction are tolerated and their rows dropped.
    double max_failure_fraction = 0.0;

    std::size_t dense_cap = kDefaultDenseCap;
};

struct MemberSolveInfo {
    std::size_t index = 0;
    bool converged = true;
    std::size_t iterations = 0;
    double final_gradient_norm = 0.0;
};

struct StoreMetadata {
    std::size_t members = 0; // retained rows
    std::size_t control_dim = 0;
    std::size_t observation_dim = 0;
    double b2 = 0.0;
    std::uint64_t master_seed = 0;
    std::string solver;
    std::uint64_t operator_fingerprint = 0;
    std::size_t attempted = 0;
    std::size_t failed = 0;
    // Kept in memory for provenance displays; deliberately not persisted so
    // identical runs produce byte-identical files.
    std::string created;
};

struct EnsembleStore {
    StoreMetadata metadata;
    Vector mu;      // control scaling, length control_dim
    Matrix members; // one retained member per row, members x control_dim

    std::vector<MemberSolveInfo> solve_info; // variational runs only, in memory

    std::size_t size() const { return members.rows; }
    std::span<const double> member(std::size_t k) const { return members.row(k); }
};

/// Draws for member k: the prior-mean perturbation c_k ~ N(1, b^2 I) and
/// observation y_k = (A mu) + noise. Pure function of (master_seed, k); the
/// product A mu is supplied by the caller so repeated calls do not re-apply
/// the operator.
std::pair<Vector, Vector> sample_member_inputs(std::size_t k, std::uint64_t master_seed,
                                               double b2, const Vector& a_mu,
                                               const Vector& noise_sd,
                                               std::size_t control_dim);

/// Runs the full ensemble. Results are identical for any worker count.
EnsembleStore run_ensemble(const ForwardOperator& op, const NoiseSpec& noise,
                           const PriorSpec& prior, const Vector& mu,
                           const EnsembleConfig& config, unsigned workers = 1);

Vector empirical_mean(const EnsembleStore& store);

/// Two-pass sample covariance of the member rows, divisor M - 1.
Matrix empirical_covariance(const EnsembleStore& store,
                            std::size_t dense_cap = kDefaultDenseCap);

/// Members pushed to flux space: row k is member k times mu entrywise.
Matrix flux_members(const EnsembleStore& store);

void save_store(const EnsembleStore& store, const std::string& path);
EnsembleStore load_store(const std::string& path);

} // namespace fluxmc
