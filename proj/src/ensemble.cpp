#include "fluxmc/ensemble.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <ctime>
#include <exception>
#include <mutex>
#include <thread>

#include "json.hpp"

#include "fluxmc/hadamard.hpp"
#include "fluxmc/io.hpp"
#include "fluxmc/rng.hpp"

namespace fluxmc {

std::string to_string(SolverChoice s) {
    return s == SolverChoice::analytic ? "analytic" : "variational";
}

SolverChoice solver_choice_from_string(const std::string& s) {
    if (s == "analytic") return SolverChoice::analytic;
    if (s == "variational") return SolverChoice::variational;
    throw ConfigError("unknown solver '" + s + "' (expected analytic or variational)");
}

std::pair<Vector, Vector> sample_member_inputs(std::size_t k, std::uint64_t master_seed,
                                               double b2, const Vector& a_mu,
                                               const Vector& noise_sd,
                                               std::size_t control_dim) {
    if (!(b2 > 0.0) || !std::isfinite(b2))
        throw DefinitenessError("sample_member_inputs: b2 must be strictly positive");
    require_dim(noise_sd.size() == a_mu.size(), "sample_member_inputs: noise length");
    const double b = std::sqrt(b2);
    rng::Stream prior_stream(master_seed, rng::kPurposeMemberPrior, k);
    rng::Stream noise_stream(master_seed, rng::kPurposeMemberNoise, k);

    Vector c_k(control_dim);
    for (std::size_t i = 0; i < control_dim; ++i)
        c_k[i] = 1.0 + b * prior_stream.normal(i);

    Vector y_k(a_mu.size());
    for (std::size_t i = 0; i < a_mu.size(); ++i)
        y_k[i] = a_mu[i] + noise_sd[i] * noise_stream.normal(i);
    return {std::move(c_k), std::move(y_k)};
}

namespace {

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return std::string(buf);
}

} // namespace

void parallel_for_indexed(std::size_t count, unsigned workers,
                          const std::function<void(std::size_t)>& body) {
    if (workers <= 1 || count < 2) {
        for (std::size_t k = 0; k < count; ++k) body(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    constexpr std::size_t kBlock = 64;

    auto worker = [&] {
        for (;;) {
            const std::size_t begin = next.fetch_add(kBlock);
            if (begin >= count) return;
            const std::size_t end = std::min(begin + kBlock, count);
            for (std::size_t k = begin; k < end; ++k) {
                try {
                    body(k);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    next.store(count); // drain remaining work
                    return;
                }
            }
        }
    };

    std::vector<std::thread> pool;
    const unsigned spawn = std::min<unsigned>(workers, static_cast<unsigned>(count));
    pool.reserve(spawn);
    for (unsigned t = 0; t < spawn; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

EnsembleStore run_ensemble(const ForwardOperator& op, const NoiseSpec& noise,
                           const PriorSpec& prior, const Vector& mu,
                           const EnsembleConfig& config, unsigned workers) {
    const std::size_t m = op.input_dim();
    const std::size_t n = op.output_dim();
    require_dim(config.members >= 2, "run_ensemble: at least 2 members required");
    require_dim(noise.dim() == n, "run_ensemble: noise dimension mismatch");
    require_dim(prior.dim() == m, "run_ensemble: prior dimension mismatch");
    require_dim(mu.size() == m, "run_ensemble: mu dimension mismatch");
    require_finite(mu, "mu");
    if (!(config.max_failure_fraction >= 0.0 && config.max_failure_fraction < 1.0))
        throw ConfigError("run_ensemble: max_failure_fraction must lie in [0, 1)");
    if (workers == 0) workers = 1;

    const std::size_t M = config.members;
    const Vector a_mu = op.apply(mu);
    Vector noise_sd(n);
    for (std::size_t i = 0; i < n; ++i) noise_sd[i] = std::sqrt(noise.variances[i]);

    Matrix rows(M, m);
    std::vector<std::uint8_t> failed(M, 0);
    std::vector<MemberSolveInfo> info;

    const auto sample_k = [&](std::size_t k) {
        return sample_member_inputs(k, config.master_seed, prior.b2, a_mu, noise_sd, m);
    };

    if (config.solver == SolverChoice::analytic) {
        PosteriorPrecision precision(op, noise, prior, mu);
        const Matrix sigma = precision.covariance(config.dense_cap);
        parallel_for_indexed(M, workers, [&](std::size_t k) {
            const auto [c_k, y_k] = sample_k(k);
            const Vector sol = map_estimator(op, noise, c_k, y_k, prior, mu, sigma);
            std::memcpy(rows.row(k).data(), sol.data(), m * sizeof(double));
        });
    } else {
        info.resize(M);
        parallel_for_indexed(M, workers, [&](std::size_t k) {
            const auto [c_k, y_k] = sample_k(k);
            const SolverReport rep =
                minimize(c_k, make_cost(prior, c_k, y_k, noise, op, mu),
                         config.solver_config);
            info[k] = {k, rep.converged, rep.iterations, rep.final_gradient_norm};
            if (rep.converged)
                std::memcpy(rows.row(k).data(), rep.solution.data(), m * sizeof(double));
            else
                failed[k] = 1;
        });
    }

    std::size_t failure_count = 0;
    for (std::uint8_t f : failed) failure_count += f;
    if (failure_count > 0) {
        const double fraction = static_cast<double>(failure_count) / static_cast<double>(M);
        if (fraction > config.max_failure_fraction)
            throw SolverPolicyError(
                std::to_string(failure_count) + " of " + std::to_string(M) +
                " members failed to converge (tolerated fraction " +
                std::to_string(config.max_failure_fraction) + ")");
    }

    const std::size_t retained = M - failure_count;
    if (retained < 2)
        throw SolverPolicyError("fewer than 2 converged members remain");

    EnsembleStore store;
    store.mu = mu;
    store.solve_info = std::move(info);
    if (failure_count == 0) {
        store.members = std::move(rows);
    } else {
        store.members = Matrix(retained, m);
        std::size_t r = 0;
        for (std::size_t k = 0; k < M; ++k) {
            if (failed[k]) continue;
            std::memcpy(store.members.row(r).data(), rows.row(k).data(),
                        m * sizeof(double));
            ++r;
        }
    }

    store.metadata.members = retained;
    store.metadata.control_dim = m;
    store.metadata.observation_dim = n;
    store.metadata.b2 = prior.b2;
    store.metadata.master_seed = config.master_seed;
    store.metadata.solver = to_string(config.solver);
    store.metadata.operator_fingerprint = op.fingerprint();
    store.metadata.attempted = M;
    store.metadata.failed = failure_count;
    store.metadata.created = utc_timestamp();
    return store;
}

Vector empirical_mean(const EnsembleStore& store) {
    const std::size_t M = store.size();
    const std::size_t m = store.members.cols;
    require_dim(M >= 1, "empirical_mean: empty store");
    Vector mean(m, 0.0);
    for (std::size_t k = 0; k < M; ++k) {
        const auto row = store.member(k);
        for (std::size_t i = 0; i < m; ++i) mean[i] += row[i];
    }
    for (double& v : mean) v /= static_cast<double>(M);
    return mean;
}

Matrix empirical_covariance(const EnsembleStore& store, std::size_t dense_cap) {
    const std::size_t M = store.size();
    const std::size_t m = store.members.cols;
    require_dim(M >= 2, "empirical_covariance: need at least 2 members");
    if (m > dense_cap)
        throw UnsupportedPathError("empirical covariance above dense cap");

    const Vector mean = empirical_mean(store);
    Matrix cov(m, m);
    Vector centered(m);
    for (std::size_t k = 0; k < M; ++k) {
        const auto row = store.member(k);
        for (std::size_t i = 0; i < m; ++i) centered[i] = row[i] - mean[i];
        for (std::size_t i = 0; i < m; ++i) {
            const double ci = centered[i];
            double* out = cov.data.data() + i * m;
            for (std::size_t j = 0; j < m; ++j) out[j] += ci * centered[j];
        }
    }
    const double divisor = static_cast<double>(M - 1);
    for (double& v : cov.data) v /= divisor;
    return cov;
}

Matrix flux_members(const EnsembleStore& store) {
    const std::size_t M = store.size();
    const std::size_t m = store.members.cols;
    Matrix flux(M, m);
    for (std::size_t k = 0; k < M; ++k) {
        const auto row = store.member(k);
        for (std::size_t i = 0; i < m; ++i) flux(k, i) = row[i] * store.mu[i];
    }
    return flux;
}

namespace {
constexpr const char* kStoreMagic = "FLUXMC-ENS 1";
}

void save_store(const EnsembleStore& store, const std::string& path) {
    require_dim(store.members.rows >= 2, "save_store: need at least 2 members");
    require_dim(store.mu.size() == store.members.cols, "save_store: mu length mismatch");
    require_dim(store.metadata.members == store.members.rows,
                "save_store: metadata row count mismatch");
    require_dim(store.metadata.control_dim == store.members.cols,
                "save_store: metadata control_dim mismatch");

    std::vector<std::uint8_t> payload;
    append_le_doubles(payload, store.mu.data(), store.mu.size());
    append_le_doubles(payload, store.members.data.data(), store.members.data.size());

    nlohmann::json meta;
    meta["members"] = store.metadata.members;
    meta["control_dim"] = store.metadata.control_dim;
    meta["observation_dim"] = store.metadata.observation_dim;
    meta["b2"] = store.metadata.b2;
    meta["master_seed"] = store.metadata.master_seed;
    meta["solver"] = store.metadata.solver;
    meta["operator_fingerprint"] = to_hex(store.metadata.operator_fingerprint);
    meta["attempted"] = store.metadata.attempted;
    meta["failed"] = store.metadata.failed;
    meta["payload_checksum"] = to_hex(fnv1a64(payload));

    std::vector<std::uint8_t> out;
    const std::string header = std::string(kStoreMagic) + "\n" + meta.dump() + "\n";
    out.insert(out.end(), header.begin(), header.end());
    out.insert(out.end(), payload.begin(), payload.end());
    write_file_bytes(path, out);
}

EnsembleStore load_store(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    const auto header = split_header_lines(bytes, path);
    if (header.magic != kStoreMagic)
        throw StoreFormatError("unrecognized ensemble file header in " + path);

    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(header.metadata_json);
    } catch (const nlohmann::json::exception& e) {
        throw StoreMetadataError("bad ensemble metadata in " + path + ": " + e.what());
    }
    for (const char* key :
         {"members", "control_dim", "observation_dim", "b2", "master_seed", "solver",
          "operator_fingerprint", "attempted", "failed", "payload_checksum"}) {
        if (!meta.contains(key))
            throw StoreMetadataError(std::string("ensemble metadata missing '") + key +
                                     "' in " + path);
    }

    EnsembleStore store;
    try {
        store.metadata.members = meta.at("members").get<std::size_t>();
        store.metadata.control_dim = meta.at("control_dim").get<std::size_t>();
        store.metadata.observation_dim = meta.at("observation_dim").get<std::size_t>();
        store.metadata.b2 = meta.at("b2").get<double>();
        store.metadata.master_seed = meta.at("master_seed").get<std::uint64_t>();
        store.metadata.solver = meta.at("solver").get<std::string>();
        store.metadata.operator_fingerprint =
            from_hex(meta.at("operator_fingerprint").get<std::string>());
        store.metadata.attempted = meta.at("attempted").get<std::size_t>();
        store.metadata.failed = meta.at("failed").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw StoreMetadataError("bad ensemble metadata types in " + path + ": " +
                                 e.what());
    }

    const std::size_t M = store.metadata.members;
    const std::size_t m = store.metadata.control_dim;
    if (M < 2 || m == 0 || store.metadata.observation_dim == 0)
        throw StoreMetadataError("ensemble metadata declares degenerate shape in " + path);
    if (!(store.metadata.b2 > 0.0))
        throw StoreMetadataError("ensemble metadata has nonpositive b2 in " + path);
    if (store.metadata.attempted != store.metadata.members + store.metadata.failed)
        throw StoreMetadataError("ensemble metadata counts are inconsistent in " + path);
    try {
        solver_choice_from_string(store.metadata.solver);
    } catch (const ConfigError& e) {
        throw StoreMetadataError(std::string(e.what()) + " in " + path);
    }

    const std::size_t expected = 8 * (m + M * m);
    const std::size_t actual = bytes.size() - header.payload_offset;
    if (actual != expected)
        throw StoreShapeError("ensemble payload is " + std::to_string(actual) +
                              " bytes, header declares " + std::to_string(expected) +
                              " in " + path);

    const std::uint64_t checksum = fnv1a64(bytes.data() + header.payload_offset, expected);
    if (checksum != from_hex(meta.at("payload_checksum").get<std::string>()))
        throw StoreChecksumError("ensemble payload checksum mismatch in " + path);

    const std::uint8_t* p = bytes.data() + header.payload_offset;
    store.mu.resize(m);
    for (std::size_t i = 0; i < m; ++i) store.mu[i] = read_le_double(p + 8 * i);
    p += 8 * m;
    store.members = Matrix(M, m);
    for (std::size_t i = 0; i < store.members.data.size(); ++i)
        store.members.data[i] = read_le_double(p + 8 * i);
    return store;
}

} // namespace fluxmc
