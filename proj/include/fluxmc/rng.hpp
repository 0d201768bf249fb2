#pragma once

// Counter-based random streams. Every draw is a pure function of
// (master seed, purpose, stream index, counter), so ensemble members can be
// generated in any order, on any number of workers, with identical results.

#include <cstdint>

#include "fluxmc/stats.hpp"

namespace fluxmc::rng {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

/// splitmix64 finalizer; bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
}

// Domain separation tags so distinct uses of one master seed never collide.
enum Purpose : std::uint64_t {
    kPurposeMemberPrior = 1,  // per-member prior draws c_k
    kPurposeMemberNoise = 2,  // per-member observation noise eps_k
    kPurposeObservation = 3,  // central synthetic observation noise
    kPurposeOperator = 4,     // synthetic operator construction
    kPurposeProbe = 5,        // adjoint probes / fingerprints
    kPurposeScenario = 6,     // scenario fields (mu, areas, truth)
};

/// Derive an independent sub-seed, e.g. one per coverage replicate.
constexpr std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index) {
    return mix64(mix64(master_seed) + kGolden * (index + 1));
}

class Stream {
public:
    Stream(std::uint64_t master_seed, std::uint64_t purpose, std::uint64_t index)
        : key_(mix64(mix64(master_seed ^ mix64(purpose)) + kGolden * (index + 1))) {}

    std::uint64_t bits(std::uint64_t counter) const {
        return mix64(key_ + kGolden * (counter + 1));
    }

    /// Uniform draw strictly inside (0, 1); never returns an endpoint.
    double uniform(std::uint64_t counter) const {
        return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via inverse CDF of a uniform draw.
    double normal(std::uint64_t counter) const {
        return stats::normal_quantile(uniform(counter));
    }

private:
    std::uint64_t key_;
};

} // namespace fluxmc::rng
