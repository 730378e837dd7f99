#pragma once

#include <cstdint>
#include <string_view>

namespace usr::nn {

// Deterministic counter-free RNG built on splitmix64. A stream is fully
// identified by (seed, sample_index, purpose) so independent consumers can be
// handed disjoint streams up front and replayed bit-exactly later.
class DeterministicRng {
public:
    DeterministicRng(std::uint64_t seed, std::uint64_t sample_index, std::string_view purpose);

    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53 random bits.
    double next_uniform();

    // Uniform in [lo, hi).
    double next_uniform(double lo, double hi);

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t next_int(std::int64_t lo, std::int64_t hi);

    // Standard normal via Box-Muller; consumes exactly two u64 draws.
    double next_gaussian();

    std::uint64_t seed() const { return seed_; }
    std::uint64_t sample_index() const { return sample_index_; }

private:
    std::uint64_t state_ = 0;
    std::uint64_t seed_ = 0;
    std::uint64_t sample_index_ = 0;
};

// splitmix64 finalizer, exposed for stream-key derivation.
std::uint64_t splitmix64_mix(std::uint64_t x);

// FNV-1a hash of the purpose tag.
std::uint64_t hash_purpose(std::string_view purpose);

}  // namespace usr::nn
