#include "usr/rng.hpp"

#include <cmath>

namespace usr::nn {

namespace {
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;
constexpr double kTwoPi = 6.283185307179586476925286766559;
}  // namespace

std::uint64_t splitmix64_mix(std::uint64_t x) {
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::uint64_t hash_purpose(std::string_view purpose) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : purpose) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

DeterministicRng::DeterministicRng(std::uint64_t seed, std::uint64_t sample_index,
                                   std::string_view purpose)
    : seed_(seed), sample_index_(sample_index) {
    std::uint64_t s = splitmix64_mix(seed + kGamma);
    s = splitmix64_mix(s ^ hash_purpose(purpose));
    s = splitmix64_mix(s ^ sample_index);
    state_ = s;
}

std::uint64_t DeterministicRng::next_u64() {
    state_ += kGamma;
    return splitmix64_mix(state_);
}

double DeterministicRng::next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double DeterministicRng::next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_uniform();
}

std::int64_t DeterministicRng::next_int(std::int64_t lo, std::int64_t hi) {
    const double u = next_uniform();
    const std::int64_t span = hi - lo + 1;
    std::int64_t v = lo + static_cast<std::int64_t>(u * static_cast<double>(span));
    if (v > hi) v = hi;
    return v;
}

double DeterministicRng::next_gaussian() {
    // 1-u1 keeps the log argument in (0, 1]; the sine branch is discarded so a
    // draw always costs two u64s and the stream has no hidden cache state.
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    return r * std::cos(kTwoPi * u2);
}

}  // namespace usr::nn
