#pragma once

#include <cstdint>
#include <random>

namespace comil {

// splitmix64 finalizer; decorrelates nearby seed values.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Derives an independent stream from a user seed and a purpose tag, so that
// e.g. model init and epoch shuffling never share a sequence.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(seed ^ splitmix64(stream));
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
    return std::mt19937_64{mix_seed(seed, stream)};
}

} // namespace comil
