#ifndef DDIC_RNG_HPP
#define DDIC_RNG_HPP

#include <cstdint>
#include <random>

namespace ddic {

// splitmix64 finalizer; used to derive independent substreams from one seed
// so that per-item parallelism never changes the random values an item sees.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0) {
    return mix64(mix64(seed ^ 0x6a09e667f3bcc908ULL) ^ mix64(stream + 1) ^ mix64(mix64(substream + 0x42)));
}

inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0) {
    return std::mt19937_64(derive_seed(seed, stream, substream));
}

} // namespace ddic

#endif
