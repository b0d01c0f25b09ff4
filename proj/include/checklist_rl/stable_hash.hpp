#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace checklist_rl {

// Deterministic, platform-independent hashing used wherever reproducible
// pseudo-random streams are derived from structured keys (noisy judge flips,
// per-update seeds, split shuffling). Not cryptographic.

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t hash_combine(uint64_t seed, uint64_t value) {
    return splitmix64(seed ^ (value + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2)));
}

inline uint64_t hash_combine(uint64_t seed, std::string_view value) {
    return hash_combine(seed, fnv1a64(value));
}

// Maps a hash to [0, 1) with 53 bits of precision.
inline double hash_to_unit(uint64_t h) {
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

} // namespace checklist_rl
