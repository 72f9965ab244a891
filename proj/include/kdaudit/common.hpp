#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace kdaudit {

// Error taxonomy used across the library. The CLI maps ConfigError to exit
// code 1 and everything else to 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Derives a stream-specific seed from a base seed and a label, so every
// pipeline stage draws from its own deterministic stream.
inline std::uint64_t seed_for(std::uint64_t base, const std::string& tag) {
    return splitmix64(base ^ fnv1a64(tag));
}

inline std::uint64_t seed_for(std::uint64_t base, const std::string& tag, std::uint64_t index) {
    return splitmix64(seed_for(base, tag) ^ splitmix64(index + 0x51ed2701ULL));
}

}  // namespace kdaudit
