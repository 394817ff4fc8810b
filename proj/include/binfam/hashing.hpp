#pragma once

#include <cstdint>
#include <string_view>

namespace binfam {

// splitmix64 finalizer; good avalanche, stable everywhere.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seeded 64-bit FNV-1a over bytes with a mixed seed folded into the offset
// basis. Platform-independent: byte-wise, fixed-width arithmetic only.
inline std::uint64_t seeded_hash64(std::string_view data, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ mix64(seed);
    for (unsigned char c : data) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 0x100000001b3ULL;
    }
    return mix64(h);
}

// Stream digest for file contents / manifests.
class Digest64 {
public:
    void update(std::string_view data) {
        for (unsigned char c : data) {
            state_ ^= static_cast<std::uint64_t>(c);
            state_ *= 0x100000001b3ULL;
        }
    }
    std::uint64_t value() const { return mix64(state_); }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace binfam
