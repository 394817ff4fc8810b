#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include <binfam/hashing.hpp>

namespace binfam {

// Derives an independent stream seed from a master seed and a role tag, so
// every subsystem gets its own reproducible stream from one --seed flag.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) {
    return seeded_hash64(tag, mix64(master));
}

inline std::mt19937_64 make_rng(std::uint64_t master, std::string_view tag) {
    return std::mt19937_64(derive_seed(master, tag));
}

}  // namespace binfam
