#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <binfam/feature_bag.hpp>
#include <binfam/hashing.hpp>
#include <binfam/record.hpp>

namespace binfam {

using MinhashSeeds = std::array<std::uint64_t, kNumNgramSeeds>;

inline constexpr MinhashSeeds kDefaultSeeds = {1, 2, 3, 4};

// MinHash label per seed: the minimum hash over the procedure's block hashes.
// Equality of labels across procedures estimates the Jaccard index of their
// block sets.
inline std::array<std::uint64_t, kNumNgramSeeds> minhash_labels(
    const std::vector<std::string>& blocks, const MinhashSeeds& seeds = kDefaultSeeds) {
    if (blocks.empty()) throw std::invalid_argument("empty procedure");
    std::array<std::uint64_t, kNumNgramSeeds> labels;
    for (int k = 0; k < kNumNgramSeeds; ++k) {
        std::uint64_t best = std::numeric_limits<std::uint64_t>::max();
        for (const auto& b : blocks) {
            std::uint64_t h = seeded_hash64(b, seeds[k]);
            if (h < best) best = h;
        }
        labels[k] = best;
    }
    return labels;
}

// 2-grams over the procedure call graph: one token per call edge, written as
// "label(caller)->label(callee)" under each seed. Procedures without edges
// contribute nothing here; isolated procedures only show up through the
// string/import channels.
inline std::array<FeatureBag, kNumNgramSeeds> pcg_ngrams(const RawBinaryRecord& record,
                                                         const MinhashSeeds& seeds = kDefaultSeeds) {
    std::map<std::string, std::array<std::uint64_t, kNumNgramSeeds>> labels;
    for (const auto& [pid, blocks] : record.procedures) {
        if (!blocks.empty()) labels[pid] = minhash_labels(blocks, seeds);
    }
    std::array<FeatureBag, kNumNgramSeeds> bags;
    for (const auto& [caller, callee] : record.call_edges) {
        auto a = labels.find(caller);
        auto b = labels.find(callee);
        if (a == labels.end() || b == labels.end()) continue;  // block-less endpoint
        for (int k = 0; k < kNumNgramSeeds; ++k) {
            bags[k].insert_unit(std::to_string(a->second[k]) + "->" + std::to_string(b->second[k]));
        }
    }
    return bags;
}

inline BinaryFeatures build_features(const RawBinaryRecord& record,
                                     const MinhashSeeds& seeds = kDefaultSeeds) {
    record.validate();
    BinaryFeatures f;
    f.ngram_bags = pcg_ngrams(record, seeds);
    for (const auto& s : record.strings) f.string_bag.insert_unit(s);
    for (const auto& s : record.imports) f.import_bag.insert_unit(s);
    f.size = 1;
    return f;
}

}  // namespace binfam
