#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <binfam/feature_bag.hpp>

namespace binfam {

// Relative weight of the three feature channels in the combined distance.
// Values are unconstrained non-negatives that must sum to 1.
struct ChannelWeights {
    double w_ngram = 0.5;
    double w_string = 0.3;
    double w_import = 0.2;

    void validate() const {
        if (w_ngram < 0 || w_string < 0 || w_import < 0)
            throw std::invalid_argument("channel weights must be non-negative");
        if (std::abs(w_ngram + w_string + w_import - 1.0) > 1e-12)
            throw std::invalid_argument("channel weights must sum to 1");
    }
};

enum class ThetaKind { Intersection, WeightedAverage };

inline std::string theta_kind_name(ThetaKind k) {
    return k == ThetaKind::Intersection ? "intersect" : "avg";
}
inline ThetaKind theta_kind_from_name(const std::string& s) {
    if (s == "intersect") return ThetaKind::Intersection;
    if (s == "avg") return ThetaKind::WeightedAverage;
    throw std::invalid_argument("unknown theta kind: " + s);
}

// Weighted Jaccard distance: 1 - sum(min weights) / sum(max weights), with a
// missing feature counting as weight 0. Two empty bags compare equal
// (distance 0); intersection exemplars can legitimately become empty.
inline double weighted_jaccard_distance(const FeatureBag& a, const FeatureBag& b) {
    if (a.empty() && b.empty()) return 0.0;
    double min_sum = 0.0, max_sum = 0.0;
    auto ia = a.entries().begin(), ea = a.entries().end();
    auto ib = b.entries().begin(), eb = b.entries().end();
    while (ia != ea && ib != eb) {
        int c = ia->first.compare(ib->first);
        if (c < 0) {
            max_sum += ia->second;
            ++ia;
        } else if (c > 0) {
            max_sum += ib->second;
            ++ib;
        } else {
            min_sum += std::min(ia->second, ib->second);
            max_sum += std::max(ia->second, ib->second);
            ++ia;
            ++ib;
        }
    }
    for (; ia != ea; ++ia) max_sum += ia->second;
    for (; ib != eb; ++ib) max_sum += ib->second;
    if (max_sum == 0.0) return 0.0;
    return 1.0 - min_sum / max_sum;
}

// Combined distance between two feature sets: the n-gram channel is the mean
// of the four per-seed weighted Jaccard distances, then the three channels
// are blended by the channel weights.
inline double combined_distance(const BinaryFeatures& x, const BinaryFeatures& y,
                                const ChannelWeights& cw = ChannelWeights{}) {
    double d_ngram = 0.0;
    for (int k = 0; k < kNumNgramSeeds; ++k)
        d_ngram += weighted_jaccard_distance(x.ngram_bags[k], y.ngram_bags[k]);
    d_ngram /= kNumNgramSeeds;
    double d_string = weighted_jaccard_distance(x.string_bag, y.string_bag);
    double d_import = weighted_jaccard_distance(x.import_bag, y.import_bag);
    return cw.w_ngram * d_ngram + cw.w_string * d_string + cw.w_import * d_import;
}

namespace detail {

inline FeatureBag intersect_bags(const std::vector<const FeatureBag*>& bags) {
    FeatureBag::Map out;
    for (const auto& [token, w] : bags[0]->entries()) {
        (void)w;
        bool everywhere = true;
        for (std::size_t i = 1; i < bags.size(); ++i) {
            if (!bags[i]->contains(token)) {
                everywhere = false;
                break;
            }
        }
        if (everywhere) out[token] = 1.0;
    }
    return FeatureBag(std::move(out));
}

inline FeatureBag average_bags(const std::vector<const FeatureBag*>& bags,
                               const std::vector<std::int64_t>& sizes) {
    double total = 0.0;
    for (auto s : sizes) total += static_cast<double>(s);
    FeatureBag::Map out;
    for (std::size_t i = 0; i < bags.size(); ++i) {
        for (const auto& [token, w] : bags[i]->entries()) {
            out[token] += static_cast<double>(sizes[i]) * w;
        }
    }
    for (auto it = out.begin(); it != out.end();) {
        it->second /= total;
        if (it->second <= 0.0) it = out.erase(it);
        else ++it;
    }
    return FeatureBag(std::move(out));
}

}  // namespace detail

// Transitive exemplar aggregation over all six bags. Intersection keeps the
// tokens present in every child at weight 1; WeightedAverage takes the
// size-weighted mean weight per token. Output size is the sum of child sizes.
inline BinaryFeatures theta(ThetaKind kind,
                            const std::vector<const BinaryFeatures*>& children) {
    if (children.empty()) throw std::invalid_argument("theta over empty child list");
    BinaryFeatures out;
    out.size = 0;
    std::vector<std::int64_t> sizes;
    sizes.reserve(children.size());
    for (const auto* c : children) {
        out.size += c->size;
        sizes.push_back(c->size);
    }
    auto aggregate = [&](auto bag_of) {
        std::vector<const FeatureBag*> bags;
        bags.reserve(children.size());
        for (const auto* c : children) bags.push_back(bag_of(*c));
        return kind == ThetaKind::Intersection ? detail::intersect_bags(bags)
                                               : detail::average_bags(bags, sizes);
    };
    for (int k = 0; k < kNumNgramSeeds; ++k) {
        out.ngram_bags[k] =
            aggregate([k](const BinaryFeatures& f) { return &f.ngram_bags[k]; });
    }
    out.string_bag = aggregate([](const BinaryFeatures& f) { return &f.string_bag; });
    out.import_bag = aggregate([](const BinaryFeatures& f) { return &f.import_bag; });
    return out;
}

}  // namespace binfam
