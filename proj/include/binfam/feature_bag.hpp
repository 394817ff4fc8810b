#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>

#include <json.hpp>

namespace binfam {

// Weighted bag of feature tokens. Entries with weight <= 0 are never stored;
// an absent token reads as weight 0. std::map keeps iteration (and therefore
// serialization) deterministic.
class FeatureBag {
public:
    using Map = std::map<std::string, double>;

    FeatureBag() = default;
    explicit FeatureBag(Map entries) : entries_(std::move(entries)) {
        for (auto it = entries_.begin(); it != entries_.end();) {
            if (it->second <= 0.0) it = entries_.erase(it);
            else ++it;
        }
    }

    double weight(const std::string& token) const {
        auto it = entries_.find(token);
        return it == entries_.end() ? 0.0 : it->second;
    }
    bool contains(const std::string& token) const { return entries_.count(token) != 0; }

    void set(const std::string& token, double w) {
        if (w > 0.0) entries_[token] = w;
        else entries_.erase(token);
    }
    // Inserts with weight 1 if absent; raw binaries carry unit weights.
    void insert_unit(const std::string& token) { entries_.emplace(token, 1.0); }

    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    const Map& entries() const { return entries_; }

    bool operator==(const FeatureBag& other) const = default;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j = nlohmann::ordered_json::object();
        for (const auto& [k, v] : entries_) j[k] = v;
        return j;
    }
    static FeatureBag from_json(const nlohmann::json& j) {
        Map m;
        for (auto it = j.begin(); it != j.end(); ++it) m[it.key()] = it.value().get<double>();
        return FeatureBag(std::move(m));
    }

private:
    Map entries_;
};

constexpr int kNumNgramSeeds = 4;

// Multi-channel representation of one binary or one exemplar: four MinHash
// n-gram bags (one per hash seed), a string bag and an import bag, plus the
// number of raw binaries this feature set stands for (1 for a raw binary).
struct BinaryFeatures {
    std::array<FeatureBag, kNumNgramSeeds> ngram_bags;
    FeatureBag string_bag;
    FeatureBag import_bag;
    std::int64_t size = 1;

    bool operator==(const BinaryFeatures& other) const = default;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        nlohmann::ordered_json ng = nlohmann::ordered_json::array();
        for (const auto& b : ngram_bags) ng.push_back(b.to_json());
        j["ngram_bags"] = std::move(ng);
        j["string_bag"] = string_bag.to_json();
        j["import_bag"] = import_bag.to_json();
        j["size"] = size;
        return j;
    }
    static BinaryFeatures from_json(const nlohmann::json& j) {
        BinaryFeatures f;
        const auto& ng = j.at("ngram_bags");
        for (int i = 0; i < kNumNgramSeeds; ++i) f.ngram_bags[i] = FeatureBag::from_json(ng.at(i));
        f.string_bag = FeatureBag::from_json(j.at("string_bag"));
        f.import_bag = FeatureBag::from_json(j.at("import_bag"));
        f.size = j.at("size").get<std::int64_t>();
        return f;
    }
};

}  // namespace binfam
