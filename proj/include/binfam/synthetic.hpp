#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <binfam/metrics.hpp>
#include <binfam/record.hpp>
#include <binfam/rng.hpp>

namespace binfam {

struct PlantedCorpus {
    std::vector<RawBinaryRecord> records;
    ClusteringLabels truth;  // binary id -> family id
};

// Family prototypes with disjoint token vocabularies; members replace each
// token independently at mutation_rate with a fresh one-off token.
inline PlantedCorpus generate_planted_corpus(int families, int per_family, double mutation_rate,
                                             std::uint64_t seed) {
    if (families < 1 || per_family < 1) throw std::invalid_argument("need >= 1 family and member");
    PlantedCorpus out;
    std::mt19937_64 rng = make_rng(seed, "planted-corpus");
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uint64_t fresh = 0;

    const int procs = 12, blocks_per_proc = 6, edges = 18, strings = 30, imports = 8;
    for (int f = 0; f < families; ++f) {
        std::string fam = "fam" + std::to_string(f);
        // Prototype.
        std::vector<std::vector<std::string>> proto_blocks(procs);
        for (int p = 0; p < procs; ++p)
            for (int b = 0; b < blocks_per_proc; ++b)
                proto_blocks[p].push_back(fam + ":blk:" + std::to_string(p) + ":" +
                                          std::to_string(b));
        std::vector<std::pair<int, int>> proto_edges;
        std::uniform_int_distribution<int> pick(0, procs - 1);
        while (static_cast<int>(proto_edges.size()) < edges) {
            int a = pick(rng), b = pick(rng);
            if (a != b) proto_edges.emplace_back(a, b);
        }
        std::vector<std::string> proto_strings, proto_imports;
        for (int s = 0; s < strings; ++s) proto_strings.push_back(fam + ":str:" + std::to_string(s));
        for (int s = 0; s < imports; ++s) proto_imports.push_back(fam + ":imp:" + std::to_string(s));

        for (int m = 0; m < per_family; ++m) {
            RawBinaryRecord r;
            r.binary_id = fam + "-bin" + std::to_string(m);
            auto mutate = [&](const std::string& tok) {
                if (coin(rng) < mutation_rate)
                    return fam + ":mut:" + std::to_string(fresh++);
                return tok;
            };
            for (int p = 0; p < procs; ++p) {
                std::vector<std::string> blocks;
                for (const auto& b : proto_blocks[p]) blocks.push_back(mutate(b));
                r.procedures.emplace_back("p" + std::to_string(p), blocks);
            }
            for (const auto& [a, b] : proto_edges)
                r.call_edges.emplace_back("p" + std::to_string(a), "p" + std::to_string(b));
            for (const auto& s : proto_strings) r.strings.push_back(mutate(s));
            for (const auto& s : proto_imports) r.imports.push_back(mutate(s));
            out.truth[r.binary_id] = fam;
            out.records.push_back(std::move(r));
        }
    }
    return out;
}

struct PlantedComponents {
    std::vector<RawBinaryRecord> records;
    // component index -> (binary id -> procedure ids of that instantiation)
    std::vector<std::map<std::string, std::set<std::string>>> truth;
};

// Components are fixed procedure sets injected per binary with probability
// p_i; remaining procedures are one-off filler unique to each binary.
inline PlantedComponents generate_planted_components(int num_binaries,
                                                     const std::vector<double>& appearance_probs,
                                                     double mutation_rate, std::uint64_t seed) {
    if (num_binaries < 1) throw std::invalid_argument("need >= 1 binary");
    for (double p : appearance_probs)
        if (p < 0.0 || p > 1.0) throw std::invalid_argument("appearance prob outside [0,1]");
    PlantedComponents out;
    out.truth.resize(appearance_probs.size());
    std::mt19937_64 rng = make_rng(seed, "planted-components");
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uint64_t fresh = 0;

    const int procs_per_component = 4, blocks_per_proc = 8, fillers = 6;
    std::vector<std::vector<std::vector<std::string>>> comp_blocks(appearance_probs.size());
    for (std::size_t c = 0; c < appearance_probs.size(); ++c) {
        comp_blocks[c].resize(procs_per_component);
        for (int p = 0; p < procs_per_component; ++p)
            for (int b = 0; b < blocks_per_proc; ++b)
                comp_blocks[c][p].push_back("comp" + std::to_string(c) + ":" + std::to_string(p) +
                                            ":" + std::to_string(b));
    }

    for (int i = 0; i < num_binaries; ++i) {
        RawBinaryRecord r;
        r.binary_id = "wb" + std::to_string(i);
        for (std::size_t c = 0; c < appearance_probs.size(); ++c) {
            if (coin(rng) >= appearance_probs[c]) continue;
            for (int p = 0; p < procs_per_component; ++p) {
                std::string pid = "c" + std::to_string(c) + "_p" + std::to_string(p);
                std::vector<std::string> blocks;
                for (const auto& b : comp_blocks[c][p]) {
                    if (coin(rng) < mutation_rate)
                        blocks.push_back("mut:" + std::to_string(fresh++));
                    else blocks.push_back(b);
                }
                r.procedures.emplace_back(pid, blocks);
                out.truth[c][r.binary_id].insert(pid);
            }
        }
        for (int f = 0; f < fillers; ++f) {
            std::vector<std::string> blocks;
            for (int b = 0; b < blocks_per_proc; ++b)
                blocks.push_back("fill:" + std::to_string(fresh++));
            r.procedures.emplace_back("fill_p" + std::to_string(f), blocks);
        }
        out.records.push_back(std::move(r));
    }
    return out;
}

}  // namespace binfam
