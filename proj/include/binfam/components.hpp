#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include <binfam/kmeans.hpp>
#include <binfam/louvain.hpp>
#include <binfam/record.hpp>

namespace binfam {

// One procedure of one binary, keyed by its set of block-semantics hashes.
struct ProcedureRef {
    std::string binary_id;
    std::string procedure_id;
    std::set<std::string> blocks;  // non-empty
};

inline std::vector<ProcedureRef> procedure_refs(const std::vector<RawBinaryRecord>& corpus) {
    std::vector<ProcedureRef> out;
    for (const auto& r : corpus) {
        for (const auto& [pid, blocks] : r.procedures) {
            if (blocks.empty()) continue;  // nothing to match on
            out.push_back({r.binary_id, pid, std::set<std::string>(blocks.begin(), blocks.end())});
        }
    }
    return out;
}

inline double jaccard_index_sets(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& x : a) inter += b.count(x);
    std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

struct ProcedureCluster {
    std::vector<int> members;   // indices into the ProcedureRef list
    std::vector<int> presence;  // 0/1 per binary, in binary_order
};

// Stage one: Louvain over the procedure graph, where edge weight is the
// Jaccard index of block sets; weak edges are pruned.
inline std::vector<std::vector<int>> cluster_procedures(const std::vector<ProcedureRef>& procs,
                                                        double prune = 0.3) {
    if (procs.empty()) throw std::invalid_argument("no procedures to cluster");
    SimilarityGraph g(procs.size());
    for (std::size_t i = 0; i < procs.size(); ++i) {
        for (std::size_t j = i + 1; j < procs.size(); ++j) {
            double sim = jaccard_index_sets(procs[i].blocks, procs[j].blocks);
            if (sim >= prune) g.add_edge(static_cast<int>(i), static_cast<int>(j), sim);
        }
    }
    std::vector<int> comm = louvain_communities(g);
    int k = *std::max_element(comm.begin(), comm.end()) + 1;
    std::vector<std::vector<int>> clusters(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < comm.size(); ++i)
        clusters[static_cast<std::size_t>(comm[i])].push_back(static_cast<int>(i));
    return clusters;
}

// S_i[j] = 1 iff cluster i contains a procedure from binary j.
inline std::vector<std::vector<int>> to_presence_vectors(
    const std::vector<std::vector<int>>& clusters, const std::vector<ProcedureRef>& procs,
    const std::vector<std::string>& binary_order) {
    std::map<std::string, std::size_t> index;
    for (std::size_t j = 0; j < binary_order.size(); ++j) index[binary_order[j]] = j;
    std::vector<std::vector<int>> vectors;
    vectors.reserve(clusters.size());
    for (const auto& cluster : clusters) {
        std::vector<int> v(binary_order.size(), 0);
        for (int m : cluster) v[index.at(procs[static_cast<std::size_t>(m)].binary_id)] = 1;
        vectors.push_back(std::move(v));
    }
    return vectors;
}

enum class ComponentMethod { Louvain, KMeans };

// Stage two: cluster the presence vectors. Louvain runs on an inverted and
// scaled L2 similarity, sim(u,v) = 1 - |u-v| / max-pairwise-|.|; K-means runs
// on raw L2 with K capped at the vector count.
inline std::vector<int> cluster_components(const std::vector<std::vector<int>>& vectors,
                                           ComponentMethod method, int k = 50,
                                           std::uint64_t seed = 42) {
    if (vectors.empty()) return {};
    const std::size_t n = vectors.size();
    auto l2 = [&](std::size_t a, std::size_t b) {
        double s = 0.0;
        for (std::size_t d = 0; d < vectors[a].size(); ++d) {
            double diff = vectors[a][d] - vectors[b][d];
            s += diff * diff;
        }
        return std::sqrt(s);
    };
    if (method == ComponentMethod::KMeans) {
        std::vector<std::vector<double>> pts(n);
        for (std::size_t i = 0; i < n; ++i)
            pts[i].assign(vectors[i].begin(), vectors[i].end());
        return kmeans(pts, k, 100, seed);
    }
    double max_d = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) max_d = std::max(max_d, l2(i, j));
    SimilarityGraph g(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double sim = max_d > 0.0 ? 1.0 - l2(i, j) / max_d : 1.0;
            if (sim > 0.0) g.add_edge(static_cast<int>(i), static_cast<int>(j), sim);
        }
    }
    return louvain_communities(g);
}

struct Component {
    int id = 0;
    std::vector<int> cluster_ids;  // stage-one clusters merged into this component
    std::map<std::string, std::set<std::string>> instantiations;  // binary -> procedure ids
    std::vector<int> presence;  // 0/1 per binary in binary_order
    bool shared() const { return instantiations.size() >= 2; }
};

struct ComponentReport {
    std::vector<Component> components;
    std::vector<std::string> binary_order;
    std::map<std::string, int> components_per_binary;
};

// The full two-stage pipeline over a corpus.
inline ComponentReport identify_components(const std::vector<RawBinaryRecord>& corpus,
                                           ComponentMethod method, int k = 50,
                                           std::uint64_t seed = 42, double prune = 0.3,
                                           bool with_split = false) {
    if (with_split) throw std::logic_error("unimplemented: split refinement");
    ComponentReport out;
    for (const auto& r : corpus) out.binary_order.push_back(r.binary_id);
    std::sort(out.binary_order.begin(), out.binary_order.end());
    for (const auto& b : out.binary_order) out.components_per_binary[b] = 0;
    if (corpus.empty()) return out;
    std::vector<ProcedureRef> procs = procedure_refs(corpus);
    if (procs.empty()) return out;

    std::vector<std::vector<int>> clusters = cluster_procedures(procs, prune);
    std::vector<std::vector<int>> vectors =
        to_presence_vectors(clusters, procs, out.binary_order);
    std::vector<int> assignment = cluster_components(vectors, method, k, seed);

    std::map<int, Component> grouped;
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        Component& comp = grouped[assignment[c]];
        comp.cluster_ids.push_back(static_cast<int>(c));
        if (comp.presence.empty()) comp.presence.assign(out.binary_order.size(), 0);
        for (std::size_t j = 0; j < out.binary_order.size(); ++j)
            comp.presence[j] = comp.presence[j] | vectors[c][j];
        for (int m : clusters[c]) {
            const auto& p = procs[static_cast<std::size_t>(m)];
            comp.instantiations[p.binary_id].insert(p.procedure_id);
        }
    }
    int next = 0;
    for (auto& [label, comp] : grouped) {
        comp.id = next++;
        for (const auto& [bid, pids] : comp.instantiations) out.components_per_binary[bid] += 1;
        out.components.push_back(std::move(comp));
    }
    return out;
}

// Binomial pmf via log-gamma; exact enough for the bound's double precision.
inline double binomial_pmf(int x, int n, double p) {
    if (x < 0 || x > n) return 0.0;
    if (p <= 0.0) return x == 0 ? 1.0 : 0.0;
    if (p >= 1.0) return x == n ? 1.0 : 0.0;
    double log_c = std::lgamma(n + 1.0) - std::lgamma(x + 1.0) - std::lgamma(n - x + 1.0);
    return std::exp(log_c + x * std::log(p) + (n - x) * std::log1p(-p));
}

// Lower bound on the probability that component `target` is detected, under
// independent binomial appearance: sum over x of Bin(x; M, p_i) times the
// product over other components k of (1 - Bin(x; M, p_k)).
inline double detection_probability_lower_bound(int num_binaries,
                                                const std::vector<double>& appearance_probs,
                                                std::size_t target) {
    if (target >= appearance_probs.size()) throw std::invalid_argument("bad target index");
    for (double p : appearance_probs)
        if (p < 0.0 || p > 1.0) throw std::invalid_argument("invalid probability");
    double total = 0.0;
    for (int x = 0; x <= num_binaries; ++x) {
        double term = binomial_pmf(x, num_binaries, appearance_probs[target]);
        for (std::size_t k = 0; k < appearance_probs.size(); ++k) {
            if (k == target) continue;
            term *= 1.0 - binomial_pmf(x, num_binaries, appearance_probs[k]);
        }
        total += term;
    }
    return total;
}

inline nlohmann::ordered_json component_to_json(const Component& c,
                                                const std::vector<std::string>& binary_order) {
    nlohmann::ordered_json j;
    j["component_id"] = c.id;
    nlohmann::ordered_json bins = nlohmann::ordered_json::array();
    for (const auto& [bid, pids] : c.instantiations) bins.push_back(bid);
    j["binaries"] = std::move(bins);
    nlohmann::ordered_json procs = nlohmann::ordered_json::array();
    for (const auto& [bid, pids] : c.instantiations)
        for (const auto& pid : pids) procs.push_back(nlohmann::ordered_json::array({bid, pid}));
    j["procedures"] = std::move(procs);
    j["shared"] = c.shared();
    (void)binary_order;
    return j;
}

}  // namespace binfam
