#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <binfam/dendrogram.hpp>

namespace binfam {

// Undirected weighted graph over items 0..n-1. Self-loops are allowed (they
// appear during aggregation).
struct SimilarityGraph {
    explicit SimilarityGraph(std::size_t n) : adjacency(n) {}
    std::vector<std::vector<std::pair<int, double>>> adjacency;

    std::size_t size() const { return adjacency.size(); }
    void add_edge(int u, int v, double w) {
        if (w < 0.0) throw std::invalid_argument("negative edge weight");
        if (u == v) {
            adjacency[u].emplace_back(u, w);
            return;
        }
        adjacency[u].emplace_back(v, w);
        adjacency[v].emplace_back(u, w);
    }
    double total_weight() const {  // sum over undirected edges, self-loops once
        double s = 0.0;
        for (std::size_t u = 0; u < adjacency.size(); ++u)
            for (const auto& [v, w] : adjacency[u])
                if (static_cast<int>(u) <= v) s += w;
        return s;
    }
};

// Weighted modularity Q of a partition (community id per item).
inline double modularity(const SimilarityGraph& g, const std::vector<int>& community) {
    const double m = g.total_weight();
    if (m <= 0.0) return 0.0;
    std::map<int, double> internal;  // intra-community weight (undirected, loops once)
    std::map<int, double> degree;    // sum of incident weights (loops count twice)
    for (std::size_t u = 0; u < g.size(); ++u) {
        for (const auto& [v, w] : g.adjacency[u]) {
            degree[community[u]] += (static_cast<int>(u) == v) ? 2.0 * w : w;
            if (community[u] == community[v] && static_cast<int>(u) <= v) internal[community[u]] += w;
        }
    }
    double q = 0.0;
    for (const auto& [c, deg] : degree) {
        double in = internal.count(c) ? internal.at(c) : 0.0;
        q += in / m - (deg / (2.0 * m)) * (deg / (2.0 * m));
    }
    return q;
}

namespace detail {

// One local-move pass; returns the partition (renumbered to 0..k-1 in order
// of first appearance) or an empty vector when nothing moved.
inline std::vector<int> louvain_one_pass(const SimilarityGraph& g) {
    const std::size_t n = g.size();
    const double two_m = 2.0 * g.total_weight();
    std::vector<int> comm(n);
    std::iota(comm.begin(), comm.end(), 0);
    if (two_m <= 0.0) return {};  // edgeless: all singletons, nothing to gain

    std::vector<double> k_i(n, 0.0);  // weighted degree (loops twice)
    for (std::size_t u = 0; u < n; ++u)
        for (const auto& [v, w] : g.adjacency[u]) k_i[u] += (static_cast<int>(u) == v) ? 2.0 * w : w;
    std::vector<double> comm_tot(k_i);  // sum of degrees per community

    bool any_move_ever = false;
    bool moved = true;
    int sweeps = 0;
    while (moved && sweeps++ < 128) {
        moved = false;
        for (std::size_t u = 0; u < n; ++u) {
            int cu = comm[u];
            // Weight from u to each neighboring community (self-loops excluded).
            std::map<int, double> links;
            for (const auto& [v, w] : g.adjacency[u])
                if (v != static_cast<int>(u)) links[comm[v]] += w;
            comm_tot[cu] -= k_i[u];
            double base = links.count(cu) ? links[cu] : 0.0;
            double base_gain = base - comm_tot[cu] * k_i[u] / two_m;
            int best_c = cu;
            double best_gain = base_gain;
            for (const auto& [c, w_uc] : links) {
                if (c == cu) continue;
                double gain = w_uc - comm_tot[c] * k_i[u] / two_m;
                if (gain > best_gain + 1e-12 || (gain > best_gain - 1e-12 && c < best_c)) {
                    if (gain > best_gain + 1e-12) {
                        best_gain = gain;
                        best_c = c;
                    } else if (c < best_c && std::abs(gain - best_gain) <= 1e-12) {
                        best_c = c;
                    }
                }
            }
            comm[u] = best_c;
            comm_tot[best_c] += k_i[u];
            if (best_c != cu) {
                moved = true;
                any_move_ever = true;
            }
        }
    }
    if (!any_move_ever) return {};
    // Renumber communities by first appearance.
    std::map<int, int> renum;
    std::vector<int> out(n);
    for (std::size_t u = 0; u < n; ++u) {
        auto [it, fresh] = renum.emplace(comm[u], static_cast<int>(renum.size()));
        out[u] = it->second;
    }
    return out;
}

inline SimilarityGraph aggregate(const SimilarityGraph& g, const std::vector<int>& comm,
                                 int num_comm) {
    SimilarityGraph out(static_cast<std::size_t>(num_comm));
    std::map<std::pair<int, int>, double> agg;
    for (std::size_t u = 0; u < g.size(); ++u) {
        for (const auto& [v, w] : g.adjacency[u]) {
            if (static_cast<int>(u) > v) continue;
            int a = comm[u], b = comm[v];
            if (a > b) std::swap(a, b);
            agg[{a, b}] += w;
        }
    }
    for (const auto& [e, w] : agg) out.add_edge(e.first, e.second, w);
    return out;
}

}  // namespace detail

// Full Louvain: repeated local moves + aggregation until the pass yields no
// modularity gain. Returns one partition of the original items per pass.
inline std::vector<std::vector<int>> louvain_levels(const SimilarityGraph& g) {
    std::vector<std::vector<int>> levels;
    SimilarityGraph cur = g;
    std::vector<int> item_to_cur(g.size());
    std::iota(item_to_cur.begin(), item_to_cur.end(), 0);
    double prev_q = modularity(g, item_to_cur);
    while (true) {
        std::vector<int> comm = detail::louvain_one_pass(cur);
        if (comm.empty()) break;
        int num_comm = *std::max_element(comm.begin(), comm.end()) + 1;
        std::vector<int> level(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) level[i] = comm[item_to_cur[i]];
        double q = modularity(g, level);
        if (q <= prev_q + 1e-9) break;
        prev_q = q;
        levels.push_back(level);
        item_to_cur = level;
        cur = detail::aggregate(cur, comm, num_comm);
        if (static_cast<std::size_t>(num_comm) == comm.size()) break;
    }
    return levels;
}

// Final flat partition of the items (community id per item).
inline std::vector<int> louvain_communities(const SimilarityGraph& g) {
    auto levels = louvain_levels(g);
    if (levels.empty()) {
        std::vector<int> singleton(g.size());
        std::iota(singleton.begin(), singleton.end(), 0);
        return singleton;
    }
    return levels.back();
}

// Dendrogram view: one internal layer per pass, topped by a single root.
inline Dendrogram louvain_dendrogram(const SimilarityGraph& g) {
    Dendrogram dg;
    dg.num_items = static_cast<int>(g.size());
    dg.nodes.resize(g.size());
    std::vector<int> current(g.size());  // dendrogram node per current group
    std::iota(current.begin(), current.end(), 0);

    auto levels = louvain_levels(g);
    std::vector<int> prev_assign(g.size());
    std::iota(prev_assign.begin(), prev_assign.end(), 0);
    for (const auto& level : levels) {
        // Group ids of the previous layer by this level's community.
        std::map<int, std::vector<int>> groups;  // community -> prev group ids
        std::map<int, int> seen_prev;
        for (std::size_t i = 0; i < level.size(); ++i) {
            int pg = prev_assign[i];
            if (seen_prev.emplace(pg, level[i]).second) groups[level[i]].push_back(pg);
        }
        std::vector<int> next(groups.size());
        for (const auto& [c, members] : groups) {
            std::vector<int> children;
            children.reserve(members.size());
            for (int m : members) children.push_back(current[m]);
            dg.nodes.push_back({children});
            next[c] = static_cast<int>(dg.nodes.size()) - 1;
        }
        current = next;
        prev_assign = level;
    }
    if (current.size() == 1) {
        dg.root = current[0];
        if (dg.is_leaf(dg.root)) {  // single item input
            dg.nodes.push_back({{dg.root}});
            dg.root = static_cast<int>(dg.nodes.size()) - 1;
        }
    } else {
        std::vector<int> top = current;
        dg.nodes.push_back({top});
        dg.root = static_cast<int>(dg.nodes.size()) - 1;
    }
    return dg;
}

}  // namespace binfam
