#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include <binfam/dendrogram.hpp>
#include <binfam/distance_matrix.hpp>

namespace binfam {

// Saitou-Nei neighbor joining with midpoint rooting.
//
// Agglomeration picks the minimum-Q pair until two nodes remain (at three
// nodes Q is constant across pairs, so the closest pair joins). The joins
// define an unrooted tree with estimated branch lengths; the returned
// dendrogram is that tree rooted at the midpoint of its longest leaf-to-leaf
// path. Rooting at the last join instead places the root inside whichever
// cluster happens to host the spine and makes it paraphyletic, which starves
// the flattening step; the midpoint lands on the long inter-cluster edge.
// Exact on additive metrics. Ties break toward the lexicographically
// smallest node-id pair, so the output is deterministic.
inline Dendrogram neighbor_join(const DistanceMatrix& dist) {
    dist.validate();
    const std::size_t n = dist.size();
    if (n == 0) throw std::invalid_argument("neighbor_join on zero items");

    Dendrogram dg;
    dg.num_items = static_cast<int>(n);
    dg.nodes.resize(n);
    if (n == 1) {
        dg.root = 0;
        return dg;
    }
    if (n == 2) {
        dg.nodes.push_back({{0, 1}});
        dg.root = 2;
        return dg;
    }

    // Working matrix over active rows; row k corresponds to tree node
    // active[k]. Join nodes are appended after the n leaves.
    std::size_t r = n;
    std::vector<double> d(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) d[i * n + j] = dist.at(i, j);
    std::vector<int> active(n);
    for (std::size_t i = 0; i < n; ++i) active[i] = static_cast<int>(i);
    std::vector<double> rowsum(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) rowsum[i] += d[i * n + j];
    auto cell = [&](std::size_t i, std::size_t j) -> double& { return d[i * n + j]; };

    struct TreeEdge {
        int a, b;
        double w;
    };
    std::vector<TreeEdge> edges;
    edges.reserve(2 * n);
    int next_node = static_cast<int>(n);
    std::vector<Dendrogram::Node> joins;

    while (r > 2) {
        double best_q = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 1;
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = i + 1; j < r; ++j) {
                double q = r > 3 ? (static_cast<double>(r) - 2.0) * cell(i, j) - rowsum[i] -
                                       rowsum[j]
                                 : cell(i, j);
                bool better = q < best_q - 1e-15;
                bool tie = std::abs(q - best_q) <= 1e-15;
                if (better || (tie && std::minmax(active[i], active[j]) <
                                          std::minmax(active[bi], active[bj]))) {
                    best_q = q;
                    bi = i;
                    bj = j;
                }
            }
        }
        double dij = cell(bi, bj);
        double dpos = std::max(0.0, dij);
        double li = 0.5 * dij + (rowsum[bi] - rowsum[bj]) / (2.0 * (static_cast<double>(r) - 2.0));
        li = std::clamp(li, 0.0, dpos);
        double lj = dpos - li;
        int u = next_node++;
        edges.push_back({u, active[bi], std::max(0.0, li)});
        edges.push_back({u, active[bj], std::max(0.0, lj)});
        joins.push_back({});  // children assigned after rooting

        double new_rowsum = 0.0;
        for (std::size_t k = 0; k < r; ++k) {
            if (k == bi || k == bj) continue;
            double duk = 0.5 * (cell(bi, k) + cell(bj, k) - dij);
            rowsum[k] += duk - cell(bi, k) - cell(bj, k);
            cell(bi, k) = duk;
            cell(k, bi) = duk;
            new_rowsum += duk;
        }
        active[bi] = u;
        rowsum[bi] = new_rowsum;
        cell(bi, bi) = 0.0;
        std::size_t last = r - 1;
        if (bj != last) {
            for (std::size_t k = 0; k < r; ++k) {
                cell(bj, k) = cell(last, k);
                cell(k, bj) = cell(k, last);
            }
            cell(bj, bj) = 0.0;
            active[bj] = active[last];
            rowsum[bj] = rowsum[last];
        }
        --r;
    }
    edges.push_back({active[0], active[1], std::max(0.0, cell(0, 1))});

    // ---- midpoint rooting over the unrooted tree -------------------------
    const int total_nodes = next_node;
    std::vector<std::vector<std::pair<int, double>>> adj(static_cast<std::size_t>(total_nodes));
    for (const auto& e : edges) {
        adj[static_cast<std::size_t>(e.a)].push_back({e.b, e.w});
        adj[static_cast<std::size_t>(e.b)].push_back({e.a, e.w});
    }
    auto farthest_leaf = [&](int src, std::vector<int>* parent_out) {
        std::vector<double> depth(static_cast<std::size_t>(total_nodes), -1.0);
        std::vector<int> parent(static_cast<std::size_t>(total_nodes), -1);
        std::vector<int> stack{src};
        depth[static_cast<std::size_t>(src)] = 0.0;
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (auto [v, w] : adj[static_cast<std::size_t>(u)]) {
                if (depth[static_cast<std::size_t>(v)] < 0) {
                    depth[static_cast<std::size_t>(v)] = depth[static_cast<std::size_t>(u)] + w;
                    parent[static_cast<std::size_t>(v)] = u;
                    stack.push_back(v);
                }
            }
        }
        int best = src;
        for (int leaf = 0; leaf < static_cast<int>(n); ++leaf)
            if (depth[static_cast<std::size_t>(leaf)] >
                depth[static_cast<std::size_t>(best)] + 1e-15)
                best = leaf;
        if (parent_out) *parent_out = parent;
        return std::pair<int, std::vector<double>>(best, depth);
    };
    auto [end_a, depth_a] = farthest_leaf(0, nullptr);
    std::vector<int> parent;
    auto [end_b, depth_b] = farthest_leaf(end_a, &parent);
    // Walk the path end_b -> end_a, find the edge containing the midpoint.
    std::vector<int> path;
    for (int v = end_b; v != -1; v = parent[static_cast<std::size_t>(v)]) path.push_back(v);
    double half = depth_b[static_cast<std::size_t>(end_b)] / 2.0;
    int ra, rb;
    if (path.size() < 2) {
        // All leaf-to-leaf distances are zero; root at the final join edge.
        ra = edges.back().a;
        rb = edges.back().b;
    } else {
        ra = path[0];
        rb = path[1];
        double walked = 0.0;
        for (std::size_t i = 0; i + 1 < path.size(); ++i) {
            double w = 0.0;
            for (auto [v, ww] : adj[static_cast<std::size_t>(path[i])])
                if (v == path[i + 1]) {
                    w = ww;
                    break;
                }
            if (walked + w >= half || i + 2 == path.size()) {
                ra = path[i];
                rb = path[i + 1];
                break;
            }
            walked += w;
        }
    }

    // Orient away from a fresh root above edge (ra, rb).
    for (auto& j : joins) j.children.clear();
    dg.nodes.resize(n);
    for (const auto& j : joins) dg.nodes.push_back(j);
    std::function<void(int, int)> orient = [&](int node, int from) {
        if (node < static_cast<int>(n)) return;  // leaf
        auto& children = dg.nodes[static_cast<std::size_t>(node)].children;
        for (auto [v, w] : adj[static_cast<std::size_t>(node)]) {
            if (v == from) continue;
            children.push_back(v);
            orient(v, node);
        }
    };
    orient(ra, rb);
    orient(rb, ra);
    dg.nodes.push_back({{ra, rb}});
    dg.root = static_cast<int>(dg.nodes.size()) - 1;
    return dg;
}

}  // namespace binfam
