#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <vector>

#include <binfam/kmeans.hpp>
#include <binfam/louvain.hpp>
#include <binfam/neighbor_join.hpp>

using namespace binfam;

namespace {

// Leaf bipartitions (splits) induced by removing each internal edge; the
// standard topology fingerprint for unrooted trees.
std::set<std::set<int>> splits_of(const Dendrogram& d) {
    std::set<std::set<int>> out;
    for (int i = d.num_items; i < static_cast<int>(d.nodes.size()); ++i) {
        for (int c : d.nodes[static_cast<std::size_t>(i)].children) {
            auto leaves = d.leaves_under(c);
            if (static_cast<int>(leaves.size()) <= 1 ||
                static_cast<int>(leaves.size()) >= d.num_items - 1)
                continue;
            std::set<int> side(leaves.begin(), leaves.end());
            // canonical side: the one containing leaf 0
            if (!side.count(0)) {
                std::set<int> flip;
                for (int l = 0; l < d.num_items; ++l)
                    if (!side.count(l)) flip.insert(l);
                side = flip;
            }
            out.insert(side);
        }
    }
    return out;
}

// Random binary tree over n leaves with positive branch lengths; returns the
// additive leaf-to-leaf metric and the splits of the generating tree.
struct AdditiveCase {
    DistanceMatrix dist;
    std::set<std::set<int>> splits;
};

AdditiveCase random_additive(int n, std::mt19937_64& rng) {
    // Build by sequential leaf insertion into an edge list tree.
    struct Edge {
        int a, b;
        double w;
    };
    std::uniform_real_distribution<double> len(0.5, 4.0);
    std::uniform_real_distribution<double> cut(0.25, 0.75);
    std::vector<Edge> edges;
    int next_internal = n;  // nodes >= n are internal
    edges.push_back({0, 1, len(rng)});
    for (int leaf = 2; leaf < n; ++leaf) {
        // split a random edge with a new internal node, hang the leaf off it
        std::uniform_int_distribution<int> pick(0, static_cast<int>(edges.size()) - 1);
        int idx = pick(rng);
        Edge e = edges[static_cast<std::size_t>(idx)];
        edges.erase(edges.begin() + idx);
        int mid = next_internal++;
        double split = e.w * cut(rng);
        edges.push_back({e.a, mid, split});
        edges.push_back({mid, e.b, e.w - split});
        edges.push_back({mid, leaf, len(rng)});
    }
    // all-pairs shortest paths over the tree
    int total = next_internal;
    std::vector<std::vector<std::pair<int, double>>> adj(static_cast<std::size_t>(total));
    for (const auto& e : edges) {
        adj[static_cast<std::size_t>(e.a)].push_back({e.b, e.w});
        adj[static_cast<std::size_t>(e.b)].push_back({e.a, e.w});
    }
    DistanceMatrix dm(static_cast<std::size_t>(n));
    for (int s = 0; s < n; ++s) {
        std::vector<double> dist(static_cast<std::size_t>(total), -1.0);
        std::vector<int> stack{s};
        dist[static_cast<std::size_t>(s)] = 0.0;
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (auto [v, w] : adj[static_cast<std::size_t>(u)]) {
                if (dist[static_cast<std::size_t>(v)] < 0) {
                    dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + w;
                    stack.push_back(v);
                }
            }
        }
        for (int t = s + 1; t < n; ++t) dm.set(static_cast<std::size_t>(s), static_cast<std::size_t>(t), dist[static_cast<std::size_t>(t)]);
    }
    // splits of the generating tree: component of leaf set when cutting each edge
    AdditiveCase out{dm, {}};
    for (const auto& cut : edges) {
        std::set<int> side;
        std::vector<int> stack{cut.a};
        std::set<int> seen{cut.a};
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            if (u < n) side.insert(u);
            for (auto [v, w] : adj[static_cast<std::size_t>(u)]) {
                if ((u == cut.a && v == cut.b) || (u == cut.b && v == cut.a)) continue;
                if (!seen.count(v)) {
                    seen.insert(v);
                    stack.push_back(v);
                }
            }
        }
        if (static_cast<int>(side.size()) <= 1 || static_cast<int>(side.size()) >= n - 1) continue;
        if (!side.count(0)) {
            std::set<int> flip;
            for (int l = 0; l < n; ++l)
                if (!side.count(l)) flip.insert(l);
            side = flip;
        }
        out.splits.insert(side);
    }
    return out;
}

}  // namespace

TEST_CASE("neighbor join: n = 1 gives a single-leaf dendrogram") {
    DistanceMatrix d(1);
    auto dg = neighbor_join(d);
    CHECK(dg.root == 0);
    CHECK(dg.num_items == 1);
}

TEST_CASE("neighbor join: n = 2 gives a root with two leaves") {
    DistanceMatrix d(2);
    d.set(0, 1, 0.7);
    auto dg = neighbor_join(d);
    CHECK(dg.nodes[static_cast<std::size_t>(dg.root)].children == std::vector<int>{0, 1});
}

TEST_CASE("neighbor join rejects an asymmetric matrix") {
    DistanceMatrix bad(3, {0.0, 1.0, 1.0,  //
                           0.9, 0.0, 1.0,  // 0.9 != 1.0
                           1.0, 1.0, 0.0});
    CHECK_THROWS_AS(neighbor_join(bad), std::invalid_argument);
    DistanceMatrix nonzero_diag(2, {0.0, 1.0, 1.0, 0.5});
    CHECK_THROWS_AS(neighbor_join(nonzero_diag), std::invalid_argument);
}

// Classic four-point additive metric: ((0,1),(2,3)) with known distances.
TEST_CASE("neighbor join recovers the generating quartet") {
    DistanceMatrix d(4);
    // tree: 0-a (1), 1-a (2), a-b (3), 2-b (1.5), 3-b (2.5)
    d.set(0, 1, 3.0);
    d.set(0, 2, 5.5);
    d.set(0, 3, 6.5);
    d.set(1, 2, 6.5);
    d.set(1, 3, 7.5);
    d.set(2, 3, 4.0);
    auto dg = neighbor_join(d);
    auto splits = splits_of(dg);
    // the only non-trivial split of the quartet: {0,1} vs {2,3}
    CHECK(splits.count({0, 1}) == 1);
    // brute-force oracle: of the three quartet topologies, {0,1}|{2,3} is the
    // unique one satisfying the four-point condition for this metric
    double s01 = d.at(0, 1) + d.at(2, 3);  // 7
    double s02 = d.at(0, 2) + d.at(1, 3);  // 13
    double s03 = d.at(0, 3) + d.at(1, 2);  // 13
    CHECK(s01 < s02);
    CHECK(s02 == doctest::Approx(s03));  // four-point condition
}

TEST_CASE("neighbor join is exact on random additive metrics (n <= 8)") {
    std::mt19937_64 rng(4242);
    for (int trial = 0; trial < 60; ++trial) {
        int n = 4 + static_cast<int>(rng() % 5);
        auto c = random_additive(n, rng);
        auto dg = neighbor_join(c.dist);
        CHECK(splits_of(dg) == c.splits);
    }
}

TEST_CASE("neighbor join is deterministic") {
    std::mt19937_64 rng(5);
    auto c = random_additive(7, rng);
    auto a = neighbor_join(c.dist);
    auto b = neighbor_join(c.dist);
    REQUIRE(a.nodes.size() == b.nodes.size());
    for (std::size_t i = 0; i < a.nodes.size(); ++i)
        CHECK(a.nodes[i].children == b.nodes[i].children);
}

// ---- Louvain ----------------------------------------------------------------

namespace {

SimilarityGraph two_cliques_graph() {
    // two 3-cliques {0,1,2} and {3,4,5} joined by one weak edge
    SimilarityGraph g(6);
    for (int a = 0; a < 3; ++a)
        for (int b = a + 1; b < 3; ++b) g.add_edge(a, b, 1.0);
    for (int a = 3; a < 6; ++a)
        for (int b = a + 1; b < 6; ++b) g.add_edge(a, b, 1.0);
    g.add_edge(2, 3, 0.1);
    return g;
}

// Exhaustive best-modularity partition for n = 6 via restricted growth codes.
double best_modularity(const SimilarityGraph& g, std::vector<int>* best_partition = nullptr) {
    const int n = static_cast<int>(g.size());
    std::vector<int> code(static_cast<std::size_t>(n), 0);
    double best = -1.0;
    std::function<void(int, int)> rec = [&](int i, int max_used) {
        if (i == n) {
            double q = modularity(g, code);
            if (q > best) {
                best = q;
                if (best_partition) *best_partition = code;
            }
            return;
        }
        for (int c = 0; c <= max_used + 1 && c < n; ++c) {
            code[static_cast<std::size_t>(i)] = c;
            rec(i + 1, std::max(max_used, c));
        }
    };
    rec(0, -1);
    return best;
}

}  // namespace

TEST_CASE("louvain: two weakly joined 3-cliques split into two communities") {
    auto g = two_cliques_graph();
    auto comm = louvain_communities(g);
    CHECK(comm[0] == comm[1]);
    CHECK(comm[1] == comm[2]);
    CHECK(comm[3] == comm[4]);
    CHECK(comm[4] == comm[5]);
    CHECK(comm[0] != comm[3]);

    std::vector<int> best_partition;
    double best = best_modularity(g, &best_partition);
    CHECK(modularity(g, comm) == doctest::Approx(best));
    CHECK(best_partition[0] == best_partition[2]);
    CHECK(best_partition[0] != best_partition[3]);
}

TEST_CASE("louvain: edgeless graph keeps every item alone") {
    SimilarityGraph g(4);
    auto comm = louvain_communities(g);
    std::set<int> distinct(comm.begin(), comm.end());
    CHECK(distinct.size() == 4);
}

TEST_CASE("louvain: single item is a single community") {
    SimilarityGraph g(1);
    auto comm = louvain_communities(g);
    CHECK(comm == std::vector<int>{0});
    auto dg = louvain_dendrogram(g);
    CHECK(dg.nodes[static_cast<std::size_t>(dg.root)].children == std::vector<int>{0});
}

TEST_CASE("modularity: single community over an edgeless graph is 0") {
    SimilarityGraph g(3);
    CHECK(modularity(g, {0, 0, 0}) == 0.0);
}

TEST_CASE("modularity: perfect split of two disjoint cliques is 1/2") {
    SimilarityGraph g(8);
    for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b) g.add_edge(a, b, 1.0);
    for (int a = 4; a < 8; ++a)
        for (int b = a + 1; b < 8; ++b) g.add_edge(a, b, 1.0);
    CHECK(modularity(g, {0, 0, 0, 0, 1, 1, 1, 1}) == doctest::Approx(0.5));
}

TEST_CASE("modularity stays within [-0.5, 1] on random graphs/partitions") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        int n = 2 + static_cast<int>(rng() % 7);
        SimilarityGraph g(static_cast<std::size_t>(n));
        for (int a = 0; a < n; ++a)
            for (int b = a + 1; b < n; ++b)
                if (rng() % 2) g.add_edge(a, b, 0.1 + static_cast<double>(rng() % 10) / 10.0);
        std::vector<int> part(static_cast<std::size_t>(n));
        for (auto& p : part) p = static_cast<int>(rng() % 3);
        double q = modularity(g, part);
        CHECK(q >= -0.5 - 1e-12);
        CHECK(q <= 1.0 + 1e-12);
    }
}

TEST_CASE("louvain never scores below the singleton partition") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 30; ++trial) {
        int n = 3 + static_cast<int>(rng() % 8);
        SimilarityGraph g(static_cast<std::size_t>(n));
        for (int a = 0; a < n; ++a)
            for (int b = a + 1; b < n; ++b)
                if (rng() % 3) g.add_edge(a, b, 0.05 + static_cast<double>(rng() % 20) / 10.0);
        std::vector<int> singles(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) singles[static_cast<std::size_t>(i)] = i;
        auto comm = louvain_communities(g);
        CHECK(modularity(g, comm) >= modularity(g, singles) - 1e-12);
    }
}

// ---- K-means ------------------------------------------------------------------

namespace {

double wcss(const std::vector<std::vector<double>>& pts, const std::vector<int>& labels) {
    int k = *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<std::vector<double>> centers(static_cast<std::size_t>(k),
                                             std::vector<double>(pts[0].size(), 0.0));
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        counts[static_cast<std::size_t>(labels[i])]++;
        for (std::size_t d = 0; d < pts[0].size(); ++d) centers[static_cast<std::size_t>(labels[i])][d] += pts[i][d];
    }
    for (int c = 0; c < k; ++c)
        for (auto& v : centers[static_cast<std::size_t>(c)]) v /= counts[static_cast<std::size_t>(c)];
    double total = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) total += squared_l2(pts[i], centers[static_cast<std::size_t>(labels[i])]);
    return total;
}

}  // namespace

TEST_CASE("kmeans: K = 1 puts every point in one cluster") {
    std::vector<std::vector<double>> pts = {{0, 0}, {1, 1}, {9, 9}};
    auto labels = kmeans(pts, 1);
    CHECK(labels == std::vector<int>{0, 0, 0});
}

TEST_CASE("kmeans: two well-separated pairs are grouped") {
    std::vector<std::vector<double>> pts = {{0, 0}, {0.1, 0}, {10, 10}, {10.1, 10}};
    auto labels = kmeans(pts, 2);
    CHECK(labels[0] == labels[1]);
    CHECK(labels[2] == labels[3]);
    CHECK(labels[0] != labels[2]);
}

TEST_CASE("kmeans reaches the brute-force optimum on a small fixture") {
    std::vector<std::vector<double>> pts = {{0, 0}, {1, 0}, {0, 1}, {8, 8}, {9, 8}, {8, 9}, {4, 4}};
    auto labels = kmeans(pts, 2);
    // exhaustive best 2-assignment
    double best = std::numeric_limits<double>::infinity();
    int n = static_cast<int>(pts.size());
    for (int mask = 1; mask < (1 << n) - 1; ++mask) {
        std::vector<int> assign(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) assign[static_cast<std::size_t>(i)] = (mask >> i) & 1;
        best = std::min(best, wcss(pts, assign));
    }
    CHECK(wcss(pts, labels) <= best + 1e-9);
}

TEST_CASE("kmeans clamps K above the point count") {
    std::vector<std::vector<double>> pts = {{0, 0}, {5, 5}};
    auto labels = kmeans(pts, 50);
    std::set<int> distinct(labels.begin(), labels.end());
    CHECK(distinct.size() <= 2);
}

TEST_CASE("kmeans is deterministic under a pinned seed") {
    std::mt19937_64 rng(3);
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 40; ++i)
        pts.push_back({static_cast<double>(rng() % 100), static_cast<double>(rng() % 100)});
    CHECK(kmeans(pts, 5, 100, 7) == kmeans(pts, 5, 100, 7));
}
