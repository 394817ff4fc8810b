#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>
#include <random>
#include <set>

#include <binfam/similarity.hpp>

using namespace binfam;

namespace {

FeatureBag bag(std::initializer_list<std::pair<std::string, double>> items) {
    FeatureBag::Map m;
    for (const auto& [k, v] : items) m[k] = v;
    return FeatureBag(std::move(m));
}

// Straight-line oracle: iterate the token union explicitly.
double wj_oracle(const FeatureBag& a, const FeatureBag& b) {
    std::set<std::string> tokens;
    for (const auto& [k, v] : a.entries()) tokens.insert(k);
    for (const auto& [k, v] : b.entries()) tokens.insert(k);
    if (tokens.empty()) return 0.0;
    double mins = 0, maxs = 0;
    for (const auto& t : tokens) {
        mins += std::min(a.weight(t), b.weight(t));
        maxs += std::max(a.weight(t), b.weight(t));
    }
    return 1.0 - mins / maxs;
}

BinaryFeatures strings_only(std::initializer_list<std::pair<std::string, double>> items,
                            std::int64_t size = 1) {
    BinaryFeatures f;
    f.string_bag = bag(items);
    f.size = size;
    return f;
}

std::mt19937_64 g_rng(99);

FeatureBag random_bag(int vocab, int max_items) {
    std::uniform_int_distribution<int> n(0, max_items);
    std::uniform_int_distribution<int> tok(0, vocab - 1);
    std::uniform_real_distribution<double> w(0.05, 3.0);
    FeatureBag::Map m;
    int count = n(g_rng);
    for (int i = 0; i < count; ++i) m["t" + std::to_string(tok(g_rng))] = w(g_rng);
    return FeatureBag(std::move(m));
}

BinaryFeatures random_features() {
    BinaryFeatures f;
    for (int k = 0; k < kNumNgramSeeds; ++k) f.ngram_bags[static_cast<std::size_t>(k)] = random_bag(40, 25);
    f.string_bag = random_bag(40, 25);
    f.import_bag = random_bag(15, 8);
    f.size = 1;
    return f;
}

}  // namespace

TEST_CASE("weighted jaccard: identical non-empty bags -> 0") {
    auto a = bag({{"x", 2.0}, {"y", 0.5}});
    CHECK(weighted_jaccard_distance(a, a) == doctest::Approx(0.0));
}

TEST_CASE("weighted jaccard: disjoint bags -> 1") {
    CHECK(weighted_jaccard_distance(bag({{"x", 1.0}}), bag({{"y", 2.0}})) == doctest::Approx(1.0));
}

TEST_CASE("weighted jaccard: worked example 1 - 1/4") {
    auto a = bag({{"a", 2.0}, {"b", 1.0}});
    auto b = bag({{"a", 1.0}, {"c", 1.0}});
    CHECK(weighted_jaccard_distance(a, b) == doctest::Approx(0.75));
    CHECK(weighted_jaccard_distance(a, b) == doctest::Approx(wj_oracle(a, b)));
}

TEST_CASE("weighted jaccard: both empty -> 0 by convention") {
    CHECK(weighted_jaccard_distance(FeatureBag{}, FeatureBag{}) == 0.0);
}

TEST_CASE("weighted jaccard: symmetric, bounded, zero iff equal; matches oracle") {
    for (int i = 0; i < 300; ++i) {
        auto a = random_bag(20, 12), b = random_bag(20, 12);
        double d1 = weighted_jaccard_distance(a, b);
        double d2 = weighted_jaccard_distance(b, a);
        CHECK(d1 == doctest::Approx(d2));
        CHECK(d1 >= 0.0);
        CHECK(d1 <= 1.0);
        CHECK(d1 == doctest::Approx(wj_oracle(a, b)));
        if (!a.empty() || !b.empty()) {
            if (a == b) CHECK(d1 == doctest::Approx(0.0));
            else CHECK(d1 > 0.0);
        }
    }
}

TEST_CASE("weighted jaccard with unit weights equals plain jaccard") {
    auto a = bag({{"a", 1.0}, {"b", 1.0}, {"c", 1.0}});
    auto b = bag({{"b", 1.0}, {"c", 1.0}, {"d", 1.0}});
    // |intersection| = 2, |union| = 4
    CHECK(weighted_jaccard_distance(a, b) == doctest::Approx(1.0 - 2.0 / 4.0));
}

TEST_CASE("channel weights must sum to one") {
    ChannelWeights bad{0.5, 0.5, 0.5};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    ChannelWeights ok;
    CHECK_NOTHROW(ok.validate());
}

TEST_CASE("combined distance: x == y -> 0, disjoint channels -> 1") {
    auto x = random_features();
    CHECK(combined_distance(x, x) == doctest::Approx(0.0));

    BinaryFeatures a, b;
    for (int k = 0; k < kNumNgramSeeds; ++k) {
        a.ngram_bags[static_cast<std::size_t>(k)] = bag({{"na", 1.0}});
        b.ngram_bags[static_cast<std::size_t>(k)] = bag({{"nb", 1.0}});
    }
    a.string_bag = bag({{"sa", 1.0}});
    b.string_bag = bag({{"sb", 1.0}});
    a.import_bag = bag({{"ia", 1.0}});
    b.import_bag = bag({{"ib", 1.0}});
    CHECK(combined_distance(a, b) == doctest::Approx(1.0));
}

TEST_CASE("combined distance: channel-by-channel scalar recomputation") {
    BinaryFeatures x, y;
    x.ngram_bags[0] = bag({{"n1", 1.0}, {"n2", 1.0}});
    y.ngram_bags[0] = bag({{"n1", 1.0}});
    x.ngram_bags[1] = bag({{"m1", 1.0}});
    y.ngram_bags[1] = bag({{"m2", 1.0}});
    // seeds 2,3 empty on both sides -> distance 0 contribution
    x.string_bag = bag({{"s1", 2.0}, {"s2", 1.0}});
    y.string_bag = bag({{"s1", 1.0}, {"s3", 1.0}});
    x.import_bag = bag({{"i", 1.0}});
    y.import_bag = bag({{"i", 1.0}});
    double d_ngram = (0.5 + 1.0 + 0.0 + 0.0) / 4.0;
    double d_string = 0.75;
    double d_import = 0.0;
    double expect = 0.5 * d_ngram + 0.3 * d_string + 0.2 * d_import;
    CHECK(combined_distance(x, y) == doctest::Approx(expect));
}

TEST_CASE("theta intersection keeps only common tokens at weight 1") {
    auto a = strings_only({{"a", 1.0}, {"b", 1.0}});
    auto b = strings_only({{"a", 1.0}, {"c", 1.0}});
    auto out = theta(ThetaKind::Intersection, {&a, &b});
    CHECK(out.string_bag.size() == 1);
    CHECK(out.string_bag.weight("a") == 1.0);
    CHECK(out.size == 2);
}

TEST_CASE("theta weighted average: worked example") {
    auto f1 = strings_only({{"a", 1.0}}, 1);
    auto f2 = strings_only({{"a", 0.5}, {"b", 1.0}}, 3);
    auto out = theta(ThetaKind::WeightedAverage, {&f1, &f2});
    CHECK(out.string_bag.weight("a") == doctest::Approx(0.625));
    CHECK(out.string_bag.weight("b") == doctest::Approx(0.75));
    CHECK(out.size == 4);
}

TEST_CASE("theta on a single child is the identity") {
    auto f = random_features();
    for (auto kind : {ThetaKind::Intersection, ThetaKind::WeightedAverage}) {
        auto out = theta(kind, {&f});
        if (kind == ThetaKind::WeightedAverage) CHECK(out == f);
        CHECK(out.size == f.size);
    }
}

TEST_CASE("theta rejects an empty child list") {
    CHECK_THROWS_AS(theta(ThetaKind::Intersection, {}), std::invalid_argument);
}

namespace {

struct RandomTree {
    struct Node {
        std::vector<int> children;  // indices; empty = leaf
        BinaryFeatures features;
    };
    std::vector<Node> nodes;
    int root;
};

// Random tree with every leaf carrying random features, depth <= max_depth.
RandomTree make_tree(int max_depth, int max_branch, int& leaf_budget) {
    RandomTree t;
    std::function<int(int)> build = [&](int depth) {
        int id = static_cast<int>(t.nodes.size());
        t.nodes.push_back({});
        std::uniform_int_distribution<int> branch(2, max_branch);
        if (depth >= max_depth || leaf_budget <= 1 ||
            (depth > 0 && std::uniform_int_distribution<int>(0, 3)(g_rng) == 0)) {
            --leaf_budget;
            t.nodes[static_cast<std::size_t>(id)].features = random_features();
            return id;
        }
        int b = std::min(branch(g_rng), leaf_budget);
        for (int i = 0; i < b; ++i) {
            int c = build(depth + 1);
            t.nodes[static_cast<std::size_t>(id)].children.push_back(c);
        }
        return id;
    };
    leaf_budget = std::max(leaf_budget, 2);
    t.root = build(0);
    return t;
}

// Frontier of the root at depth n: nodes at that depth plus shallower leaves.
void frontier_at(const RandomTree& t, int node, int depth, int n, std::vector<int>& out) {
    const auto& nd = t.nodes[static_cast<std::size_t>(node)];
    if (depth == n || nd.children.empty()) {
        out.push_back(node);
        return;
    }
    for (int c : nd.children) frontier_at(t, c, depth + 1, n, out);
}

void fill_internal(RandomTree& t, int node, ThetaKind kind) {
    auto& nd = t.nodes[static_cast<std::size_t>(node)];
    if (nd.children.empty()) return;
    for (int c : nd.children) fill_internal(t, c, kind);
    std::vector<const BinaryFeatures*> ch;
    for (int c : nd.children) ch.push_back(&t.nodes[static_cast<std::size_t>(c)].features);
    nd.features = theta(kind, ch);
}

void check_bags_close(const FeatureBag& a, const FeatureBag& b, double tol) {
    REQUIRE(a.size() == b.size());
    auto ia = a.entries().begin();
    auto ib = b.entries().begin();
    for (; ia != a.entries().end(); ++ia, ++ib) {
        REQUIRE(ia->first == ib->first);
        CHECK(std::abs(ia->second - ib->second) <= tol);
    }
}

void check_features_close(const BinaryFeatures& a, const BinaryFeatures& b, double tol) {
    CHECK(a.size == b.size);
    for (int k = 0; k < kNumNgramSeeds; ++k)
        check_bags_close(a.ngram_bags[static_cast<std::size_t>(k)], b.ngram_bags[static_cast<std::size_t>(k)], tol);
    check_bags_close(a.string_bag, b.string_bag, tol);
    check_bags_close(a.import_bag, b.import_bag, tol);
}

}  // namespace

// Transitivity: theta over the frontier at any depth reproduces the root
// features. Exact for Intersection, 1e-9 per weight for WeightedAverage.
TEST_CASE("theta is transitive on random trees") {
    for (int trial = 0; trial < 40; ++trial) {
        int budget = 2 + static_cast<int>(g_rng() % 199);
        RandomTree t = make_tree(5, 4, budget);
        for (auto kind : {ThetaKind::Intersection, ThetaKind::WeightedAverage}) {
            RandomTree copy = t;
            fill_internal(copy, copy.root, kind);
            for (int depth = 1; depth <= 5; ++depth) {
                std::vector<int> frontier;
                frontier_at(copy, copy.root, 0, depth, frontier);
                if (frontier.size() == 1 && frontier[0] == copy.root) continue;
                std::vector<const BinaryFeatures*> feats;
                for (int f : frontier) feats.push_back(&copy.nodes[static_cast<std::size_t>(f)].features);
                auto agg = theta(kind, feats);
                if (kind == ThetaKind::Intersection) {
                    CHECK(agg == copy.nodes[static_cast<std::size_t>(copy.root)].features);
                } else {
                    check_features_close(agg, copy.nodes[static_cast<std::size_t>(copy.root)].features, 1e-9);
                }
            }
        }
    }
}
