#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace binfam {

// Flat cluster assignment: item id -> cluster id.
using ClusteringLabels = std::map<std::string, std::string>;

namespace detail {

inline void require_same_items(const ClusteringLabels& a, const ClusteringLabels& b) {
    if (a.size() != b.size()) throw std::invalid_argument("clusterings cover different item sets");
    for (const auto& [k, v] : a) {
        (void)v;
        if (!b.count(k)) throw std::invalid_argument("clusterings cover different item sets");
    }
}

struct PairCounts {
    double tp = 0, fp = 0, fn = 0, tn = 0;
};

inline PairCounts count_pairs(const ClusteringLabels& pred, const ClusteringLabels& truth) {
    require_same_items(pred, truth);
    PairCounts c;
    for (auto i = pred.begin(); i != pred.end(); ++i) {
        auto j = i;
        for (++j; j != pred.end(); ++j) {
            bool same_pred = i->second == j->second;
            bool same_truth = truth.at(i->first) == truth.at(j->first);
            if (same_pred && same_truth) c.tp += 1;
            else if (same_pred) c.fp += 1;
            else if (same_truth) c.fn += 1;
            else c.tn += 1;
        }
    }
    return c;
}

// Contingency table: counts per (pred cluster, truth cluster).
inline std::map<std::pair<std::string, std::string>, double> contingency(
    const ClusteringLabels& pred, const ClusteringLabels& truth) {
    std::map<std::pair<std::string, std::string>, double> table;
    for (const auto& [item, p] : pred) table[{p, truth.at(item)}] += 1.0;
    return table;
}

}  // namespace detail

// Pair-counting Jaccard: same-family pairs correctly grouped over pairs
// grouped by either side.
inline double jaccard_index_clusterings(const ClusteringLabels& pred,
                                        const ClusteringLabels& truth) {
    auto c = detail::count_pairs(pred, truth);
    double denom = c.tp + c.fp + c.fn;
    if (denom == 0.0) return 1.0;  // no grouped pairs anywhere: vacuously perfect
    return c.tp / denom;
}

// Fraction of items belonging to the dominant truth family within their
// assigned cluster.
inline double purity(const ClusteringLabels& pred, const ClusteringLabels& truth) {
    detail::require_same_items(pred, truth);
    if (pred.empty()) throw std::invalid_argument("purity of empty labeling");
    std::map<std::string, std::map<std::string, int>> per_cluster;
    for (const auto& [item, p] : pred) per_cluster[p][truth.at(item)] += 1;
    double dominant = 0.0;
    for (const auto& [c, hist] : per_cluster) {
        int best = 0;
        for (const auto& [t, n] : hist) best = std::max(best, n);
        dominant += best;
    }
    return dominant / static_cast<double>(pred.size());
}

inline double inverse_purity(const ClusteringLabels& pred, const ClusteringLabels& truth) {
    return purity(truth, pred);
}

// Adjusted Rand Index via the standard contingency closed form. Degenerate
// tables (zero adjustment denominator) score 1: they only arise when both
// partitions are trivially identical in pair structure.
inline double adjusted_rand_index(const ClusteringLabels& pred, const ClusteringLabels& truth) {
    detail::require_same_items(pred, truth);
    const double n = static_cast<double>(pred.size());
    auto choose2 = [](double x) { return x * (x - 1.0) / 2.0; };
    std::map<std::string, double> pred_sizes, truth_sizes;
    for (const auto& [item, p] : pred) {
        pred_sizes[p] += 1.0;
        truth_sizes[truth.at(item)] += 1.0;
    }
    double sum_cells = 0.0;
    for (const auto& [cell, cnt] : detail::contingency(pred, truth)) sum_cells += choose2(cnt);
    double sum_a = 0.0, sum_b = 0.0;
    for (const auto& [c, s] : pred_sizes) sum_a += choose2(s);
    for (const auto& [c, s] : truth_sizes) sum_b += choose2(s);
    double total = choose2(n);
    double expected = sum_a * sum_b / total;
    double max_index = 0.5 * (sum_a + sum_b);
    double denom = max_index - expected;
    if (denom == 0.0) return 1.0;
    return (sum_cells - expected) / denom;
}

struct PredictionMetrics {
    double accuracy = 0, precision = 0, recall = 0, f_measure = 0;
};

// Standard confusion-matrix metrics; all 0/0 cases resolve to 0.
inline PredictionMetrics precision_recall_f(double tp, double fp, double tn, double fn) {
    PredictionMetrics m;
    double total = tp + fp + tn + fn;
    m.accuracy = total > 0 ? (tp + tn) / total : 0.0;
    m.precision = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
    m.recall = (tp + fn) > 0 ? tp / (tp + fn) : 0.0;
    m.f_measure = (m.precision + m.recall) > 0
                      ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                      : 0.0;
    return m;
}

struct SpeedupPrediction {
    bool single_shot_faster = false;  // incremental beats one full clustering
    bool batched_faster = false;      // incremental beats it across S batches
};

// Analytic complexity comparison for the incremental algorithm, for a
// hierarchy of branching factor b and depth H_d, clusterer cost O(n^p), and
// S incremental batches:
//   (1)  d_r (p-1) + 1 < H_d (p-1)
//   (2)  log((S+1)/2) / log(b) + d_r (p-1) + 1 < H_d (p-1)
inline SpeedupPrediction incremental_speedup_predicate(double b, double h_d, double d_r, double p,
                                                       double s) {
    if (b < 2.0) throw std::invalid_argument("branching factor must be >= 2");
    if (p <= 1.0) throw std::invalid_argument("clusterer exponent must be > 1");
    if (d_r < 2.0 || d_r > h_d) throw std::invalid_argument("need 2 <= d_r <= H_d");
    SpeedupPrediction out;
    double lhs1 = d_r * (p - 1.0) + 1.0;
    double rhs = h_d * (p - 1.0);
    out.single_shot_faster = lhs1 < rhs;
    out.batched_faster = std::log((s + 1.0) / 2.0) / std::log(b) + lhs1 < rhs;
    return out;
}

inline nlohmann::ordered_json clustering_metrics_json(const ClusteringLabels& pred,
                                                      const ClusteringLabels& truth) {
    nlohmann::ordered_json j;
    j["jaccard_index"] = jaccard_index_clusterings(pred, truth);
    j["purity"] = purity(pred, truth);
    j["inverse_purity"] = inverse_purity(pred, truth);
    j["adjusted_rand_index"] = adjusted_rand_index(pred, truth);
    return j;
}

}  // namespace binfam
