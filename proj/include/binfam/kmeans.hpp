#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace binfam {

inline double squared_l2(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

// Lloyd iterations from k-means++ seeding under a pinned RNG. Empty clusters
// are dropped, so the effective K may shrink; labels come back contiguous.
inline std::vector<int> kmeans(const std::vector<std::vector<double>>& points, int k,
                               int max_iter = 100, std::uint64_t seed = 42) {
    if (points.empty()) throw std::invalid_argument("kmeans on empty point set");
    if (k < 1) throw std::invalid_argument("kmeans needs K >= 1");
    const int n = static_cast<int>(points.size());
    k = std::min(k, n);

    std::mt19937_64 rng(seed);
    std::vector<std::vector<double>> centers;
    centers.reserve(static_cast<std::size_t>(k));
    {
        std::uniform_int_distribution<int> first(0, n - 1);
        centers.push_back(points[static_cast<std::size_t>(first(rng))]);
        std::vector<double> d2(points.size());
        while (static_cast<int>(centers.size()) < k) {
            double total = 0.0;
            for (int i = 0; i < n; ++i) {
                double best = std::numeric_limits<double>::infinity();
                for (const auto& c : centers) best = std::min(best, squared_l2(points[i], c));
                d2[i] = best;
                total += best;
            }
            if (total <= 0.0) break;  // fewer distinct points than K
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng), acc = 0.0;
            int pick = n - 1;
            for (int i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
            centers.push_back(points[static_cast<std::size_t>(pick)]);
        }
    }

    std::vector<int> label(points.size(), 0);
    for (int iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int bc = 0;
            for (std::size_t c = 0; c < centers.size(); ++c) {
                double d = squared_l2(points[i], centers[c]);
                if (d < best) {
                    best = d;
                    bc = static_cast<int>(c);
                }
            }
            if (label[i] != bc) {
                label[i] = bc;
                changed = true;
            }
        }
        std::vector<std::vector<double>> sums(centers.size(),
                                              std::vector<double>(points[0].size(), 0.0));
        std::vector<int> counts(centers.size(), 0);
        for (int i = 0; i < n; ++i) {
            counts[label[i]]++;
            for (std::size_t d = 0; d < points[0].size(); ++d)
                sums[label[i]][d] += points[i][d];
        }
        for (std::size_t c = 0; c < centers.size(); ++c) {
            if (counts[c] == 0) continue;
            for (std::size_t d = 0; d < points[0].size(); ++d)
                centers[c][d] = sums[c][d] / counts[c];
        }
        if (!changed && iter > 0) break;
    }

    // Drop empty clusters, keep labels contiguous in order of first use.
    std::vector<int> renum(centers.size(), -1);
    int next = 0;
    for (int i = 0; i < n; ++i) {
        if (renum[label[i]] < 0) renum[label[i]] = next++;
        label[i] = renum[label[i]];
    }
    return label;
}

}  // namespace binfam
