#pragma once

#include <cstddef>
#include <vector>

namespace binfam {

// Rooted tree over n input items. Nodes [0, num_items) are the leaves, in
// input order; internal nodes follow. The root may have two or more children
// (Neighbor Join roots at its final join; Louvain stacks one level per pass).
struct Dendrogram {
    struct Node {
        std::vector<int> children;  // empty for leaves
    };
    std::vector<Node> nodes;
    int num_items = 0;
    int root = -1;

    bool is_leaf(int i) const { return i < num_items; }

    // Leaves under a node, in traversal order.
    std::vector<int> leaves_under(int node) const {
        std::vector<int> out, stack{node};
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            if (is_leaf(u)) {
                out.push_back(u);
                continue;
            }
            const auto& ch = nodes[u].children;
            for (auto it = ch.rbegin(); it != ch.rend(); ++it) stack.push_back(*it);
        }
        return out;
    }
};

}  // namespace binfam
