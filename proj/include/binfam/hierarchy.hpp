#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include <binfam/dendrogram.hpp>
#include <binfam/distance_matrix.hpp>
#include <binfam/feature_bag.hpp>
#include <binfam/louvain.hpp>
#include <binfam/neighbor_join.hpp>
#include <binfam/similarity.hpp>

namespace binfam {

using NodeId = std::uint64_t;
inline constexpr NodeId kNoNode = 0;  // ids start at 1

enum class ClustererKind { NeighborJoin, Louvain };

inline std::string clusterer_name(ClustererKind k) {
    return k == ClustererKind::NeighborJoin ? "nj" : "louvain";
}
inline ClustererKind clusterer_from_name(const std::string& s) {
    if (s == "nj") return ClustererKind::NeighborJoin;
    if (s == "louvain") return ClustererKind::Louvain;
    throw std::invalid_argument("unknown clusterer: " + s);
}

struct HierarchyParams {
    int d_r = 4;           // re-clustering depth
    double tau = 0.15;     // drift threshold on delta(F', F0)
    double lambda = 0.8;   // flattening factor, see flatten_subtree
    ThetaKind theta_kind = ThetaKind::WeightedAverage;
    ChannelWeights channel_weights;
    ClustererKind clusterer = ClustererKind::NeighborJoin;
    double louvain_prune = 0.05;  // similarity edges below this are dropped

    void validate() const {
        if (d_r < 2) throw std::invalid_argument("d_r must be >= 2");
        if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("tau must be in [0,1]");
        if (lambda <= 0.0) throw std::invalid_argument("lambda must be > 0");
        channel_weights.validate();
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["d_r"] = d_r;
        j["tau"] = tau;
        j["lambda"] = lambda;
        j["theta"] = theta_kind_name(theta_kind);
        j["channel_weights"] = {channel_weights.w_ngram, channel_weights.w_string,
                                channel_weights.w_import};
        j["clusterer"] = clusterer_name(clusterer);
        j["louvain_prune"] = louvain_prune;
        return j;
    }
    static HierarchyParams from_json(const nlohmann::json& j) {
        HierarchyParams p;
        p.d_r = j.at("d_r").get<int>();
        p.tau = j.at("tau").get<double>();
        p.lambda = j.at("lambda").get<double>();
        p.theta_kind = theta_kind_from_name(j.at("theta").get<std::string>());
        p.channel_weights.w_ngram = j.at("channel_weights").at(0).get<double>();
        p.channel_weights.w_string = j.at("channel_weights").at(1).get<double>();
        p.channel_weights.w_import = j.at("channel_weights").at(2).get<double>();
        p.clusterer = clusterer_from_name(j.at("clusterer").get<std::string>());
        p.louvain_prune = j.at("louvain_prune").get<double>();
        return p;
    }
};

// Exemplar node. Children are either exemplar nodes or raw binaries, never a
// mix; a node whose children are binaries is a leaf exemplar and defines one
// malware family.
struct ExemplarNode {
    NodeId id = kNoNode;
    NodeId parent = kNoNode;
    BinaryFeatures features;           // F, kept in step with the children
    BinaryFeatures original_features;  // F0, frozen at creation
    std::vector<NodeId> child_nodes;
    std::vector<std::string> child_binaries;
    std::int64_t size = 0;  // raw binaries represented
    bool modified = false;
    bool needs_recluster = false;

    bool is_leaf_exemplar() const { return child_nodes.empty(); }
};

struct LeafBinary {
    std::string id;
    BinaryFeatures features;
    NodeId parent = kNoNode;
};

struct UpdateReport {
    int nodes_updated = 0;
    int nodes_reclustered = 0;
    bool bootstrapped = false;
    std::vector<NodeId> reclustered_nodes;
};

// The persistent exemplar hierarchy plus the online incremental
// classification / re-clustering algorithm. Single-writer: callers must not
// mutate concurrently; reads are safe between batches.
class Hierarchy {
public:
    Hierarchy() = default;
    explicit Hierarchy(HierarchyParams params) : params_(params) { params_.validate(); }

    const HierarchyParams& params() const { return params_; }
    // theta_kind is fixed once the hierarchy holds nodes; the rest may vary
    // between runs.
    void set_params(const HierarchyParams& p) {
        p.validate();
        if (!nodes_.empty() && p.theta_kind != params_.theta_kind)
            throw std::invalid_argument("theta kind is immutable after hierarchy creation");
        params_ = p;
    }

    bool empty() const { return nodes_.empty(); }
    NodeId root() const { return root_; }
    const std::map<NodeId, ExemplarNode>& nodes() const { return nodes_; }
    const std::map<std::string, LeafBinary>& binaries() const { return binaries_; }
    const ExemplarNode& node(NodeId id) const {
        auto it = nodes_.find(id);
        if (it == nodes_.end()) throw std::invalid_argument("unknown node id");
        return it->second;
    }

    std::vector<NodeId> leaf_exemplars() const {
        std::vector<NodeId> out;
        for (const auto& [id, n] : nodes_)
            if (n.is_leaf_exemplar()) out.push_back(id);
        return out;
    }

    // Flat family assignment: binary id -> leaf exemplar id.
    std::map<std::string, NodeId> family_labels() const {
        std::map<std::string, NodeId> out;
        for (const auto& [id, b] : binaries_) out[id] = b.parent;
        return out;
    }

    // ---- online algorithm ----------------------------------------------

    // Attaches each binary under the minimum-distance leaf exemplar (ties to
    // the lowest exemplar id) and marks that exemplar modified.
    std::vector<NodeId> classify_batch(
        const std::vector<std::pair<std::string, BinaryFeatures>>& batch) {
        std::vector<NodeId> assigned;
        if (batch.empty()) return assigned;
        if (nodes_.empty()) throw std::logic_error("classify_batch on empty hierarchy");
        std::vector<NodeId> leaves = leaf_exemplars();
        assigned.reserve(batch.size());
        for (const auto& [bid, feat] : batch) {
            if (binaries_.count(bid))
                throw std::invalid_argument("duplicate binary id: " + bid);
            NodeId best = kNoNode;
            double best_d = std::numeric_limits<double>::infinity();
            for (NodeId lid : leaves) {  // leaves sorted ascending: ties keep lowest id
                double d = combined_distance(feat, nodes_.at(lid).features,
                                             params_.channel_weights);
                if (d < best_d) {
                    best_d = d;
                    best = lid;
                }
            }
            attach_binary(bid, feat, best);
            nodes_.at(best).modified = true;
            assigned.push_back(best);
        }
        return assigned;
    }

    // Post-order maintenance pass: refresh features of modified nodes, mark
    // the (d_r-1)-ancestor for re-clustering when drift exceeds tau, and
    // re-cluster marked nodes in the same pass. Clears all flags at the end.
    UpdateReport update_pass() {
        UpdateReport report;
        if (nodes_.empty()) return report;
        visit_update(root_, report);
        for (auto& [id, n] : nodes_) {
            n.modified = false;
            n.needs_recluster = false;
        }
        return report;
    }

    // classify_batch followed by update_pass; bootstraps an empty hierarchy
    // by clustering the whole batch from scratch.
    UpdateReport incremental_cluster(
        const std::vector<std::pair<std::string, BinaryFeatures>>& batch) {
        UpdateReport report;
        if (batch.empty()) return report;
        if (nodes_.empty()) {
            bootstrap(batch);
            report.bootstrapped = true;
            return report;
        }
        classify_batch(batch);
        return update_pass();
    }

    // Re-clusters the sub-hierarchy below `id` over its depth-d_r frontier.
    // The node's own features are left untouched (transitivity makes the
    // recomputed value identical anyway).
    void recluster_at(NodeId id) {
        auto it = nodes_.find(id);
        if (it == nodes_.end()) throw std::invalid_argument("recluster_at: unknown node");
        ExemplarNode& e = it->second;
        if (e.is_leaf_exemplar()) {
            if (e.child_binaries.size() < 2) return;
            recluster_leaf(e);
            return;
        }
        std::vector<NodeId> frontier;
        std::vector<NodeId> doomed;  // strictly between id and the frontier
        collect_frontier(id, 0, frontier, doomed);
        if (frontier.size() == 1) {
            // Degenerate chain: adopt the single frontier node directly.
            for (NodeId d : doomed) nodes_.erase(d);
            e.child_nodes = {frontier[0]};
            nodes_.at(frontier[0]).parent = id;
            return;
        }
        std::vector<BinaryFeatures const*> feats;
        feats.reserve(frontier.size());
        for (NodeId f : frontier) feats.push_back(&nodes_.at(f).features);
        DistanceMatrix dm = DistanceMatrix::build(
            frontier.size(), [&](std::size_t a, std::size_t b) {
                return combined_distance(*feats[a], *feats[b], params_.channel_weights);
            });
        Dendrogram dg = run_clusterer(dm);

        for (NodeId d : doomed) nodes_.erase(d);
        std::map<std::string, std::size_t> item_index;  // for cohesion lookups
        std::vector<NodeId> fresh;
        attach_fragment(e, dg, [&](int leaf) { return frontier[static_cast<std::size_t>(leaf)]; },
                        fresh);
        for (std::size_t i = 0; i < frontier.size(); ++i)
            item_index["n:" + std::to_string(frontier[i])] = i;
        flatten_subtree(id, params_.lambda, fresh, &dm, &item_index);
    }

    // Flattening: a node deletes its children and adopts its grandchildren
    // when the children layer adds no real grouping information. Cohesion is
    // measured as mean pairwise distance; the condition compares the layers'
    // tightness (1 - cohesion), scaled by lambda:
    //     flatten  iff  lambda * (1 - cohesion(C2)) < (1 - cohesion(C1)),
    // with the tie rule that two all-identical layers (both cohesions zero)
    // always flatten. Restricted to `eligible` nodes when given (freshly
    // created exemplars of one re-clustering), otherwise the whole subtree.
    void flatten_subtree(NodeId top, double lambda,
                         const std::vector<NodeId>& eligible_list = {},
                         const DistanceMatrix* item_dm = nullptr,
                         const std::map<std::string, std::size_t>* item_index = nullptr) {
        std::set<NodeId> eligible(eligible_list.begin(), eligible_list.end());
        eligible.insert(top);
        bool restrict = !eligible_list.empty();
        flatten_visit(top, lambda, restrict ? &eligible : nullptr, item_dm, item_index);
    }

    // ---- structure checks ------------------------------------------------

    // Walks the whole structure and throws on any violated invariant.
    void validate() const {
        if (nodes_.empty()) {
            if (!binaries_.empty()) throw std::logic_error("binaries without hierarchy");
            return;
        }
        if (!nodes_.count(root_)) throw std::logic_error("missing root");
        if (nodes_.at(root_).parent != kNoNode) throw std::logic_error("root has parent");
        std::set<NodeId> seen;
        std::set<std::string> seen_bin;
        std::int64_t total = validate_walk(root_, seen, seen_bin);
        if (seen.size() != nodes_.size()) throw std::logic_error("unreachable exemplar nodes");
        if (seen_bin.size() != binaries_.size()) throw std::logic_error("unreachable binaries");
        if (total != static_cast<std::int64_t>(binaries_.size()))
            throw std::logic_error("size bookkeeping mismatch");
    }

    // ---- persistence ------------------------------------------------------

    void save(std::ostream& out) const {
        nlohmann::ordered_json header;
        header["format"] = "binfam-hierarchy";
        header["version"] = 1;
        header["params"] = params_.to_json();
        header["root"] = root_;
        header["next_id"] = next_id_;
        out << header.dump() << "\n";
        for (const auto& [id, n] : nodes_) {
            nlohmann::ordered_json j;
            j["node"] = id;
            j["parent"] = n.parent;
            j["child_nodes"] = n.child_nodes;
            j["child_binaries"] = n.child_binaries;
            j["size"] = n.size;
            j["features"] = n.features.to_json();
            j["original_features"] = n.original_features.to_json();
            out << j.dump() << "\n";
        }
        for (const auto& [id, b] : binaries_) {
            nlohmann::ordered_json j;
            j["binary"] = id;
            j["parent"] = b.parent;
            j["features"] = b.features.to_json();
            out << j.dump() << "\n";
        }
    }

    static Hierarchy load(std::istream& in) {
        Hierarchy h;
        std::string line;
        if (!std::getline(in, line)) throw std::runtime_error("empty hierarchy file");
        nlohmann::json header = nlohmann::json::parse(line);
        if (header.at("format") != "binfam-hierarchy" || header.at("version") != 1)
            throw std::runtime_error("unsupported hierarchy file format");
        h.params_ = HierarchyParams::from_json(header.at("params"));
        h.root_ = header.at("root").get<NodeId>();
        h.next_id_ = header.at("next_id").get<NodeId>();
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            nlohmann::json j = nlohmann::json::parse(line);
            if (j.contains("node")) {
                ExemplarNode n;
                n.id = j.at("node").get<NodeId>();
                n.parent = j.at("parent").get<NodeId>();
                n.child_nodes = j.at("child_nodes").get<std::vector<NodeId>>();
                n.child_binaries = j.at("child_binaries").get<std::vector<std::string>>();
                n.size = j.at("size").get<std::int64_t>();
                n.features = BinaryFeatures::from_json(j.at("features"));
                n.original_features = BinaryFeatures::from_json(j.at("original_features"));
                h.nodes_.emplace(n.id, std::move(n));
            } else {
                LeafBinary b;
                b.id = j.at("binary").get<std::string>();
                b.parent = j.at("parent").get<NodeId>();
                b.features = BinaryFeatures::from_json(j.at("features"));
                h.binaries_.emplace(b.id, std::move(b));
            }
        }
        h.validate();
        return h;
    }

private:
    // ---- construction helpers --------------------------------------------

    NodeId new_node(NodeId parent, BinaryFeatures features) {
        ExemplarNode n;
        n.id = next_id_++;
        n.parent = parent;
        n.size = features.size;
        n.original_features = features;
        n.features = std::move(features);
        NodeId id = n.id;
        nodes_.emplace(id, std::move(n));
        return id;
    }

    void attach_binary(const std::string& bid, const BinaryFeatures& feat, NodeId leaf) {
        binaries_[bid] = LeafBinary{bid, feat, leaf};
        ExemplarNode& e = nodes_.at(leaf);
        e.child_binaries.push_back(bid);
        for (NodeId cur = leaf; cur != kNoNode; cur = nodes_.at(cur).parent) {
            nodes_.at(cur).size += 1;
        }
    }

    void bootstrap(const std::vector<std::pair<std::string, BinaryFeatures>>& batch) {
        for (const auto& [bid, feat] : batch) {
            if (binaries_.count(bid)) throw std::invalid_argument("duplicate binary id: " + bid);
            binaries_[bid] = LeafBinary{bid, feat, kNoNode};
        }
        if (batch.size() == 1) {
            NodeId r = new_node(kNoNode, batch[0].second);
            nodes_.at(r).child_binaries.push_back(batch[0].first);
            binaries_.at(batch[0].first).parent = r;
            root_ = r;
            return;
        }
        std::vector<const BinaryFeatures*> feats;
        std::vector<std::string> ids;
        for (const auto& [bid, feat] : batch) {
            ids.push_back(bid);
            feats.push_back(&binaries_.at(bid).features);
        }
        DistanceMatrix dm = DistanceMatrix::build(ids.size(), [&](std::size_t a, std::size_t b) {
            return combined_distance(*feats[a], *feats[b], params_.channel_weights);
        });
        Dendrogram dg = run_clusterer(dm);
        // Root features = theta over everything.
        std::vector<const BinaryFeatures*> all(feats.begin(), feats.end());
        NodeId r = new_node(kNoNode, theta(params_.theta_kind, all));
        root_ = r;
        std::vector<NodeId> fresh;
        std::map<std::string, std::size_t> item_index;
        attach_fragment_binaries(nodes_.at(r), dg, ids, fresh);
        for (std::size_t i = 0; i < ids.size(); ++i) item_index["b:" + ids[i]] = i;
        flatten_subtree(r, params_.lambda, fresh, &dm, &item_index);
    }

    // Splits a leaf exemplar by clustering its binary children from scratch.
    void recluster_leaf(ExemplarNode& e) {
        std::vector<std::string> ids = e.child_binaries;
        std::vector<const BinaryFeatures*> feats;
        feats.reserve(ids.size());
        for (const auto& b : ids) feats.push_back(&binaries_.at(b).features);
        DistanceMatrix dm = DistanceMatrix::build(ids.size(), [&](std::size_t a, std::size_t b) {
            return combined_distance(*feats[a], *feats[b], params_.channel_weights);
        });
        Dendrogram dg = run_clusterer(dm);
        e.child_binaries.clear();
        std::vector<NodeId> fresh;
        std::map<std::string, std::size_t> item_index;
        attach_fragment_binaries(e, dg, ids, fresh);
        for (std::size_t i = 0; i < ids.size(); ++i) item_index["b:" + ids[i]] = i;
        flatten_subtree(e.id, params_.lambda, fresh, &dm, &item_index);
    }

    Dendrogram run_clusterer(const DistanceMatrix& dm) const {
        if (params_.clusterer == ClustererKind::NeighborJoin) return neighbor_join(dm);
        SimilarityGraph g(dm.size());
        for (std::size_t i = 0; i < dm.size(); ++i) {
            for (std::size_t j = i + 1; j < dm.size(); ++j) {
                double sim = 1.0 - dm.at(i, j);
                if (sim >= params_.louvain_prune)
                    g.add_edge(static_cast<int>(i), static_cast<int>(j), sim);
            }
        }
        return louvain_dendrogram(g);
    }

    // Materializes a dendrogram over existing exemplar items under `parent`.
    // The dendrogram root itself is dropped: its children hang directly off
    // `parent`, whose features stay untouched.
    void attach_fragment(ExemplarNode& parent, const Dendrogram& dg,
                         const std::function<NodeId(int)>& item_of, std::vector<NodeId>& fresh) {
        parent.child_nodes.clear();
        std::vector<NodeId> mapped(dg.nodes.size(), kNoNode);
        // Children before parents: process in index order (children of any
        // internal node always have smaller... not guaranteed; recurse).
        std::function<NodeId(int)> build = [&](int dn) -> NodeId {
            if (dg.is_leaf(dn)) return item_of(dn);
            if (mapped[static_cast<std::size_t>(dn)] != kNoNode)
                return mapped[static_cast<std::size_t>(dn)];
            std::vector<NodeId> kids;
            kids.reserve(dg.nodes[static_cast<std::size_t>(dn)].children.size());
            for (int c : dg.nodes[static_cast<std::size_t>(dn)].children) kids.push_back(build(c));
            std::vector<const BinaryFeatures*> feats;
            feats.reserve(kids.size());
            for (NodeId k : kids) feats.push_back(&nodes_.at(k).features);
            NodeId id = new_node(kNoNode, theta(params_.theta_kind, feats));
            ExemplarNode& n = nodes_.at(id);
            n.child_nodes = kids;
            for (NodeId k : kids) nodes_.at(k).parent = id;
            fresh.push_back(id);
            mapped[static_cast<std::size_t>(dn)] = id;
            return id;
        };
        if (dg.is_leaf(dg.root)) {
            NodeId only = item_of(dg.root);
            parent.child_nodes = {only};
            nodes_.at(only).parent = parent.id;
            return;
        }
        for (int c : dg.nodes[static_cast<std::size_t>(dg.root)].children) {
            NodeId k = build(c);
            parent.child_nodes.push_back(k);
            nodes_.at(k).parent = parent.id;
        }
    }

    // Same, but over raw binaries: every binary is first wrapped in its own
    // singleton leaf exemplar (the clusterer output puts every item in its
    // own family; flattening merges from there).
    void attach_fragment_binaries(ExemplarNode& parent, const Dendrogram& dg,
                                  const std::vector<std::string>& ids,
                                  std::vector<NodeId>& fresh) {
        std::vector<NodeId> wraps(ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            NodeId w = new_node(kNoNode, binaries_.at(ids[i]).features);
            nodes_.at(w).child_binaries.push_back(ids[i]);
            binaries_.at(ids[i]).parent = w;
            wraps[i] = w;
            fresh.push_back(w);
        }
        attach_fragment(parent, dg, [&](int leaf) { return wraps[static_cast<std::size_t>(leaf)]; },
                        fresh);
    }

    // ---- update pass -------------------------------------------------------

    void visit_update(NodeId id, UpdateReport& report) {
        {
            std::vector<NodeId> kids = nodes_.at(id).child_nodes;
            for (NodeId c : kids) visit_update(c, report);
        }
        ExemplarNode& e = nodes_.at(id);
        if (e.modified) {
            if (e.parent != kNoNode) nodes_.at(e.parent).modified = true;
            BinaryFeatures fresh = theta_of_children(e);
            e.features = std::move(fresh);
            ++report.nodes_updated;
            if (combined_distance(e.features, e.original_features, params_.channel_weights) >
                params_.tau) {
                NodeId target = ancestor_clamped(id, params_.d_r - 1);
                nodes_.at(target).needs_recluster = true;
            }
        }
        if (nodes_.at(id).needs_recluster) {
            recluster_at(id);
            ++report.nodes_reclustered;
            report.reclustered_nodes.push_back(id);
        }
    }

    BinaryFeatures theta_of_children(const ExemplarNode& e) const {
        std::vector<const BinaryFeatures*> feats;
        if (e.is_leaf_exemplar()) {
            feats.reserve(e.child_binaries.size());
            for (const auto& b : e.child_binaries) feats.push_back(&binaries_.at(b).features);
        } else {
            feats.reserve(e.child_nodes.size());
            for (NodeId c : e.child_nodes) feats.push_back(&nodes_.at(c).features);
        }
        return theta(params_.theta_kind, feats);
    }

    NodeId ancestor_clamped(NodeId id, int steps) const {
        NodeId cur = id;
        for (int i = 0; i < steps; ++i) {
            NodeId p = nodes_.at(cur).parent;
            if (p == kNoNode) break;
            cur = p;
        }
        return cur;
    }

    // Frontier below `id`: nodes at depth d_r, plus leaf exemplars reached
    // earlier (the sub-hierarchy cannot descend below a family).
    void collect_frontier(NodeId id, int depth, std::vector<NodeId>& frontier,
                          std::vector<NodeId>& doomed) {
        const ExemplarNode& e = nodes_.at(id);
        for (NodeId c : e.child_nodes) {
            const ExemplarNode& child = nodes_.at(c);
            if (depth + 1 == params_.d_r || child.is_leaf_exemplar()) {
                frontier.push_back(c);
            } else {
                doomed.push_back(c);
                collect_frontier(c, depth + 1, frontier, doomed);
            }
        }
    }

    // ---- flattening ---------------------------------------------------------

    struct ChildRef {  // exemplar node or binary
        NodeId node = kNoNode;
        const std::string* binary = nullptr;
    };

    const BinaryFeatures& ref_features(const ChildRef& r) const {
        return r.binary ? binaries_.at(*r.binary).features : nodes_.at(r.node).features;
    }
    std::string ref_key(const ChildRef& r) const {
        return r.binary ? "b:" + *r.binary : "n:" + std::to_string(r.node);
    }

    double mean_pairwise(const std::vector<ChildRef>& refs, const DistanceMatrix* dm,
                         const std::map<std::string, std::size_t>* index) const {
        if (refs.size() < 2) return 0.0;
        std::vector<std::optional<std::size_t>> idx(refs.size());
        if (dm && index) {
            for (std::size_t i = 0; i < refs.size(); ++i) {
                auto it = index->find(ref_key(refs[i]));
                if (it != index->end()) idx[i] = it->second;
            }
        }
        double sum = 0.0;
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < refs.size(); ++i) {
            for (std::size_t j = i + 1; j < refs.size(); ++j) {
                if (idx[i] && idx[j]) sum += dm->at(*idx[i], *idx[j]);
                else
                    sum += combined_distance(ref_features(refs[i]), ref_features(refs[j]),
                                             params_.channel_weights);
                ++pairs;
            }
        }
        return sum / static_cast<double>(pairs);
    }

    void flatten_visit(NodeId id, double lambda, const std::set<NodeId>* eligible,
                       const DistanceMatrix* dm,
                       const std::map<std::string, std::size_t>* index) {
        {
            std::vector<NodeId> kids = nodes_.at(id).child_nodes;
            for (NodeId c : kids)
                if (!eligible || eligible->count(c)) flatten_visit(c, lambda, eligible, dm, index);
        }
        ExemplarNode& e = nodes_.at(id);
        if (e.is_leaf_exemplar()) return;

        std::vector<ChildRef> c1, c2;
        bool grand_nodes = false, grand_binaries = false;
        for (NodeId c : e.child_nodes) {
            const ExemplarNode& ch = nodes_.at(c);
            c1.push_back({c, nullptr});
            if (ch.is_leaf_exemplar()) {
                grand_binaries = !ch.child_binaries.empty() || grand_binaries;
                for (const auto& b : ch.child_binaries) c2.push_back({kNoNode, &b});
            } else {
                grand_nodes = true;
                for (NodeId g : ch.child_nodes) c2.push_back({g, nullptr});
            }
        }
        if (c2.size() < 2) return;
        if (grand_nodes && grand_binaries) return;  // adoption would mix child kinds

        double d1 = mean_pairwise(c1, dm, index);
        double d2 = mean_pairwise(c2, dm, index);
        bool fire = lambda * (1.0 - d2) < (1.0 - d1) || (d1 == 0.0 && d2 == 0.0);
        if (!fire) return;

        std::vector<NodeId> old_children = e.child_nodes;
        e.child_nodes.clear();
        for (NodeId c : old_children) {
            ExemplarNode& ch = nodes_.at(c);
            if (ch.is_leaf_exemplar()) {
                for (const auto& b : ch.child_binaries) {
                    e.child_binaries.push_back(b);
                    binaries_.at(b).parent = id;
                }
            } else {
                for (NodeId g : ch.child_nodes) {
                    e.child_nodes.push_back(g);
                    nodes_.at(g).parent = id;
                }
            }
            nodes_.erase(c);
        }
    }

    std::int64_t validate_walk(NodeId id, std::set<NodeId>& seen,
                               std::set<std::string>& seen_bin) const {
        if (!seen.insert(id).second) throw std::logic_error("node visited twice (cycle?)");
        const ExemplarNode& e = nodes_.at(id);
        if (!e.child_nodes.empty() && !e.child_binaries.empty())
            throw std::logic_error("node mixes exemplar and binary children");
        if (e.child_nodes.empty() && e.child_binaries.empty())
            throw std::logic_error("exemplar without children");
        std::int64_t total = 0;
        for (NodeId c : e.child_nodes) {
            auto it = nodes_.find(c);
            if (it == nodes_.end()) throw std::logic_error("dangling child node id");
            if (it->second.parent != id) throw std::logic_error("parent pointer mismatch");
            total += validate_walk(c, seen, seen_bin);
        }
        for (const auto& b : e.child_binaries) {
            auto it = binaries_.find(b);
            if (it == binaries_.end()) throw std::logic_error("dangling child binary id");
            if (it->second.parent != id) throw std::logic_error("binary parent mismatch");
            if (!seen_bin.insert(b).second) throw std::logic_error("binary reachable twice");
            total += 1;
        }
        if (total != e.size) throw std::logic_error("node size mismatch");
        if (e.features.size != e.size) throw std::logic_error("feature size mismatch");
        return total;
    }

    HierarchyParams params_;
    std::map<NodeId, ExemplarNode> nodes_;
    std::map<std::string, LeafBinary> binaries_;
    NodeId root_ = kNoNode;
    NodeId next_id_ = 1;
};

}  // namespace binfam
