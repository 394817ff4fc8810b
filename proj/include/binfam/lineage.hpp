#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include <binfam/feature_bag.hpp>
#include <binfam/record.hpp>
#include <binfam/rng.hpp>
#include <binfam/similarity.hpp>

namespace binfam {

struct TimeEvidence {
    struct PerBinary {
        std::optional<std::int64_t> timestamp;
        std::optional<std::int64_t> first_seen;
    };
    std::map<std::string, PerBinary> per_binary;
    std::int64_t t_min = 1;
    std::int64_t t_max = 10000;

    std::int64_t range() const { return t_max - t_min + 1; }
    void validate() const {
        if (t_max < t_min) throw std::invalid_argument("bad time range");
        for (const auto& [id, e] : per_binary) {
            if (e.first_seen && (*e.first_seen < t_min || *e.first_seen > t_max))
                throw std::invalid_argument("first_seen outside global range: " + id);
        }
    }
};

// Model parameters for the creation-time and lineage models. The creation
// time is uniform over the range; the timestamp either equals it (not
// obfuscated) or is emptied / redrawn uniformly; first_seen lags creation by
// a discretized exponential delay.
struct LineagePriors {
    double q_obfuscate = 0.1;
    double q_empty_given_obf = 0.5;
    double rate_seen = 1.0 / 15.0;
    double root_prob = 0.1;
    double parent_geom_p = 0.7;  // geometric over parent count, truncated
    int max_parents = 3;
    double softmax_temperature = 0.1;

    void validate() const {
        auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
        if (!prob(q_obfuscate) || !prob(q_empty_given_obf) || !prob(root_prob) ||
            parent_geom_p <= 0.0 || parent_geom_p > 1.0)
            throw std::invalid_argument("priors: probabilities must lie in [0,1]");
        if (rate_seen <= 0.0) throw std::invalid_argument("priors: rate_seen must be > 0");
        if (max_parents < 1) throw std::invalid_argument("priors: max_parents must be >= 1");
        if (softmax_temperature <= 0.0) throw std::invalid_argument("priors: temperature > 0");
    }

    double log_parent_count(int k) const {
        if (k < 1 || k > max_parents) return -std::numeric_limits<double>::infinity();
        double norm = 0.0;
        for (int i = 1; i <= max_parents; ++i)
            norm += parent_geom_p * std::pow(1.0 - parent_geom_p, i - 1);
        return std::log(parent_geom_p * std::pow(1.0 - parent_geom_p, k - 1) / norm);
    }
};

// Normalized histogram over discretized creation times, one per binary.
struct CreationTimePosterior {
    std::map<std::string, std::map<std::int64_t, double>> histograms;

    std::int64_t mode(const std::string& id) const {
        const auto& h = histograms.at(id);
        std::int64_t best_t = 0;
        double best_w = -1.0;
        for (const auto& [t, w] : h) {
            if (w > best_w) {
                best_w = w;
                best_t = t;
            }
        }
        return best_t;
    }
    std::int64_t sample(const std::string& id, std::mt19937_64& rng) const {
        const auto& h = histograms.at(id);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double target = u(rng), acc = 0.0;
        std::int64_t last = 0;
        for (const auto& [t, w] : h) {
            acc += w;
            last = t;
            if (acc >= target) return t;
        }
        return last;
    }
};

struct LineageGraph {
    std::vector<std::string> ids;  // sorted
    std::vector<std::pair<std::string, std::string>> edges;  // parent -> child
    std::map<std::string, std::int64_t> times;
    double score = 0.0;
    int restarts_used = 0;

    void validate() const {
        std::set<std::string> known(ids.begin(), ids.end());
        for (const auto& [p, c] : edges) {
            if (!known.count(p) || !known.count(c))
                throw std::invalid_argument("edge endpoint not a lineage node");
            if (times.at(p) >= times.at(c))
                throw std::invalid_argument("edge violates time order: " + p + " -> " + c);
        }
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        nlohmann::ordered_json e = nlohmann::ordered_json::array();
        for (const auto& [p, c] : edges) e.push_back(nlohmann::ordered_json::array({p, c}));
        j["edges"] = std::move(e);
        nlohmann::ordered_json t;
        for (const auto& id : ids) t[id] = times.at(id);
        j["times"] = std::move(t);
        j["score"] = score;
        j["restarts_used"] = restarts_used;
        return j;
    }
};

namespace lineage_detail {

// log P(timestamp evidence | creation time c), on the integer grid.
inline double log_p_timestamp(const std::optional<std::int64_t>& ts, std::int64_t c,
                              const TimeEvidence& ev, const LineagePriors& pr) {
    double background = pr.q_obfuscate * (1.0 - pr.q_empty_given_obf) /
                        static_cast<double>(ev.range());
    if (!ts) return std::log(std::max(pr.q_obfuscate * pr.q_empty_given_obf, 1e-300));
    if (*ts == c) return std::log((1.0 - pr.q_obfuscate) + background);
    return std::log(std::max(background, 1e-300));
}

// log P(first_seen | creation time c): geometric-discretized exponential lag.
inline double log_p_first_seen(const std::optional<std::int64_t>& fs, std::int64_t c,
                               const LineagePriors& pr) {
    if (!fs) return 0.0;
    if (*fs < c) return -std::numeric_limits<double>::infinity();
    double log_norm = std::log(1.0 - std::exp(-pr.rate_seen));
    return log_norm - pr.rate_seen * static_cast<double>(*fs - c);
}

inline double log_time_term(const TimeEvidence::PerBinary& e, std::int64_t c,
                            const TimeEvidence& ev, const LineagePriors& pr) {
    if (c < ev.t_min || c > ev.t_max) return -std::numeric_limits<double>::infinity();
    return -std::log(static_cast<double>(ev.range())) + log_p_timestamp(e.timestamp, c, ev, pr) +
           log_p_first_seen(e.first_seen, c, pr);
}

}  // namespace lineage_detail

struct McmcConfig {
    int samples = 4000;
    int burn_in = 1000;
    std::uint64_t seed = 42;
};

// Per-binary Metropolis-Hastings over the discretized creation time, with a
// bounded symmetric random-walk proposal (width = range/100). Binaries with
// no evidence at all simply mix over the uniform prior.
inline CreationTimePosterior infer_creation_times(const TimeEvidence& evidence,
                                                  const LineagePriors& priors,
                                                  const McmcConfig& mcmc = {}) {
    evidence.validate();
    priors.validate();
    if (evidence.per_binary.empty()) throw std::invalid_argument("no binaries");
    CreationTimePosterior post;
    std::int64_t width = std::max<std::int64_t>(1, evidence.range() / 100);
    for (const auto& [id, e] : evidence.per_binary) {
        std::mt19937_64 rng = make_rng(mcmc.seed, "mh:" + id);
        std::uniform_int_distribution<std::int64_t> step(-width, width);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::int64_t c = e.timestamp ? std::clamp(*e.timestamp, evidence.t_min, evidence.t_max)
                         : e.first_seen ? *e.first_seen
                                        : (evidence.t_min + evidence.t_max) / 2;
        double logp = lineage_detail::log_time_term(e, c, evidence, priors);
        auto& hist = post.histograms[id];
        for (int it = 0; it < mcmc.burn_in + mcmc.samples; ++it) {
            std::int64_t delta = step(rng);
            if (delta == 0) delta = 1;
            std::int64_t cand = c + delta;
            double cand_logp = lineage_detail::log_time_term(e, cand, evidence, priors);
            if (cand_logp > logp || u(rng) < std::exp(cand_logp - logp)) {
                c = cand;
                logp = cand_logp;
            }
            if (it >= mcmc.burn_in) hist[c] += 1.0;
        }
        for (auto& [t, w] : hist) w /= static_cast<double>(mcmc.samples);
    }
    return post;
}

// Deterministic scorer for a (lineage, times) configuration. Parent sets are
// per-node index sets; PossibleEdges(v) is every strictly earlier binary.
class LineageScorer {
public:
    LineageScorer(std::vector<std::string> ids,
                  const std::map<std::string, BinaryFeatures>& features,
                  const TimeEvidence& evidence, const LineagePriors& priors,
                  const ChannelWeights& cw = ChannelWeights{})
        : ids_(std::move(ids)), evidence_(evidence), priors_(priors) {
        priors_.validate();
        const std::size_t n = ids_.size();
        sim_.assign(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                double s =
                    1.0 - combined_distance(features.at(ids_[i]), features.at(ids_[j]), cw);
                sim_[i * n + j] = s;
                sim_[j * n + i] = s;
            }
        }
    }

    const std::vector<std::string>& ids() const { return ids_; }
    double similarity(std::size_t a, std::size_t b) const {
        return sim_[a * ids_.size() + b];
    }

    // Total log probability. Returns -inf for configurations that violate the
    // hard constraints (time order, parent-count cap).
    double score(const std::vector<std::int64_t>& times,
                 const std::vector<std::set<int>>& parents) const {
        const std::size_t n = ids_.size();
        double total = 0.0;
        for (std::size_t v = 0; v < n; ++v) {
            total += lineage_detail::log_time_term(evidence_.per_binary.at(ids_[v]), times[v],
                                                   evidence_, priors_);
            total += node_term(v, times, parents[v]);
        }
        return total;
    }

    // Score contribution of node v's root/parent choice under fixed times.
    double node_term(std::size_t v, const std::vector<std::int64_t>& times,
                     const std::set<int>& parent_set) const {
        const std::size_t n = ids_.size();
        double mx = -std::numeric_limits<double>::infinity();
        int candidates = 0;
        for (std::size_t u = 0; u < n; ++u) {
            if (times[u] < times[v]) {
                ++candidates;
                mx = std::max(mx, similarity(u, v) / priors_.softmax_temperature);
            }
        }
        if (candidates == 0) {
            return parent_set.empty() ? 0.0 : -std::numeric_limits<double>::infinity();
        }
        double sum = 0.0;
        for (std::size_t u = 0; u < n; ++u)
            if (times[u] < times[v])
                sum += std::exp(similarity(u, v) / priors_.softmax_temperature - mx);
        double lse = mx + std::log(sum);
        if (parent_set.empty()) return std::log(priors_.root_prob);
        int k = static_cast<int>(parent_set.size());
        double term = std::log(1.0 - priors_.root_prob) + priors_.log_parent_count(k);
        for (int u : parent_set) {
            if (times[static_cast<std::size_t>(u)] >= times[v])
                return -std::numeric_limits<double>::infinity();
            term += similarity(static_cast<std::size_t>(u), v) / priors_.softmax_temperature - lse;
        }
        return term;
    }

private:
    std::vector<std::string> ids_;
    std::vector<double> sim_;
    TimeEvidence evidence_;
    LineagePriors priors_;
};

// Scores an explicit graph; exposed for oracle-style checks. Throws when an
// edge violates time order.
inline double score_lineage(const LineageGraph& graph,
                            const std::map<std::string, BinaryFeatures>& features,
                            const std::map<std::string, std::int64_t>& times,
                            const TimeEvidence& evidence, const LineagePriors& priors,
                            const ChannelWeights& cw = ChannelWeights{}) {
    std::vector<std::string> ids = graph.ids;
    std::sort(ids.begin(), ids.end());
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < ids.size(); ++i) index[ids[i]] = i;
    std::vector<std::int64_t> tv(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) tv[i] = times.at(ids[i]);
    std::vector<std::set<int>> parents(ids.size());
    for (const auto& [p, c] : graph.edges) {
        if (times.at(p) >= times.at(c))
            throw std::invalid_argument("score_lineage: edge violates time order");
        parents[index.at(c)].insert(static_cast<int>(index.at(p)));
    }
    LineageScorer scorer(ids, features, evidence, priors, cw);
    return scorer.score(tv, parents);
}

struct LineageConfig {
    int restarts = 10;
    int sa_steps = 1500;       // simulated-annealing proposals per lineage step
    int time_steps = 400;      // hill-climb proposals per time step
    int max_rounds = 20;
    double sa_t0 = 2.0;
    double sa_cooling = 0.995;
    std::uint64_t seed = 42;
    McmcConfig mcmc;
};

namespace lineage_detail {

struct State {
    std::vector<std::int64_t> times;
    std::vector<std::set<int>> parents;
    double score = -std::numeric_limits<double>::infinity();
};

// Step 3: keep times fixed and anneal the parent sets. Node terms are
// independent given times, so moves rescore one node. Never returns a state
// worse than the input (the best visited configuration wins).
inline void anneal_lineage(const LineageScorer& scorer, State& st, const LineageConfig& cfg,
                           std::mt19937_64& rng) {
    const std::size_t n = scorer.ids().size();
    State best = st;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> pick_node(0, static_cast<int>(n) - 1);
    double temp = cfg.sa_t0;
    for (int step = 0; step < cfg.sa_steps; ++step, temp = std::max(0.01, temp * cfg.sa_cooling)) {
        int v = pick_node(rng);
        std::vector<int> candidates;
        for (std::size_t w = 0; w < n; ++w)
            if (st.times[w] < st.times[static_cast<std::size_t>(v)])
                candidates.push_back(static_cast<int>(w));
        if (candidates.empty()) continue;
        std::set<int> proposal = st.parents[static_cast<std::size_t>(v)];
        double r = u(rng);
        if (proposal.empty() || r < 0.25) {
            // add a parent (or first parent)
            int c = candidates[static_cast<std::size_t>(
                std::uniform_int_distribution<int>(0, static_cast<int>(candidates.size()) - 1)(
                    rng))];
            proposal.insert(c);
        } else if (r < 0.5) {
            // drop a parent (possibly becoming a root)
            auto it = proposal.begin();
            std::advance(it, std::uniform_int_distribution<int>(
                                 0, static_cast<int>(proposal.size()) - 1)(rng));
            proposal.erase(it);
        } else if (r < 0.75) {
            // swap a parent
            auto it = proposal.begin();
            std::advance(it, std::uniform_int_distribution<int>(
                                 0, static_cast<int>(proposal.size()) - 1)(rng));
            proposal.erase(it);
            int c = candidates[static_cast<std::size_t>(
                std::uniform_int_distribution<int>(0, static_cast<int>(candidates.size()) - 1)(
                    rng))];
            proposal.insert(c);
        } else {
            proposal.clear();  // become a root
        }
        double before = scorer.node_term(static_cast<std::size_t>(v), st.times,
                                         st.parents[static_cast<std::size_t>(v)]);
        double after = scorer.node_term(static_cast<std::size_t>(v), st.times, proposal);
        double delta = after - before;
        if (delta > 0 || u(rng) < std::exp(delta / temp)) {
            st.parents[static_cast<std::size_t>(v)] = std::move(proposal);
            st.score += delta;
            if (st.score > best.score) best = st;
        }
    }
    if (best.score > st.score) st = best;
}

// Step 4: keep the inheritance pairs fixed (direction may flip with the
// times) and hill-climb the creation times. Only strict improvements are
// accepted, so the joint score never decreases.
inline bool refine_times(const LineageScorer& scorer, State& st, const TimeEvidence& ev,
                         const LineageConfig& cfg, std::mt19937_64& rng) {
    const std::size_t n = scorer.ids().size();
    std::vector<std::pair<int, int>> pairs;  // undirected inheritance links
    for (std::size_t v = 0; v < n; ++v)
        for (int p : st.parents[v]) pairs.emplace_back(p, static_cast<int>(v));
    std::int64_t width = std::max<std::int64_t>(1, ev.range() / 100);
    std::uniform_int_distribution<std::int64_t> step(-width, width);
    std::uniform_int_distribution<int> pick_node(0, static_cast<int>(n) - 1);
    bool moved = false;

    auto orient = [&](const std::vector<std::int64_t>& times,
                      std::vector<std::set<int>>& out) -> bool {
        for (auto& s : out) s.clear();
        for (const auto& [a, b] : pairs) {
            std::int64_t ta = times[static_cast<std::size_t>(a)];
            std::int64_t tb = times[static_cast<std::size_t>(b)];
            if (ta == tb) return false;
            int child = ta < tb ? b : a;
            int parent = ta < tb ? a : b;
            out[static_cast<std::size_t>(child)].insert(parent);
        }
        return true;
    };

    std::vector<std::set<int>> scratch(n);
    for (int it = 0; it < cfg.time_steps; ++it) {
        int v = pick_node(rng);
        std::int64_t delta = step(rng);
        if (delta == 0) delta = 1;
        std::vector<std::int64_t> cand_times = st.times;
        cand_times[static_cast<std::size_t>(v)] += delta;
        if (cand_times[static_cast<std::size_t>(v)] < ev.t_min ||
            cand_times[static_cast<std::size_t>(v)] > ev.t_max)
            continue;
        if (!orient(cand_times, scratch)) continue;
        double cand_score = scorer.score(cand_times, scratch);
        if (cand_score > st.score + 1e-12) {
            st.times = std::move(cand_times);
            st.parents = scratch;
            st.score = cand_score;
            moved = true;
        }
    }
    return moved;
}

}  // namespace lineage_detail

// Joint MAP inference of lineage and creation times: infer per-binary time
// posteriors, then per restart sample times, alternate annealed lineage
// optimization with time refinement until convergence, and keep the best
// restart by joint score.
inline LineageGraph infer_lineage(const std::map<std::string, BinaryFeatures>& features,
                                  const TimeEvidence& evidence, const LineagePriors& priors,
                                  const LineageConfig& cfg = {},
                                  const ChannelWeights& cw = ChannelWeights{},
                                  CreationTimePosterior* posterior_out = nullptr) {
    if (features.size() < 2) throw std::invalid_argument("lineage needs >= 2 binaries");
    for (const auto& [id, f] : features) {
        (void)f;
        if (!evidence.per_binary.count(id))
            throw std::invalid_argument("missing time evidence for " + id);
    }
    std::vector<std::string> ids;
    for (const auto& [id, f] : features) {
        (void)f;
        ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());
    LineageScorer scorer(ids, features, evidence, priors, cw);

    McmcConfig mcmc = cfg.mcmc;
    mcmc.seed = derive_seed(cfg.seed, "creation-times");
    CreationTimePosterior posterior = infer_creation_times(evidence, priors, mcmc);
    if (posterior_out) *posterior_out = posterior;

    const std::size_t n = ids.size();
    lineage_detail::State global_best;
    for (int restart = 0; restart < cfg.restarts; ++restart) {
        std::mt19937_64 rng = make_rng(cfg.seed, "restart:" + std::to_string(restart));
        lineage_detail::State st;
        st.times.resize(n);
        for (std::size_t i = 0; i < n; ++i) st.times[i] = posterior.sample(ids[i], rng);
        st.parents.assign(n, {});
        st.score = scorer.score(st.times, st.parents);

        std::vector<std::set<int>> prev_parents;
        std::vector<std::int64_t> prev_times;
        for (int round = 0; round < cfg.max_rounds; ++round) {
            prev_parents = st.parents;
            prev_times = st.times;
            lineage_detail::anneal_lineage(scorer, st, cfg, rng);
            lineage_detail::refine_times(scorer, st, evidence, cfg, rng);
            if (st.parents == prev_parents && st.times == prev_times) break;
        }
        if (st.score > global_best.score) global_best = st;
    }

    LineageGraph out;
    out.ids = ids;
    out.times.clear();
    for (std::size_t i = 0; i < n; ++i) out.times[ids[i]] = global_best.times[i];
    for (std::size_t v = 0; v < n; ++v)
        for (int p : global_best.parents[v])
            out.edges.emplace_back(ids[static_cast<std::size_t>(p)], ids[v]);
    std::sort(out.edges.begin(), out.edges.end());
    out.score = global_best.score;
    out.restarts_used = cfg.restarts;
    out.validate();
    return out;
}

// ---- synthetic ground truth -------------------------------------------------

// Standard Prufer decode over labels 0..n-1; the sequence has length n-2.
inline std::vector<std::pair<int, int>> prufer_decode(const std::vector<int>& seq, int n) {
    if (n < 2) throw std::invalid_argument("prufer decode needs n >= 2");
    if (static_cast<int>(seq.size()) != n - 2) throw std::invalid_argument("bad sequence length");
    std::vector<int> degree(static_cast<std::size_t>(n), 1);
    for (int x : seq) {
        if (x < 0 || x >= n) throw std::invalid_argument("sequence value out of range");
        degree[static_cast<std::size_t>(x)]++;
    }
    std::vector<std::pair<int, int>> edges;
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    for (int x : seq) {
        for (int leaf = 0; leaf < n; ++leaf) {
            if (degree[static_cast<std::size_t>(leaf)] == 1 && !used[static_cast<std::size_t>(leaf)]) {
                edges.emplace_back(leaf, x);
                used[static_cast<std::size_t>(leaf)] = true;
                degree[static_cast<std::size_t>(x)]--;
                break;
            }
        }
    }
    std::vector<int> rest;
    for (int i = 0; i < n; ++i)
        if (!used[static_cast<std::size_t>(i)] && degree[static_cast<std::size_t>(i)] >= 1)
            rest.push_back(i);
    edges.emplace_back(rest.at(0), rest.at(1));
    return edges;
}

enum class SeenDelayModel { Geometric, Uniform };

struct SyntheticLineage {
    std::vector<RawBinaryRecord> records;
    LineageGraph truth;
    TimeEvidence evidence;
};

// Ground-truth lineage from a uniform random Prufer sequence, oriented from a
// random root; creation times respect the edges with a mean parent-child gap
// of 15 on the 1..10000 scale. Timestamps are obfuscated (emptied or
// randomized) at the given rate; features drift along edges by token
// mutation.
inline SyntheticLineage generate_synthetic_lineage(int n, std::uint64_t seed,
                                                   double obfuscation_rate = 0.0,
                                                   SeenDelayModel delay_model =
                                                       SeenDelayModel::Geometric,
                                                   double mutation_rate = 0.1) {
    if (n < 2) throw std::invalid_argument("lineage generation needs n >= 2");
    std::mt19937_64 rng = make_rng(seed, "synth-lineage");
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    std::vector<int> seq(static_cast<std::size_t>(std::max(0, n - 2)));
    std::uniform_int_distribution<int> lbl(0, n - 1);
    for (auto& x : seq) x = lbl(rng);
    auto undirected = prufer_decode(seq, n);

    int root = lbl(rng);
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
    for (const auto& [a, b] : undirected) {
        adj[static_cast<std::size_t>(a)].push_back(b);
        adj[static_cast<std::size_t>(b)].push_back(a);
    }
    std::vector<int> parent(static_cast<std::size_t>(n), -1);
    std::vector<int> order;
    {
        std::vector<int> stack{root};
        std::vector<bool> seen(static_cast<std::size_t>(n), false);
        seen[static_cast<std::size_t>(root)] = true;
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            order.push_back(u);
            for (int v : adj[static_cast<std::size_t>(u)]) {
                if (!seen[static_cast<std::size_t>(v)]) {
                    seen[static_cast<std::size_t>(v)] = true;
                    parent[static_cast<std::size_t>(v)] = u;
                    stack.push_back(v);
                }
            }
        }
    }

    SyntheticLineage out;
    out.evidence.t_min = 1;
    out.evidence.t_max = 10000;
    std::vector<std::int64_t> times(static_cast<std::size_t>(n), 0);
    std::geometric_distribution<std::int64_t> gap(1.0 / 15.0);  // mean 14, +1 below
    std::uniform_int_distribution<std::int64_t> root_time(1, 1000);
    for (int u : order) {
        if (parent[static_cast<std::size_t>(u)] < 0) times[static_cast<std::size_t>(u)] = root_time(rng);
        else
            times[static_cast<std::size_t>(u)] =
                times[static_cast<std::size_t>(parent[static_cast<std::size_t>(u)])] + 1 + gap(rng);
        if (times[static_cast<std::size_t>(u)] > out.evidence.t_max)
            throw std::logic_error("synthetic lineage overflowed the time scale");
    }

    // Feature drift along edges: token bags mutated per edge.
    const int tokens = 80;
    std::uint64_t fresh_token = 0;
    std::vector<std::vector<std::string>> bag(static_cast<std::size_t>(n));
    for (int u : order) {
        if (parent[static_cast<std::size_t>(u)] < 0) {
            for (int t = 0; t < tokens; ++t)
                bag[static_cast<std::size_t>(u)].push_back("tok" + std::to_string(fresh_token++));
        } else {
            bag[static_cast<std::size_t>(u)] = bag[static_cast<std::size_t>(parent[static_cast<std::size_t>(u)])];
            for (auto& t : bag[static_cast<std::size_t>(u)])
                if (coin(rng) < mutation_rate) t = "tok" + std::to_string(fresh_token++);
        }
    }

    std::geometric_distribution<std::int64_t> seen_geom(1.0 / 15.0);
    std::uniform_int_distribution<std::int64_t> seen_uniform(0, 28);
    std::uniform_int_distribution<std::int64_t> random_ts(1, 10000);
    auto width = std::to_string(n).size();
    auto name = [&](int i) {
        std::string s = std::to_string(i);
        return "L" + std::string(width - s.size(), '0') + s;
    };
    for (int i = 0; i < n; ++i) {
        RawBinaryRecord r;
        r.binary_id = name(i);
        r.strings = bag[static_cast<std::size_t>(i)];
        std::int64_t c = times[static_cast<std::size_t>(i)];
        std::int64_t delay = delay_model == SeenDelayModel::Geometric ? seen_geom(rng)
                                                                      : seen_uniform(rng);
        std::int64_t fs = std::min<std::int64_t>(c + delay, out.evidence.t_max);
        r.first_seen = fs;
        if (coin(rng) < obfuscation_rate) {
            if (coin(rng) < 0.5) r.timestamp.reset();
            else r.timestamp = random_ts(rng);
        } else {
            r.timestamp = c;
        }
        out.evidence.per_binary[r.binary_id] = {r.timestamp, r.first_seen};
        out.truth.times[r.binary_id] = c;
        out.truth.ids.push_back(r.binary_id);
        out.records.push_back(std::move(r));
    }
    std::sort(out.truth.ids.begin(), out.truth.ids.end());
    for (int i = 0; i < n; ++i) {
        if (parent[static_cast<std::size_t>(i)] >= 0)
            out.truth.edges.emplace_back(name(parent[static_cast<std::size_t>(i)]), name(i));
    }
    std::sort(out.truth.edges.begin(), out.truth.edges.end());
    out.truth.validate();
    return out;
}

// ---- prior learning ---------------------------------------------------------

// Closed-form log probability of one binary's evidence under candidate
// priors, marginalizing the uniform creation time.
inline double log_evidence_one(const TimeEvidence::PerBinary& e, const TimeEvidence& ev,
                               double q, double qe, double rate) {
    const double R = static_cast<double>(ev.range());
    auto seen_cdf = [&](std::int64_t fs) {  // sum of delay pmf over feasible creations
        double span = static_cast<double>(fs - ev.t_min + 1);
        return 1.0 - std::exp(-rate * span);
    };
    double p;
    if (e.timestamp && e.first_seen) {
        double spike = 0.0;
        if (*e.first_seen >= *e.timestamp && *e.timestamp >= ev.t_min && *e.timestamp <= ev.t_max)
            spike = (1.0 - q) * (1.0 - std::exp(-rate)) *
                    std::exp(-rate * static_cast<double>(*e.first_seen - *e.timestamp));
        double background = q * (1.0 - qe) / R * seen_cdf(*e.first_seen);
        p = (spike + background) / R;
    } else if (e.first_seen) {
        p = q * qe / R * seen_cdf(*e.first_seen);
    } else if (e.timestamp) {
        double spike = (*e.timestamp >= ev.t_min && *e.timestamp <= ev.t_max) ? (1.0 - q) : 0.0;
        p = (spike + q * (1.0 - qe)) / R;
    } else {
        p = q * qe;
    }
    return std::log(std::max(p, 1e-300));
}

inline double log_evidence(const std::vector<TimeEvidence>& corpora, double q, double qe,
                           double rate) {
    double total = 0.0;
    for (const auto& ev : corpora)
        for (const auto& [id, e] : ev.per_binary) total += log_evidence_one(e, ev, q, qe, rate);
    return total;
}

// Samples candidate priors from Beta distributions, weights them by evidence
// probability, and refits the Betas toward the well-scoring region until the
// best evidence stops improving. rate_seen is the third Beta sample scaled
// onto (0, 0.5].
inline LineagePriors learn_priors(const std::vector<TimeEvidence>& corpora,
                                  std::uint64_t seed = 42, int candidates_per_round = 40,
                                  int max_rounds = 100) {
    bool usable = false;
    for (const auto& ev : corpora)
        for (const auto& [id, e] : ev.per_binary)
            if (e.timestamp || e.first_seen) usable = true;
    if (!usable) throw std::invalid_argument("no usable time evidence");

    std::mt19937_64 rng = make_rng(seed, "learn-priors");
    std::array<double, 3> alpha = {1.0, 1.0, 1.0}, beta = {1.0, 1.0, 1.0};
    auto sample_beta = [&](double a, double b) {
        std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
        double x = ga(rng), y = gb(rng);
        double v = x / (x + y);
        return std::clamp(v, 1e-4, 1.0 - 1e-4);
    };

    std::array<double, 3> best = {0.5, 0.5, 0.5};
    double best_ll = -std::numeric_limits<double>::infinity();
    for (int round = 0; round < max_rounds; ++round) {
        std::vector<std::pair<double, std::array<double, 3>>> scored;
        scored.reserve(static_cast<std::size_t>(candidates_per_round));
        for (int c = 0; c < candidates_per_round; ++c) {
            std::array<double, 3> cand = {sample_beta(alpha[0], beta[0]),
                                          sample_beta(alpha[1], beta[1]),
                                          sample_beta(alpha[2], beta[2])};
            double ll = log_evidence(corpora, cand[0], cand[1], 0.5 * cand[2]);
            scored.emplace_back(ll, cand);
        }
        std::sort(scored.begin(), scored.end(),
                  [](const auto& a, const auto& b) { return a.first > b.first; });
        double round_best = scored.front().first;
        bool improved = round_best > best_ll + 1e-6;
        if (round_best > best_ll) {
            best_ll = round_best;
            best = scored.front().second;
        }
        // Refit each Beta by moments over the top quartile.
        std::size_t top = std::max<std::size_t>(2, scored.size() / 4);
        for (int d = 0; d < 3; ++d) {
            double mean = 0.0, var = 0.0;
            for (std::size_t i = 0; i < top; ++i) mean += scored[i].second[static_cast<std::size_t>(d)];
            mean /= static_cast<double>(top);
            for (std::size_t i = 0; i < top; ++i) {
                double diff = scored[i].second[static_cast<std::size_t>(d)] - mean;
                var += diff * diff;
            }
            var = std::max(var / static_cast<double>(top), 1e-6);
            double common = mean * (1.0 - mean) / var - 1.0;
            common = std::clamp(common, 1.0, 400.0);
            alpha[static_cast<std::size_t>(d)] = std::clamp(mean * common, 0.5, 400.0);
            beta[static_cast<std::size_t>(d)] = std::clamp((1.0 - mean) * common, 0.5, 400.0);
        }
        if (!improved && round >= 3) break;
    }
    LineagePriors out;
    out.q_obfuscate = best[0];
    out.q_empty_given_obf = best[1];
    out.rate_seen = 0.5 * best[2];
    return out;
}

// ---- evaluation ---------------------------------------------------------------

struct LineageMetrics {
    double edge_precision = 0.0;
    double edge_recall = 0.0;
    double undirected_accuracy = 0.0;  // Jaccard of undirected edge sets
    double time_mae = 0.0;
};

inline LineageMetrics evaluate_lineage(const LineageGraph& predicted, const LineageGraph& truth) {
    if (predicted.ids != truth.ids) throw std::invalid_argument("lineage node sets differ");
    auto as_set = [](const std::vector<std::pair<std::string, std::string>>& edges) {
        return std::set<std::pair<std::string, std::string>>(edges.begin(), edges.end());
    };
    auto undirect = [](const std::vector<std::pair<std::string, std::string>>& edges) {
        std::set<std::pair<std::string, std::string>> s;
        for (auto [a, b] : edges) {
            if (b < a) std::swap(a, b);
            s.insert({a, b});
        }
        return s;
    };
    auto pred = as_set(predicted.edges), tru = as_set(truth.edges);
    double inter = 0.0;
    for (const auto& e : pred) inter += tru.count(e);
    LineageMetrics m;
    m.edge_precision = pred.empty() ? (tru.empty() ? 1.0 : 0.0)
                                    : inter / static_cast<double>(pred.size());
    m.edge_recall = tru.empty() ? 1.0 : inter / static_cast<double>(tru.size());
    auto up = undirect(predicted.edges), ut = undirect(truth.edges);
    double uinter = 0.0;
    for (const auto& e : up) uinter += ut.count(e);
    double uunion = static_cast<double>(up.size() + ut.size()) - uinter;
    m.undirected_accuracy = uunion == 0.0 ? 1.0 : uinter / uunion;
    double mae = 0.0;
    for (const auto& id : truth.ids)
        mae += std::abs(static_cast<double>(predicted.times.at(id) - truth.times.at(id)));
    m.time_mae = truth.ids.empty() ? 0.0 : mae / static_cast<double>(truth.ids.size());
    return m;
}

}  // namespace binfam
