// binfam: incremental malware-family clustering, shared-component discovery,
// and lineage inference over pre-extracted binary feature files.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <binfam/components.hpp>
#include <binfam/hierarchy.hpp>
#include <binfam/lineage.hpp>
#include <binfam/metrics.hpp>
#include <binfam/record.hpp>
#include <binfam/rng.hpp>
#include <binfam/store.hpp>
#include <binfam/synthetic.hpp>

namespace {

using nlohmann::ordered_json;

struct GlobalOpts {
    std::string store = "store";
    std::uint64_t seed = 42;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

ordered_json manifest_base(const std::string& command, const std::vector<std::string>& argv,
                           const GlobalOpts& g) {
    ordered_json m;
    m["command"] = command;
    m["argv"] = argv;
    m["store"] = g.store;
    m["seed"] = g.seed;
    m["inputs"] = ordered_json::object();
    m["outputs"] = ordered_json::array();
    return m;
}

int run_ingest(const GlobalOpts& g, const std::string& input,
               const std::vector<std::string>& argv) {
    binfam::CorpusStore store(g.store);
    binfam::CorpusStore::Lock lock(store.dir());
    std::ifstream in(input);
    if (!in) throw std::runtime_error("cannot open " + input);
    auto read = binfam::read_records_jsonl(in);
    for (const auto& w : read.warnings) std::cerr << "warning: " << w << "\n";
    std::vector<std::string> warnings;
    auto stats = store.ingest(read.records, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

    ordered_json out;
    out["ingested"] = stats.ingested;
    out["duplicates"] = stats.duplicates;
    ordered_json rejects = ordered_json::array();
    for (const auto& [line, reason] : read.rejects)
        rejects.push_back(ordered_json::array({line, reason}));
    out["rejected"] = std::move(rejects);
    std::cout << out.dump() << "\n";

    auto m = manifest_base("ingest", argv, g);
    m["inputs"][input] = binfam::CorpusStore::file_digest(input);
    store.write_manifest(m);
    return 0;
}

int run_cluster(const GlobalOpts& g, const binfam::HierarchyParams& params, int batch_size,
                const std::vector<std::string>& argv) {
    binfam::CorpusStore store(g.store);
    binfam::CorpusStore::Lock lock(store.dir());
    binfam::Hierarchy h =
        store.has_hierarchy() ? store.load_hierarchy() : binfam::Hierarchy(params);
    if (store.has_hierarchy()) h.set_params(params);

    std::set<std::string> clustered;
    for (const auto& [id, b] : h.binaries()) clustered.insert(id);
    std::vector<std::string> pending;
    for (const auto& id : store.binary_ids())
        if (!clustered.count(id)) pending.push_back(id);

    std::size_t done = 0;
    int batch_no = 0;
    while (done < pending.size()) {
        std::vector<std::pair<std::string, binfam::BinaryFeatures>> batch;
        for (std::size_t i = done; i < std::min(done + static_cast<std::size_t>(batch_size),
                                                pending.size());
             ++i)
            batch.emplace_back(pending[i], store.features(pending[i]));
        done += batch.size();
        auto report = h.incremental_cluster(batch);
        h.validate();
        ordered_json line;
        line["batch"] = batch_no++;
        line["binaries"] = batch.size();
        line["bootstrapped"] = report.bootstrapped;
        line["nodes_updated"] = report.nodes_updated;
        line["nodes_reclustered"] = report.nodes_reclustered;
        line["leaf_exemplars"] = h.leaf_exemplars().size();
        std::cout << line.dump() << "\n";
    }
    if (pending.empty()) std::cout << R"({"batches":0,"note":"nothing to cluster"})" << "\n";
    store.save_hierarchy(h);

    auto m = manifest_base("cluster", argv, g);
    m["outputs"].push_back(store.hierarchy_path().string());
    store.write_manifest(m);
    return 0;
}

int run_components(const GlobalOpts& g, const std::string& method, int k, bool split,
                   const std::string& out_path, const std::vector<std::string>& argv) {
    binfam::CorpusStore store(g.store);
    binfam::CorpusStore::Lock lock(store.dir());
    std::vector<binfam::RawBinaryRecord> corpus;
    for (const auto& id : store.binary_ids()) corpus.push_back(store.record(id));
    auto kind = method == "kmeans" ? binfam::ComponentMethod::KMeans
                                   : binfam::ComponentMethod::Louvain;
    auto report = binfam::identify_components(corpus, kind, k, binfam::derive_seed(g.seed, "components"),
                                              0.3, split);

    std::ostringstream lines;
    int shared = 0;
    for (const auto& c : report.components) {
        lines << binfam::component_to_json(c, report.binary_order).dump() << "\n";
        if (c.shared()) ++shared;
    }
    write_text(out_path, lines.str());

    ordered_json summary;
    summary["binaries"] = report.binary_order.size();
    summary["components"] = report.components.size();
    summary["shared_components"] = shared;
    ordered_json per_binary;
    for (const auto& [bid, n] : report.components_per_binary) per_binary[bid] = n;
    summary["components_per_binary"] = std::move(per_binary);
    std::cout << summary.dump() << "\n";

    auto m = manifest_base("components", argv, g);
    m["outputs"].push_back(out_path);
    store.write_manifest(m);
    return 0;
}

binfam::TimeEvidence evidence_for(const binfam::CorpusStore& store,
                                  const std::vector<std::string>& ids) {
    binfam::TimeEvidence ev;
    std::int64_t lo = 1, hi = 10000;
    for (const auto& id : ids) {
        auto r = store.record(id);
        ev.per_binary[id] = {r.timestamp, r.first_seen};
        if (r.timestamp) {
            lo = std::min(lo, *r.timestamp);
            hi = std::max(hi, *r.timestamp);
        }
        if (r.first_seen) {
            lo = std::min(lo, *r.first_seen);
            hi = std::max(hi, *r.first_seen);
        }
    }
    ev.t_min = lo;
    ev.t_max = hi;
    return ev;
}

int run_lineage(const GlobalOpts& g, std::uint64_t family, const std::string& ids_csv,
                int restarts, int samples, int burn_in, const std::string& out_path,
                const std::string& dot_path, const std::vector<std::string>& argv) {
    binfam::CorpusStore store(g.store);
    binfam::CorpusStore::Lock lock(store.dir());
    std::vector<std::string> ids;
    if (!ids_csv.empty()) {
        std::stringstream ss(ids_csv);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (!tok.empty()) ids.push_back(tok);
        }
    } else {
        binfam::Hierarchy h = store.load_hierarchy();
        const auto& node = h.node(family);
        if (!node.is_leaf_exemplar())
            throw std::runtime_error("--family must name a leaf exemplar");
        ids = node.child_binaries;
    }
    if (ids.size() < 2) throw std::runtime_error("need >= 2 binaries for lineage");

    std::map<std::string, binfam::BinaryFeatures> features;
    for (const auto& id : ids) features[id] = store.features(id);
    binfam::TimeEvidence ev = evidence_for(store, ids);
    binfam::LineagePriors priors;
    binfam::LineageConfig cfg;
    cfg.restarts = restarts;
    cfg.mcmc.samples = samples;
    cfg.mcmc.burn_in = burn_in;
    cfg.seed = binfam::derive_seed(g.seed, "lineage");
    auto graph = binfam::infer_lineage(features, ev, priors, cfg);

    write_text(out_path, graph.to_json().dump(2) + "\n");
    if (!dot_path.empty()) {
        std::ostringstream dot;
        dot << "digraph lineage {\n";
        for (const auto& id : graph.ids)
            dot << "  \"" << id << "\" [label=\"" << id << "\\nt=" << graph.times.at(id)
                << "\"];\n";
        for (const auto& [p, c] : graph.edges) dot << "  \"" << p << "\" -> \"" << c << "\";\n";
        dot << "}\n";
        write_text(dot_path, dot.str());
    }
    std::cout << R"({"binaries":)" << graph.ids.size() << R"(,"edges":)" << graph.edges.size()
              << R"(,"score":)" << graph.score << "}\n";

    auto m = manifest_base("lineage", argv, g);
    m["outputs"].push_back(out_path);
    if (!dot_path.empty()) m["outputs"].push_back(dot_path);
    store.write_manifest(m);
    return 0;
}

int run_eval(const GlobalOpts& g, const std::string& truth_path, const std::string& out_path,
             const std::vector<std::string>& argv) {
    binfam::CorpusStore store(g.store);
    binfam::CorpusStore::Lock lock(store.dir());
    binfam::Hierarchy h = store.load_hierarchy();
    std::ifstream in(truth_path);
    if (!in) throw std::runtime_error("cannot open " + truth_path);
    nlohmann::json truth_json = nlohmann::json::parse(in);

    binfam::ClusteringLabels truth, pred;
    auto labels = h.family_labels();
    for (auto it = truth_json.begin(); it != truth_json.end(); ++it) {
        truth[it.key()] = it.value().get<std::string>();
        auto found = labels.find(it.key());
        if (found == labels.end())
            throw std::runtime_error("truth names unclustered binary: " + it.key());
        pred[it.key()] = std::to_string(found->second);
    }
    ordered_json metrics = binfam::clustering_metrics_json(pred, truth);
    std::cout << metrics.dump() << "\n";
    if (!out_path.empty()) write_text(out_path, metrics.dump(2) + "\n");

    auto m = manifest_base("eval", argv, g);
    m["inputs"][truth_path] = binfam::CorpusStore::file_digest(truth_path);
    if (!out_path.empty()) m["outputs"].push_back(out_path);
    store.write_manifest(m);
    return 0;
}

void write_records_jsonl(const std::string& path,
                         const std::vector<binfam::RawBinaryRecord>& records) {
    std::ostringstream out;
    for (const auto& r : records) out << r.to_json().dump() << "\n";
    write_text(path, out.str());
}

int run_synth_corpus(const GlobalOpts& g, int families, int per_family, double mutation,
                     const std::string& out_path, const std::string& truth_path,
                     const std::vector<std::string>& argv) {
    auto corpus = binfam::generate_planted_corpus(families, per_family, mutation,
                                                  binfam::derive_seed(g.seed, "synth-corpus"));
    write_records_jsonl(out_path, corpus.records);
    if (!truth_path.empty()) {
        ordered_json t;
        for (const auto& [id, fam] : corpus.truth) t[id] = fam;
        write_text(truth_path, t.dump(2) + "\n");
    }
    std::cout << R"({"records":)" << corpus.records.size() << "}\n";
    binfam::CorpusStore store(g.store);
    auto m = manifest_base("synth corpus", argv, g);
    m["outputs"].push_back(out_path);
    if (!truth_path.empty()) m["outputs"].push_back(truth_path);
    store.write_manifest(m);
    return 0;
}

int run_synth_components(const GlobalOpts& g, int binaries, int components, double p_min,
                         double p_max, double mutation, const std::string& out_path,
                         const std::string& truth_path, const std::vector<std::string>& argv) {
    std::vector<double> probs;
    for (int i = 0; i < components; ++i) {
        double f = components == 1 ? 0.0 : static_cast<double>(i) / (components - 1);
        probs.push_back(p_min + f * (p_max - p_min));
    }
    auto planted = binfam::generate_planted_components(
        binaries, probs, mutation, binfam::derive_seed(g.seed, "synth-components"));
    write_records_jsonl(out_path, planted.records);
    if (!truth_path.empty()) {
        ordered_json t = ordered_json::array();
        for (const auto& comp : planted.truth) {
            ordered_json c;
            for (const auto& [bid, pids] : comp)
                c[bid] = std::vector<std::string>(pids.begin(), pids.end());
            t.push_back(std::move(c));
        }
        write_text(truth_path, t.dump(2) + "\n");
    }
    std::cout << R"({"records":)" << planted.records.size() << "}\n";
    binfam::CorpusStore store(g.store);
    auto m = manifest_base("synth components", argv, g);
    m["outputs"].push_back(out_path);
    if (!truth_path.empty()) m["outputs"].push_back(truth_path);
    store.write_manifest(m);
    return 0;
}

int run_synth_lineage(const GlobalOpts& g, int n, double obfuscation, const std::string& delay,
                      double mutation, const std::string& out_path,
                      const std::string& truth_path, const std::vector<std::string>& argv) {
    auto model = delay == "uniform" ? binfam::SeenDelayModel::Uniform
                                    : binfam::SeenDelayModel::Geometric;
    auto synth = binfam::generate_synthetic_lineage(
        n, binfam::derive_seed(g.seed, "synth-lineage"), obfuscation, model, mutation);
    write_records_jsonl(out_path, synth.records);
    if (!truth_path.empty()) write_text(truth_path, synth.truth.to_json().dump(2) + "\n");
    std::cout << R"({"records":)" << synth.records.size() << "}\n";
    binfam::CorpusStore store(g.store);
    auto m = manifest_base("synth lineage", argv, g);
    m["outputs"].push_back(out_path);
    if (!truth_path.empty()) m["outputs"].push_back(truth_path);
    store.write_manifest(m);
    return 0;
}

int dispatch(const std::vector<std::string>& argv);

int run_replay(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("cannot open " + manifest_path);
    nlohmann::json m = nlohmann::json::parse(in);
    std::vector<std::string> argv = m.at("argv").get<std::vector<std::string>>();
    return dispatch(argv);
}

int dispatch(const std::vector<std::string>& argv) {
    CLI::App app{"incremental malware family clustering, components, and lineage"};
    app.require_subcommand(1);
    GlobalOpts g;
    app.add_option("--store", g.store, "corpus store directory");
    app.add_option("--seed", g.seed, "master seed; all randomness derives from it");

    auto* ingest = app.add_subcommand("ingest", "parse and store a JSONL feature file");
    std::string ingest_file;
    ingest->add_option("file", ingest_file, "JSON Lines feature file")->required();

    auto* cluster = app.add_subcommand("cluster", "incrementally cluster unclustered binaries");
    int batch_size = 1000;
    binfam::HierarchyParams params;
    std::string theta = "avg", clusterer = "nj", weights_csv;
    cluster->add_option("--batch-size", batch_size, "binaries per incremental batch");
    cluster->add_option("--d-r", params.d_r, "re-clustering depth");
    cluster->add_option("--tau", params.tau, "drift threshold");
    cluster->add_option("--lambda", params.lambda, "flattening factor");
    cluster->add_option("--theta", theta, "exemplar aggregation: intersect|avg");
    cluster->add_option("--clusterer", clusterer, "nj|louvain");
    cluster->add_option("--channel-weights", weights_csv, "ngram,string,import weights");

    auto* components = app.add_subcommand("components", "two-stage shared component discovery");
    std::string method = "louvain", comp_out = "components.jsonl";
    int k = 50;
    bool split = false;
    components->add_option("--method", method, "louvain|kmeans");
    components->add_option("--k", k, "K for kmeans");
    components->add_flag("--split", split, "reserved: split refinement");
    components->add_option("--out", comp_out, "component report (JSON Lines)");

    auto* lineage = app.add_subcommand("lineage", "infer a lineage graph for a family");
    std::uint64_t family = 0;
    std::string ids_csv, lin_out = "lineage.json", dot_out;
    int restarts = 10, samples = 4000, burn_in = 1000;
    lineage->add_option("--family", family, "leaf exemplar id naming the family");
    lineage->add_option("--ids", ids_csv, "explicit comma-separated binary ids");
    lineage->add_option("--restarts", restarts, "joint-inference restarts");
    lineage->add_option("--samples", samples, "MH samples per binary");
    lineage->add_option("--burn-in", burn_in, "MH burn-in");
    lineage->add_option("--out", lin_out, "JSON report path");
    lineage->add_option("--dot", dot_out, "DOT edge list path");

    auto* eval = app.add_subcommand("eval", "score hierarchy families against truth labels");
    std::string truth_path, eval_out;
    eval->add_option("--truth", truth_path, "truth labels JSON")->required();
    eval->add_option("--out", eval_out, "metrics output path");

    auto* synth = app.add_subcommand("synth", "synthetic corpus generators");
    synth->require_subcommand(1);
    auto* s_corpus = synth->add_subcommand("corpus", "planted family corpus");
    int families = 8, per_family = 125;
    double mutation = 0.1;
    std::string synth_out = "corpus.jsonl", synth_truth;
    s_corpus->add_option("--families", families);
    s_corpus->add_option("--per-family", per_family);
    s_corpus->add_option("--mutation", mutation);
    s_corpus->add_option("--out", synth_out);
    s_corpus->add_option("--truth-out", synth_truth);

    auto* s_comp = synth->add_subcommand("components", "planted shared components");
    int sc_binaries = 20, sc_components = 4;
    double p_min = 0.2, p_max = 0.6, sc_mutation = 0.0;
    std::string sc_out = "components_corpus.jsonl", sc_truth;
    s_comp->add_option("--binaries", sc_binaries);
    s_comp->add_option("--components", sc_components);
    s_comp->add_option("--p-min", p_min);
    s_comp->add_option("--p-max", p_max);
    s_comp->add_option("--mutation", sc_mutation);
    s_comp->add_option("--out", sc_out);
    s_comp->add_option("--truth-out", sc_truth);

    auto* s_lin = synth->add_subcommand("lineage", "Prufer-tree lineage with time evidence");
    int ln = 8;
    double obfuscation = 0.25, ln_mutation = 0.1;
    std::string delay = "geometric", ln_out = "lineage_corpus.jsonl", ln_truth;
    s_lin->add_option("--n", ln);
    s_lin->add_option("--obfuscation", obfuscation);
    s_lin->add_option("--delay", delay, "geometric|uniform");
    s_lin->add_option("--mutation", ln_mutation);
    s_lin->add_option("--out", ln_out);
    s_lin->add_option("--truth-out", ln_truth);

    auto* replay = app.add_subcommand("replay", "re-run a recorded manifest");
    std::string manifest_path;
    replay->add_option("manifest", manifest_path, "manifest JSON path")->required();

    std::vector<std::string> reversed(argv.rbegin(), argv.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    if (*ingest) return run_ingest(g, ingest_file, argv);
    if (*cluster) {
        if (!weights_csv.empty()) {
            std::stringstream ss(weights_csv);
            std::string tok;
            std::vector<double> w;
            while (std::getline(ss, tok, ',')) w.push_back(std::stod(tok));
            if (w.size() != 3) throw std::runtime_error("--channel-weights needs 3 values");
            params.channel_weights = {w[0], w[1], w[2]};
        }
        params.theta_kind = binfam::theta_kind_from_name(theta);
        params.clusterer = binfam::clusterer_from_name(clusterer);
        params.validate();
        return run_cluster(g, params, batch_size, argv);
    }
    if (*components) return run_components(g, method, k, split, comp_out, argv);
    if (*lineage) {
        if (ids_csv.empty() && family == 0)
            throw std::runtime_error("lineage needs --family or --ids");
        return run_lineage(g, family, ids_csv, restarts, samples, burn_in, lin_out, dot_out,
                           argv);
    }
    if (*eval) return run_eval(g, truth_path, eval_out, argv);
    if (*s_corpus) return run_synth_corpus(g, families, per_family, mutation, synth_out,
                                           synth_truth, argv);
    if (*s_comp) return run_synth_components(g, sc_binaries, sc_components, p_min, p_max,
                                             sc_mutation, sc_out, sc_truth, argv);
    if (*s_lin) return run_synth_lineage(g, ln, obfuscation, delay, ln_mutation, ln_out,
                                         ln_truth, argv);
    if (*replay) return run_replay(manifest_path);
    throw std::runtime_error("no subcommand");
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        return dispatch(args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
