#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include <binfam/feature_build.hpp>
#include <binfam/hashing.hpp>
#include <binfam/hierarchy.hpp>
#include <binfam/record.hpp>

namespace binfam {

// On-disk corpus: ingested records with their derived features, the current
// hierarchy file, and one manifest per CLI run so any run can be replayed.
// Binaries are addressed by the hash of their id; ingest is idempotent.
class CorpusStore {
public:
    explicit CorpusStore(std::filesystem::path dir) : dir_(std::move(dir)) {
        namespace fs = std::filesystem;
        fs::create_directories(dir_ / "binaries");
        fs::create_directories(dir_ / "manifests");
        if (!fs::exists(index_path())) write_index({});
    }

    const std::filesystem::path& dir() const { return dir_; }
    std::filesystem::path hierarchy_path() const { return dir_ / "hierarchy.jsonl"; }

    // Exclusive per-invocation lock.
    class Lock {
    public:
        explicit Lock(const std::filesystem::path& dir) : path_(dir / ".lock") {
            std::error_code ec;
            if (std::filesystem::exists(path_))
                throw std::runtime_error("store is locked: " + path_.string());
            std::ofstream out(path_);
            if (!out) throw std::runtime_error("cannot create lock file");
            out << "locked\n";
        }
        ~Lock() {
            std::error_code ec;
            std::filesystem::remove(path_, ec);
        }
        Lock(const Lock&) = delete;
        Lock& operator=(const Lock&) = delete;

    private:
        std::filesystem::path path_;
    };

    struct IngestStats {
        int ingested = 0;
        int duplicates = 0;
    };

    IngestStats ingest(const std::vector<RawBinaryRecord>& records,
                       std::vector<std::string>* warnings = nullptr) {
        IngestStats stats;
        auto index = read_index();
        for (const auto& r : records) {
            bool exists = false;
            for (const auto& e : index)
                if (e == r.binary_id) exists = true;
            if (exists) {
                ++stats.duplicates;
                if (warnings) warnings->push_back("duplicate binary_id skipped: " + r.binary_id);
                continue;
            }
            nlohmann::ordered_json j;
            j["record"] = r.to_json();
            j["features"] = build_features(r).to_json();
            std::ofstream out(binary_path(r.binary_id));
            out << j.dump() << "\n";
            index.push_back(r.binary_id);
            ++stats.ingested;
        }
        write_index(index);
        return stats;
    }

    std::vector<std::string> binary_ids() const { return read_index(); }

    RawBinaryRecord record(const std::string& id) const {
        nlohmann::json j = read_binary_json(id);
        auto parsed = parse_record_json(j.at("record"));
        if (!parsed.record) throw std::runtime_error("corrupt stored record: " + id);
        return *parsed.record;
    }

    BinaryFeatures features(const std::string& id) const {
        return BinaryFeatures::from_json(read_binary_json(id).at("features"));
    }

    bool has_hierarchy() const { return std::filesystem::exists(hierarchy_path()); }

    Hierarchy load_hierarchy() const {
        std::ifstream in(hierarchy_path());
        if (!in) throw std::runtime_error("no hierarchy file; run cluster first");
        return Hierarchy::load(in);
    }

    void save_hierarchy(const Hierarchy& h) const {
        std::ofstream out(hierarchy_path(), std::ios::trunc);
        h.save(out);
    }

    // Sequentially numbered run manifests.
    std::filesystem::path write_manifest(const nlohmann::ordered_json& manifest) {
        int next = 1;
        for (const auto& e : std::filesystem::directory_iterator(dir_ / "manifests")) {
            (void)e;
            ++next;
        }
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%04d.json", next);
        auto path = dir_ / "manifests" / buf;
        std::ofstream out(path);
        out << manifest.dump(2) << "\n";
        return path;
    }

    static std::string file_digest(const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        if (!in) throw std::runtime_error("cannot read " + p.string());
        Digest64 d;
        char buf[65536];
        while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
            d.update(std::string_view(buf, static_cast<std::size_t>(in.gcount())));
        std::ostringstream hex;
        hex << std::hex << d.value();
        return hex.str();
    }

private:
    std::filesystem::path index_path() const { return dir_ / "index.json"; }
    std::filesystem::path binary_path(const std::string& id) const {
        std::ostringstream name;
        name << std::hex << seeded_hash64(id, 0) << ".json";
        return dir_ / "binaries" / name.str();
    }

    std::vector<std::string> read_index() const {
        std::ifstream in(index_path());
        if (!in) return {};
        nlohmann::json j = nlohmann::json::parse(in);
        return j.get<std::vector<std::string>>();
    }
    void write_index(const std::vector<std::string>& ids) const {
        std::ofstream out(index_path(), std::ios::trunc);
        out << nlohmann::json(ids).dump() << "\n";
    }

    nlohmann::json read_binary_json(const std::string& id) const {
        std::ifstream in(binary_path(id));
        if (!in) throw std::runtime_error("unknown binary id: " + id);
        return nlohmann::json::parse(in);
    }

    std::filesystem::path dir_;
};

}  // namespace binfam
