#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace binfam {

// One pre-extracted binary, as ingested from a JSON Lines feature file.
// Procedures carry the hashes of their code-block semantics; call_edges are
// the procedure call graph.
struct RawBinaryRecord {
    std::string binary_id;
    std::vector<std::pair<std::string, std::vector<std::string>>> procedures;
    std::vector<std::pair<std::string, std::string>> call_edges;
    std::vector<std::string> strings;
    std::vector<std::string> imports;
    std::optional<std::int64_t> timestamp;   // compiler header time, absent if stripped
    std::optional<std::int64_t> first_seen;  // external sighting time

    // Throws std::invalid_argument on a malformed record.
    void validate() const {
        if (binary_id.empty()) throw std::invalid_argument("record has empty binary_id");
        std::set<std::string> proc_ids;
        for (const auto& [pid, blocks] : procedures) {
            if (!proc_ids.insert(pid).second)
                throw std::invalid_argument("duplicate procedure id: " + pid);
            (void)blocks;
        }
        for (const auto& [caller, callee] : call_edges) {
            if (!proc_ids.count(caller))
                throw std::invalid_argument("call edge names unknown caller: " + caller);
            if (!proc_ids.count(callee))
                throw std::invalid_argument("call edge names unknown callee: " + callee);
        }
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["binary_id"] = binary_id;
        nlohmann::ordered_json procs = nlohmann::ordered_json::array();
        for (const auto& [pid, blocks] : procedures) {
            procs.push_back(nlohmann::ordered_json::array({pid, blocks}));
        }
        j["procedures"] = std::move(procs);
        nlohmann::ordered_json edges = nlohmann::ordered_json::array();
        for (const auto& [a, b] : call_edges) edges.push_back(nlohmann::ordered_json::array({a, b}));
        j["call_edges"] = std::move(edges);
        j["strings"] = strings;
        j["imports"] = imports;
        if (timestamp) j["timestamp"] = *timestamp;
        if (first_seen) j["first_seen"] = *first_seen;
        return j;
    }
};

struct RecordParseResult {
    std::optional<RawBinaryRecord> record;
    std::vector<std::string> warnings;  // e.g. unknown keys
    std::string error;                  // nonempty if the record was rejected
};

inline RecordParseResult parse_record_json(const nlohmann::json& j) {
    RecordParseResult out;
    static const std::set<std::string> known = {"binary_id", "procedures", "call_edges",
                                                "strings",   "imports",    "timestamp",
                                                "first_seen"};
    try {
        RawBinaryRecord r;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!known.count(it.key())) out.warnings.push_back("unknown key ignored: " + it.key());
        }
        r.binary_id = j.at("binary_id").get<std::string>();
        if (j.contains("procedures")) {
            for (const auto& p : j.at("procedures")) {
                r.procedures.emplace_back(p.at(0).get<std::string>(),
                                          p.at(1).get<std::vector<std::string>>());
            }
        }
        if (j.contains("call_edges")) {
            for (const auto& e : j.at("call_edges")) {
                r.call_edges.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
            }
        }
        if (j.contains("strings")) r.strings = j.at("strings").get<std::vector<std::string>>();
        if (j.contains("imports")) r.imports = j.at("imports").get<std::vector<std::string>>();
        if (j.contains("timestamp") && !j.at("timestamp").is_null())
            r.timestamp = j.at("timestamp").get<std::int64_t>();
        if (j.contains("first_seen") && !j.at("first_seen").is_null())
            r.first_seen = j.at("first_seen").get<std::int64_t>();
        r.validate();
        out.record = std::move(r);
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

struct JsonlReadResult {
    std::vector<RawBinaryRecord> records;
    std::vector<std::pair<std::size_t, std::string>> rejects;  // (line number, reason)
    std::vector<std::string> warnings;
};

// Reads one JSON object per line; rejects malformed lines individually.
inline JsonlReadResult read_records_jsonl(std::istream& in) {
    JsonlReadResult out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            out.rejects.emplace_back(lineno, "invalid JSON");
            continue;
        }
        RecordParseResult parsed = parse_record_json(j);
        for (auto& w : parsed.warnings)
            out.warnings.push_back("line " + std::to_string(lineno) + ": " + w);
        if (parsed.record) out.records.push_back(std::move(*parsed.record));
        else out.rejects.emplace_back(lineno, parsed.error);
    }
    return out;
}

}  // namespace binfam
