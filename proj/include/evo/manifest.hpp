#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <string>
#include <vector>

#include "evo/config.hpp"
#include "evo/io.hpp"
#include "evo/version.hpp"

namespace evo {

struct OutputRecord {
    std::string path; // relative to the manifest directory
    std::uint64_t bytes = 0;
    std::uint64_t fnv64 = 0;
};

struct RunManifest {
    std::string kind;
    std::string tool = kToolName;
    std::string version = kToolVersion;
    int status = 0;
    std::string started_utc;
    double duration_s = 0.0;
    ConfigMap config; // full config snapshot
    std::vector<OutputRecord> outputs;
};

inline std::string utc_now_string() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline OutputRecord record_output(const std::filesystem::path& dir, const std::string& rel) {
    const auto full = dir / rel;
    OutputRecord rec;
    rec.path = rel;
    rec.bytes = std::filesystem::file_size(full);
    rec.fnv64 = io::checksum_file(full);
    return rec;
}

inline std::string serialize_manifest(const RunManifest& m) {
    ConfigMap out;
    out.set_string("manifest.tool", m.tool);
    out.set_string("manifest.version", m.version);
    out.set_string("manifest.kind", m.kind);
    out.set_int("manifest.status", m.status);
    out.set_string("manifest.started_utc", m.started_utc);
    out.set_double("manifest.duration_s", m.duration_s);
    out.merge_with_prefix(m.config, "config");
    for (std::size_t j = 0; j < m.outputs.size(); ++j) {
        const std::string p = "output." + std::to_string(j);
        out.set_string(p + ".path", m.outputs[j].path);
        out.set_u64(p + ".bytes", m.outputs[j].bytes);
        out.set_u64(p + ".fnv64", m.outputs[j].fnv64);
    }
    return out.serialize();
}

inline RunManifest parse_manifest(const std::string& text) {
    const ConfigMap all = ConfigMap::parse(text);
    RunManifest m;
    m.tool = all.get_string("manifest.tool");
    m.version = all.get_string("manifest.version");
    m.kind = all.get_string("manifest.kind");
    m.status = static_cast<int>(all.get_int("manifest.status"));
    m.started_utc = all.get_string("manifest.started_utc", "");
    m.duration_s = all.get_double("manifest.duration_s", 0.0);
    m.config = all.with_prefix_stripped("config");
    for (std::size_t j = 0;; ++j) {
        const std::string p = "output." + std::to_string(j);
        if (!all.has(p + ".path")) break;
        m.outputs.push_back(
            {all.get_string(p + ".path"), all.get_u64(p + ".bytes"), all.get_u64(p + ".fnv64")});
    }
    return m;
}

inline void write_manifest(const std::filesystem::path& dir, const RunManifest& m) {
    io::write_text_file(dir / "manifest.txt", serialize_manifest(m));
}

inline RunManifest load_manifest(const std::filesystem::path& path) {
    return parse_manifest(io::read_text_file(path));
}

} // namespace evo
