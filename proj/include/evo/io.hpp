#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

namespace evo::io {

// Shortest round-trippable decimal form of a double.
inline std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc{}) throw std::runtime_error("format_double failed");
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw std::runtime_error("parse_double: bad number '" + std::string(s) + "'");
    return v;
}

inline std::uint64_t parse_u64(std::string_view s) {
    std::uint64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw std::runtime_error("parse_u64: bad number '" + std::string(s) + "'");
    return v;
}

// Minimal CSV with a fixed header; fields never contain commas or quotes.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

    void add_row(std::vector<std::string> cells) {
        if (cells.size() != header_.size())
            throw std::invalid_argument("CsvWriter: row width mismatch");
        rows_.push_back(std::move(cells));
    }

    std::string str() const {
        std::string out = join(header_);
        for (const auto& r : rows_) out += join(r);
        return out;
    }

private:
    static std::string join(const std::vector<std::string>& cells) {
        std::string line;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) line += ',';
            line += cells[i];
        }
        line += '\n';
        return line;
    }
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw std::out_of_range("CsvTable: no column '" + name + "'");
    }
};

inline CsvTable parse_csv(const std::string& text) {
    CsvTable table;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        for (;;) {
            const std::size_t pos = line.find(',', start);
            if (pos == std::string::npos) {
                cells.push_back(line.substr(start));
                break;
            }
            cells.push_back(line.substr(start, pos - start));
            start = pos + 1;
        }
        if (first) {
            table.header = std::move(cells);
            first = false;
        } else {
            table.rows.push_back(std::move(cells));
        }
    }
    return table;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// FNV-1a over bytes; stable fingerprint for replay comparisons.
inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t checksum_file(const std::filesystem::path& path) {
    const std::string bytes = read_text_file(path);
    return fnv1a64(bytes.data(), bytes.size());
}

// Compact binary frame: magic, version, dims, little-endian doubles.
inline constexpr char kFrameMagic[8] = {'E', 'V', 'O', 'F', 'R', 'A', 'M', 'E'};

inline void write_frame(const std::filesystem::path& path, const std::vector<std::uint64_t>& dims,
                        const std::vector<double>& payload) {
    std::size_t expected = 1;
    for (auto d : dims) expected *= static_cast<std::size_t>(d);
    if (expected != payload.size())
        throw std::invalid_argument("write_frame: dims do not match payload size");
    std::string bytes;
    bytes.append(kFrameMagic, sizeof(kFrameMagic));
    auto append_u32 = [&](std::uint32_t v) {
        for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
    };
    auto append_u64 = [&](std::uint64_t v) {
        for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
    };
    append_u32(1u); // version
    append_u32(static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) append_u64(d);
    for (double v : payload) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        append_u64(bits);
    }
    write_text_file(path, bytes);
}

struct Frame {
    std::vector<std::uint64_t> dims;
    std::vector<double> payload;
};

inline Frame read_frame(const std::filesystem::path& path) {
    const std::string bytes = read_text_file(path);
    std::size_t off = 0;
    auto need = [&](std::size_t n) {
        if (off + n > bytes.size()) throw std::runtime_error("read_frame: truncated file");
    };
    need(sizeof(kFrameMagic));
    if (std::memcmp(bytes.data(), kFrameMagic, sizeof(kFrameMagic)) != 0)
        throw std::runtime_error("read_frame: bad magic");
    off += sizeof(kFrameMagic);
    auto read_u32 = [&] {
        need(4);
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + b])) << (8 * b);
        off += 4;
        return v;
    };
    auto read_u64 = [&] {
        need(8);
        std::uint64_t v = 0;
        for (int b = 0; b < 8; ++b)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[off + b])) << (8 * b);
        off += 8;
        return v;
    };
    const std::uint32_t version = read_u32();
    if (version != 1u) throw std::runtime_error("read_frame: unsupported version");
    const std::uint32_t ndims = read_u32();
    Frame f;
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < ndims; ++d) {
        f.dims.push_back(read_u64());
        total *= static_cast<std::size_t>(f.dims.back());
    }
    f.payload.resize(total);
    for (std::size_t j = 0; j < total; ++j) {
        const std::uint64_t bits = read_u64();
        std::memcpy(&f.payload[j], &bits, sizeof(double));
    }
    return f;
}

} // namespace evo::io
