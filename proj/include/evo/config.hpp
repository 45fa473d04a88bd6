#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "evo/io.hpp"
#include "evo/lattice.hpp"

namespace evo {

// Key-value text with [table] sections and dotted keys; values are scalars,
// quoted strings, booleans, or flat lists. Keys are stored fully dotted.
class ConfigMap {
public:
    static ConfigMap parse(const std::string& text) {
        ConfigMap cfg;
        std::string section;
        std::size_t line_no = 0;
        std::size_t start = 0;
        while (start <= text.size()) {
            std::size_t end = text.find('\n', start);
            if (end == std::string::npos) end = text.size();
            std::string line = text.substr(start, end - start);
            start = end + 1;
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            const std::size_t hash = find_comment(line);
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw std::runtime_error("config line " + std::to_string(line_no) +
                                             ": unterminated section header");
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("config line " + std::to_string(line_no) +
                                         ": expected key = value");
            std::string key = trim(line.substr(0, eq));
            std::string value = trim(line.substr(eq + 1));
            if (key.empty() || value.empty())
                throw std::runtime_error("config line " + std::to_string(line_no) +
                                         ": empty key or value");
            if (!section.empty()) key = section + "." + key;
            cfg.values_[key] = value;
        }
        return cfg;
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key) const {
        const std::string& raw = raw_at(key);
        if (raw.size() >= 2 && raw.front() == '"' && raw.back() == '"')
            return raw.substr(1, raw.size() - 2);
        return raw;
    }
    std::string get_string(const std::string& key, const std::string& fallback) const {
        return has(key) ? get_string(key) : fallback;
    }

    double get_double(const std::string& key) const { return io::parse_double(raw_at(key)); }
    double get_double(const std::string& key, double fallback) const {
        return has(key) ? get_double(key) : fallback;
    }

    std::int64_t get_int(const std::string& key) const {
        return static_cast<std::int64_t>(io::parse_double(raw_at(key)));
    }
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
        return has(key) ? get_int(key) : fallback;
    }

    std::uint64_t get_u64(const std::string& key) const { return io::parse_u64(raw_at(key)); }
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        return has(key) ? get_u64(key) : fallback;
    }

    bool get_bool(const std::string& key) const {
        const std::string raw = get_string(key);
        if (raw == "true") return true;
        if (raw == "false") return false;
        throw std::runtime_error("config key '" + key + "': expected true/false");
    }
    bool get_bool(const std::string& key, bool fallback) const {
        return has(key) ? get_bool(key) : fallback;
    }

    std::vector<double> get_double_list(const std::string& key) const {
        std::vector<double> out;
        for (const auto& item : split_list(raw_at(key), key)) out.push_back(io::parse_double(item));
        return out;
    }
    std::vector<double> get_double_list(const std::string& key,
                                        const std::vector<double>& fallback) const {
        return has(key) ? get_double_list(key) : fallback;
    }

    std::vector<std::int64_t> get_int_list(const std::string& key,
                                           const std::vector<std::int64_t>& fallback) const {
        if (!has(key)) return fallback;
        std::vector<std::int64_t> out;
        for (const auto& item : split_list(raw_at(key), key))
            out.push_back(static_cast<std::int64_t>(io::parse_double(item)));
        return out;
    }

    void set_string(const std::string& key, const std::string& v) { values_[key] = "\"" + v + "\""; }
    void set_double(const std::string& key, double v) { values_[key] = io::format_double(v); }
    void set_int(const std::string& key, std::int64_t v) { values_[key] = std::to_string(v); }
    void set_u64(const std::string& key, std::uint64_t v) { values_[key] = std::to_string(v); }
    void set_bool(const std::string& key, bool v) { values_[key] = v ? "true" : "false"; }
    void set_raw(const std::string& key, const std::string& raw) { values_[key] = raw; }

    // Dotted-key serialization, sorted; parses back to an identical map.
    std::string serialize() const {
        std::string out;
        for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
        return out;
    }

    // Sub-map of keys beginning with prefix + '.', prefix stripped.
    ConfigMap with_prefix_stripped(const std::string& prefix) const {
        ConfigMap out;
        const std::string pre = prefix + ".";
        for (const auto& [k, v] : values_)
            if (k.rfind(pre, 0) == 0) out.values_[k.substr(pre.size())] = v;
        return out;
    }

    void merge_with_prefix(const ConfigMap& other, const std::string& prefix) {
        for (const auto& [k, v] : other.values_) values_[prefix + "." + k] = v;
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    static std::string trim(const std::string& s) {
        std::size_t a = s.find_first_not_of(" \t");
        if (a == std::string::npos) return "";
        std::size_t b = s.find_last_not_of(" \t");
        return s.substr(a, b - a + 1);
    }

    // '#' starts a comment unless inside a quoted string.
    static std::size_t find_comment(const std::string& line) {
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) return i;
        }
        return std::string::npos;
    }

    static std::vector<std::string> split_list(const std::string& raw, const std::string& key) {
        if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']')
            throw std::runtime_error("config key '" + key + "': expected [list]");
        std::vector<std::string> out;
        std::string body = raw.substr(1, raw.size() - 2);
        std::size_t start = 0;
        while (start < body.size()) {
            std::size_t pos = body.find(',', start);
            if (pos == std::string::npos) pos = body.size();
            const std::string item = trim(body.substr(start, pos - start));
            if (!item.empty()) out.push_back(item);
            start = pos + 1;
        }
        return out;
    }

    const std::string& raw_at(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw std::runtime_error("config key missing: " + key);
        return it->second;
    }

    std::map<std::string, std::string> values_;
};

enum class ExperimentKind {
    simulate,
    kb_measure,
    moment_check,
    time_average_check,
    tail_check,
    tightness,
    cip,
    feller,
    ck_check,
    limit_stability
};

inline const char* to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::simulate: return "simulate";
        case ExperimentKind::kb_measure: return "kb_measure";
        case ExperimentKind::moment_check: return "moment_check";
        case ExperimentKind::time_average_check: return "time_average_check";
        case ExperimentKind::tail_check: return "tail_check";
        case ExperimentKind::tightness: return "tightness";
        case ExperimentKind::cip: return "cip";
        case ExperimentKind::feller: return "feller";
        case ExperimentKind::ck_check: return "ck_check";
        case ExperimentKind::limit_stability: return "limit_stability";
    }
    return "?";
}

inline ExperimentKind experiment_kind_from(const std::string& s) {
    for (ExperimentKind k :
         {ExperimentKind::simulate, ExperimentKind::kb_measure, ExperimentKind::moment_check,
          ExperimentKind::time_average_check, ExperimentKind::tail_check, ExperimentKind::tightness,
          ExperimentKind::cip, ExperimentKind::feller, ExperimentKind::ck_check,
          ExperimentKind::limit_stability})
        if (s == to_string(k)) return k;
    throw std::runtime_error("unknown experiment kind: " + s);
}

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::simulate;
    ModelParams model;
    std::uint64_t seed = 1;
    std::string out_dir; // empty: resolved by the CLI
    ConfigMap raw;
};

inline ModelParams model_params_from(const ConfigMap& c, const std::string& prefix = "model") {
    ModelParams mp;
    mp.lambda = c.get_double(prefix + ".lambda", 1.0);
    mp.nu = c.get_double(prefix + ".nu", 1.0);
    mp.p = c.get_double(prefix + ".p", 3.0);
    mp.delta = c.get_double(prefix + ".delta", 1.0);
    mp.epsilon = c.get_double(prefix + ".epsilon", 0.25);
    mp.trunc_radius = static_cast<int>(c.get_int(prefix + ".trunc_radius", 20));

    const std::string sig = c.get_string(prefix + ".sigma.family", "tanh_bounded");
    if (sig == "tanh_bounded") mp.sigma = DiffusionSpec::tanh_bounded();
    else if (sig == "linear_saturated") mp.sigma = DiffusionSpec::linear_saturated();
    else if (sig == "zero") mp.sigma = DiffusionSpec::zero();
    else throw std::runtime_error("unknown sigma.family: " + sig);

    const std::string gf = c.get_string(prefix + ".g.family", "zero");
    if (gf == "zero") {
        mp.g = ForcingSpec::zero();
    } else if (gf == "gaussian_decay") {
        mp.g = ForcingSpec::gaussian(c.get_double(prefix + ".g.params.a", 1.0),
                                     c.get_double(prefix + ".g.params.b", 0.05),
                                     static_cast<int>(c.get_int(prefix + ".g.params.support_radius", 5)));
    } else if (gf == "exp_past_decay") {
        mp.g = ForcingSpec::exp_past(c.get_double(prefix + ".g.params.a", 1.0),
                                     c.get_double(prefix + ".g.params.c", 0.0),
                                     static_cast<int>(c.get_int(prefix + ".g.params.support_radius", 5)));
    } else {
        throw std::runtime_error("unknown g.family: " + gf);
    }
    return mp;
}

inline void model_params_into(ConfigMap& c, const ModelParams& mp,
                              const std::string& prefix = "model") {
    c.set_double(prefix + ".lambda", mp.lambda);
    c.set_double(prefix + ".nu", mp.nu);
    c.set_double(prefix + ".p", mp.p);
    c.set_double(prefix + ".delta", mp.delta);
    c.set_double(prefix + ".epsilon", mp.epsilon);
    c.set_int(prefix + ".trunc_radius", mp.trunc_radius);
    c.set_string(prefix + ".sigma.family", to_string(mp.sigma.family));
    c.set_string(prefix + ".g.family", to_string(mp.g.family));
    if (mp.g.family != ForcingFamily::zero) {
        c.set_double(prefix + ".g.params.a", mp.g.a);
        if (mp.g.family == ForcingFamily::gaussian_decay)
            c.set_double(prefix + ".g.params.b", mp.g.b);
        if (mp.g.family == ForcingFamily::exp_past_decay)
            c.set_double(prefix + ".g.params.c", mp.g.c);
        c.set_int(prefix + ".g.params.support_radius", mp.g.support_radius);
    }
}

inline ExperimentConfig parse_experiment_config(const std::string& text) {
    ExperimentConfig cfg;
    cfg.raw = ConfigMap::parse(text);
    cfg.kind = experiment_kind_from(cfg.raw.get_string("kind"));
    cfg.model = model_params_from(cfg.raw);
    cfg.seed = cfg.raw.get_u64("seed", 1);
    cfg.out_dir = cfg.raw.get_string("out_dir", "");
    return cfg;
}

// Pure validation; every violation as one line of text.
inline std::vector<std::string> validate_config(const ExperimentConfig& cfg) {
    std::vector<std::string> out = cfg.model.violations();
    const double dt = cfg.raw.get_double("run.dt", 1e-3);
    if (!(dt > 0.0)) out.push_back("run.dt must be > 0");
    const std::int64_t M = cfg.raw.get_int("run.M", 2000);
    if (M < 1) out.push_back("run.M must be >= 1");
    return out;
}

} // namespace evo
