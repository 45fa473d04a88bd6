#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "evo/config.hpp"
#include "evo/io.hpp"
#include "evo/parallel.hpp"
#include "evo/runner.hpp"
#include "evo/version.hpp"

namespace fs = std::filesystem;

namespace {

fs::path resolve_out_dir(const evo::ExperimentConfig& cfg, const std::string& cli_out) {
    if (!cli_out.empty()) return cli_out;
    if (!cfg.out_dir.empty()) return cfg.out_dir;
    const char* env = std::getenv("EVOMEASURE_OUT");
    const fs::path base = env && *env ? fs::path(env) : fs::path("runs");
    return base / evo::to_string(cfg.kind);
}

int cmd_run(const std::string& config_path, const std::string& out, int threads) {
    evo::set_max_threads(threads);
    evo::ExperimentConfig cfg;
    try {
        cfg = evo::parse_experiment_config(evo::io::read_text_file(config_path));
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return evo::kExitConfigError;
    }
    const auto violations = evo::validate_config(cfg);
    if (!violations.empty()) {
        for (const auto& v : violations) std::cerr << "config violation: " << v << "\n";
        return evo::kExitConfigError;
    }
    const fs::path dir = resolve_out_dir(cfg, out);
    evo::RunResult res;
    try {
        res = evo::run_experiment(cfg, dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return evo::kExitNumerical;
    }
    std::cout << evo::to_string(cfg.kind) << ": "
              << (res.exit_code == evo::kExitPass          ? "PASS"
                  : res.exit_code == evo::kExitCriteriaFail ? "FAIL"
                                                            : "NUMERICAL FAILURE")
              << "  (outputs in " << dir.string() << ")\n";
    if (!res.note.empty()) std::cout << "  " << res.note << "\n";
    return res.exit_code;
}

int cmd_validate(const std::string& config_path) {
    evo::ExperimentConfig cfg;
    try {
        cfg = evo::parse_experiment_config(evo::io::read_text_file(config_path));
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return evo::kExitConfigError;
    }
    const auto violations = evo::validate_config(cfg);
    if (violations.empty()) {
        std::cout << "ok\n";
        return evo::kExitPass;
    }
    for (const auto& v : violations) std::cout << "violation: " << v << "\n";
    return evo::kExitConfigError;
}

int cmd_replay(const std::string& manifest_path, const std::string& out, int threads) {
    evo::set_max_threads(threads);
    fs::path dir = out.empty() ? fs::path(manifest_path).parent_path() / "replay" : fs::path(out);
    evo::ReplayResult rr;
    try {
        rr = evo::replay(manifest_path, dir);
    } catch (const std::exception& e) {
        std::cerr << "replay error: " << e.what() << "\n";
        return evo::kExitConfigError;
    }
    if (rr.ok()) {
        std::cout << "replay ok: all " << "output checksums match (" << dir.string() << ")\n";
        return rr.run.exit_code;
    }
    for (const auto& m : rr.mismatches)
        std::cerr << "checksum mismatch: " << m.path << " expected " << m.expected << " got "
                  << m.actual << "\n";
    return evo::kExitCriteriaFail;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"evomeasure: evolution systems of probability measures for a stochastic "
                 "lattice reaction-diffusion equation"};
    app.set_version_flag("--version", std::string(evo::kToolVersion));
    app.require_subcommand(1);

    std::string config_path, manifest_path, out;
    int threads = 0;

    auto* run = app.add_subcommand("run", "run an experiment from a config file");
    run->add_option("config", config_path, "config file")->required();
    run->add_option("--out", out, "output directory");
    run->add_option("--threads", threads, "cap worker threads (0 = all cores)");

    auto* validate = app.add_subcommand("validate", "validate a config file");
    validate->add_option("config", config_path, "config file")->required();

    auto* rep = app.add_subcommand("replay", "re-run a manifest and compare checksums");
    rep->add_option("manifest", manifest_path, "manifest file")->required();
    rep->add_option("--out", out, "output directory for the replay");
    rep->add_option("--threads", threads, "cap worker threads (0 = all cores)");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return cmd_run(config_path, out, threads);
    if (validate->parsed()) return cmd_validate(config_path);
    if (rep->parsed()) return cmd_replay(manifest_path, out, threads);
    return evo::kExitConfigError;
}
