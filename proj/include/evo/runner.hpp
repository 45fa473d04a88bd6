#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "evo/config.hpp"
#include "evo/convergence.hpp"
#include "evo/estimates.hpp"
#include "evo/io.hpp"
#include "evo/manifest.hpp"
#include "evo/measure.hpp"
#include "evo/sde.hpp"
#include "evo/stats.hpp"

namespace evo {

// Exit-code contract: 0 pass, 1 criteria fail, 2 config error, 3 numerical
// failure.
inline constexpr int kExitPass = 0;
inline constexpr int kExitCriteriaFail = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitNumerical = 3;

struct RunResult {
    int exit_code = kExitPass;
    std::filesystem::path out_dir;
    std::filesystem::path manifest_path;
    std::string note;
};

namespace run_detail {

namespace fs = std::filesystem;

struct Emitter {
    fs::path dir;
    std::vector<std::string> files;

    void write(const std::string& rel, const std::string& text) {
        io::write_text_file(dir / rel, text);
        files.push_back(rel);
    }
};

inline std::string fd(double v) { return io::format_double(v); }

inline std::string bound_report_csv(const BoundReport& rep) {
    io::CsvWriter csv({"quantity", "lhs", "lhs_ci_lo", "lhs_ci_hi", "rhs", "pass"});
    for (const auto& r : rep.rows)
        csv.add_row({r.quantity, fd(r.lhs), fd(r.lhs_ci_lo), fd(r.lhs_ci_hi), fd(r.rhs),
                     r.pass ? "1" : "0"});
    return csv.str();
}

inline std::string constants_csv(const BoundReport& rep) {
    io::CsvWriter csv({"constant", "value"});
    for (const auto& [name, v] : rep.constants) csv.add_row({name, fd(v)});
    return csv.str();
}

struct CriterionRow {
    std::string criterion;
    double value = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    bool pass = false;
};

inline std::string criteria_csv(const std::vector<CriterionRow>& rows) {
    io::CsvWriter csv({"criterion", "value", "ci_lo", "ci_hi", "pass"});
    for (const auto& r : rows)
        csv.add_row({r.criterion, fd(r.value), fd(r.ci_lo), fd(r.ci_hi), r.pass ? "1" : "0"});
    return csv.str();
}

inline std::string measure_csv(const EmpiricalMeasure& mu) {
    const int I = mu.radius();
    std::vector<std::string> header{"weight"};
    for (int i = -I; i <= I; ++i) header.push_back("site_" + std::to_string(i));
    io::CsvWriter csv(std::move(header));
    for (std::size_t j = 0; j < mu.size(); ++j) {
        std::vector<std::string> row{fd(mu.weights[j])};
        for (double v : mu.atoms[j].values) row.push_back(fd(v));
        csv.add_row(std::move(row));
    }
    return csv.str();
}

inline std::string trajectory_csv(const Trajectory& traj) {
    io::CsvWriter csv({"t", "i", "value"});
    const int I = traj.params.trunc_radius;
    for (std::size_t k = 0; k < traj.times.size(); ++k)
        for (int i = -I; i <= I; ++i)
            csv.add_row({fd(traj.times[k]), std::to_string(i), fd(traj.states[k].site(i))});
    return csv.str();
}

inline std::string provenance_text(const EmpiricalMeasure& mu) {
    ConfigMap c;
    c.set_double("provenance.time", mu.prov.time);
    c.set_int("provenance.k", mu.prov.k);
    c.set_int("provenance.m", mu.prov.m);
    c.set_double("provenance.tau_step", mu.prov.tau_step);
    c.set_int("provenance.samples_per_node", static_cast<std::int64_t>(mu.prov.samples_per_node));
    c.set_u64("provenance.seed", mu.prov.seed);
    c.set_int("provenance.atoms", static_cast<std::int64_t>(mu.size()));
    return c.serialize();
}

inline LatticeState u0_from_config(const ConfigMap& raw, int radius, const std::string& prefix) {
    const std::string kind = raw.get_string(prefix + ".kind", "zero");
    if (kind == "zero") return LatticeState(radius);
    if (kind == "basis")
        return LatticeState::basis(radius, static_cast<int>(raw.get_int(prefix + ".site", 0)),
                                   raw.get_double(prefix + ".amp", 1.0));
    throw std::runtime_error("unknown initial state kind: " + kind);
}

// Epsilon grid {0, mid, max} of the admissible range scaled by the knob list.
inline std::vector<double> eps_grid_from(const ConfigMap& raw, const ModelParams& mp) {
    const auto scale = raw.get_double_list("run.eps_scale_grid", {0.0, 0.5, 1.0});
    std::vector<double> grid;
    for (double s : scale) grid.push_back(s * mp.epsilon_max());
    return grid;
}

// Default 4-point compact grid of initial states.
inline std::vector<LatticeState> default_u0_grid(int radius) {
    std::vector<LatticeState> grid;
    grid.emplace_back(radius);
    grid.push_back(LatticeState::basis(radius, 0, 1.0));
    grid.push_back(LatticeState::basis(radius, 2, -0.8));
    LatticeState bump(radius);
    bump.site(-1) = 0.5;
    bump.site(0) = 0.7;
    bump.site(1) = 0.5;
    grid.push_back(std::move(bump));
    return grid;
}

inline std::size_t samples_per_node_from(const ConfigMap& raw, int k, int m, double tau_step) {
    if (raw.has("run.samples_per_node"))
        return static_cast<std::size_t>(raw.get_int("run.samples_per_node"));
    const auto nodes = static_cast<double>(std::llround((k - m) / tau_step));
    const auto M = static_cast<double>(raw.get_int("run.M", 2000));
    const double spn = std::max(1.0, std::round(M / std::max(1.0, nodes)));
    return static_cast<std::size_t>(spn);
}

// ---- experiment bodies; each returns pass/fail ----------------------------

inline bool run_simulate(const ExperimentConfig& cfg, Emitter& em) {
    const auto& raw = cfg.raw;
    const double tau = raw.get_double("run.tau", 0.0);
    const double t_end = raw.get_double("run.t_end", 5.0);
    const double dt = raw.get_double("run.dt", 1e-3);
    const LatticeState u0 = u0_from_config(raw, cfg.model.trunc_radius, "run.u0");
    const Trajectory traj = simulate(u0, tau, t_end, dt, cfg.model, cfg.seed, 0);
    em.write("trajectory.csv", trajectory_csv(traj));
    if (raw.get_bool("run.binary", false)) {
        const std::size_t rows = traj.times.size();
        const std::size_t cols = 1 + cfg.model.dim();
        std::vector<double> payload;
        payload.reserve(rows * cols);
        for (std::size_t k = 0; k < rows; ++k) {
            payload.push_back(traj.times[k]);
            payload.insert(payload.end(), traj.states[k].values.begin(),
                           traj.states[k].values.end());
        }
        io::write_frame(em.dir / "trajectory.bin", {rows, cols}, payload);
        em.files.push_back("trajectory.bin");
    }
    return true;
}

inline bool run_kb_measure(const ExperimentConfig& cfg, Emitter& em) {
    const auto& raw = cfg.raw;
    const int k = static_cast<int>(raw.get_int("run.k", 20));
    const int m = static_cast<int>(raw.get_int("run.m", 2));
    const double tau_step = raw.get_double("run.tau_grid_step", 0.25);
    const double dt = raw.get_double("run.dt", 1e-3);
    const std::size_t spn = samples_per_node_from(raw, k, m, tau_step);
    const double t_eval = raw.get_double("run.t_eval", -static_cast<double>(m));
    const EmpiricalMeasure mu = kb_measure(cfg.model, k, m, tau_step, spn, t_eval, cfg.seed, dt);
    em.write("measure.csv", measure_csv(mu));
    em.write("provenance.txt", provenance_text(mu));
    if (raw.get_bool("run.binary", false)) {
        // frame rows: weight followed by the site values
        const std::size_t cols = 1 + cfg.model.dim();
        std::vector<double> payload;
        payload.reserve(mu.size() * cols);
        for (std::size_t j = 0; j < mu.size(); ++j) {
            payload.push_back(mu.weights[j]);
            payload.insert(payload.end(), mu.atoms[j].values.begin(), mu.atoms[j].values.end());
        }
        io::write_frame(em.dir / "measure.bin", {mu.size(), cols}, payload);
        em.files.push_back("measure.bin");
    }
    return true;
}

inline bool run_moment_check(const ExperimentConfig& cfg, Emitter& em) {
    const auto& raw = cfg.raw;
    const double tau = raw.get_double("run.tau", 0.0);
    const auto offsets = raw.get_double_list("run.t_offsets", {1.0, 5.0, 10.0});
    const double dt = raw.get_double("run.dt", 1e-3);
    const std::size_t M = static_cast<std::size_t>(raw.get_int("run.M", 2000));
    const double slack = raw.get_double("run.slack", 0.1);
    const LatticeState u0 = u0_from_config(raw, cfg.model.trunc_radius, "run.u0");
    std::vector<double> ts;
    for (double o : offsets) ts.push_back(tau + o);

    BoundReport merged;
    merged.params = cfg.model;
    merged.slack = slack;
    bool pass = true;
    for (double eps : eps_grid_from(raw, cfg.model)) {
        ModelParams mp = cfg.model;
        mp.epsilon = eps;
        const auto rep = moment_bound_check(mp, u0, tau, ts, dt, M,
                                            rng::derive_seed(cfg.seed, std::llround(eps * 1e9)),
                                            slack);
        for (auto row : rep.rows) {
            row.quantity += "[eps=" + detail::fmt_num(eps) + "]";
            merged.rows.push_back(std::move(row));
        }
        if (merged.constants.empty()) merged.constants = rep.constants;
        pass = pass && rep.all_pass();
    }
    em.write("bounds.csv", bound_report_csv(merged));
    em.write("constants.csv", constants_csv(merged));
    return pass;
}

inline bool run_time_average_check(const ExperimentConfig& cfg, Emitter& em) {
    const auto& raw = cfg.raw;
    const double t = raw.get_double("run.t", 0.0);
    const auto k_list64 = raw.get_int_list("run.k_list", {5, 10, 20});
    std::vector<int> k_list(k_list64.begin(), k_list64.end());
    const double tau_step = raw.get_double("run.tau_grid_step", 0.5);
    const double dt = raw.get_double("run.dt", 1e-3);
    const std::size_t spn =
        static_cast<std::size_t>(raw.get_int("run.samples_per_node", 20));
    const double slack = raw.get_double("run.slack", 0.1);
    const LatticeState u0 = u0_from_config(raw, cfg.model.trunc_radius, "run.u0");

    auto rep = time_average_bound_check(cfg.model, u0, t, k_list, eps_grid_from(raw, cfg.model),
                                        tau_step, dt, spn, cfg.seed, slack);
    bool pass = rep.all_pass();

    // Transient decay in k, only meaningful with a nonzero start.
    if (sq_norm(u0) > 0.0 && k_list.size() >= 2) {
        for (double eps : eps_grid_from(raw, cfg.model)) {
            std::vector<double> est, se;
            for (int k : k_list) {
                const std::string tag =
                    "time_avg[k=" + std::to_string(k) + ",eps=" + detail::fmt_num(eps) + "]";
                for (const auto& row : rep.rows)
                    if (row.quantity == tag) {
                        est.push_back(row.lhs);
                        se.push_back(0.5 * (row.lhs_ci_hi - row.lhs_ci_lo) / 1.96);
                    }
            }
            if (est.size() >= 2) {
                const auto trend = stats::monotone_decreasing_trend(est, se);
                rep.rows.push_back({"time_avg_trend[eps=" + detail::fmt_num(eps) + "]",
                                    trend.net_decrease, 0.0, 0.0, 0.0, trend.pass});
                pass = pass && trend.pass;
            }
        }
    }
    em.write("bounds.csv", bound_report_csv(rep));
    em.write("constants.csv", constants_csv(rep));
    return pass;
}

inline bool run_tail_check(const ExperimentConfig& cfg, Emitter& em) {
    const auto& raw = cfg.raw;
    TailCheckInputs in;
    in.t = raw.get_double("run.t", 0.0);
    const auto n64 = raw.get_int_list("run.n_list", {4, 8, 12, 16});
    in.n_list.assign(n64.begin(), n64.end());
    if (raw.get_bool("run.include_beyond_radius", true))
        in.n_list.push_back(cfg.model.trunc_radius + 4);
    const auto k64 = raw.get_int_list("run.k_list", {10});
    in.k_list.assign(k64.begin(), k64.end());
    in.eps_grid = eps_grid_from(raw, cfg.model);
    in.tau_step = raw.get_double("run.tau_grid_step", 0.5);
    in.dt = raw.get_double("run.dt", 1e-3);
    in.samples_per_node = static_cast<std::size_t>(raw.get_int("run.samples_per_node", 20));
    in.u0_set = default_u0_grid(cfg.model.trunc_radius);
    const double slack = raw.get_double("run.slack", 0.1);

    const auto rep = tail_average_check(cfg.model, in, cfg.seed, slack);
    em.write("bounds.csv", bound_report_csv(rep));
    em.write("constants.csv", constants_csv(rep));
    return rep.all_pass();
}

inline bool run_tightness(const ExperimentConfig& cfg, Emitter& em) {
    const auto& raw = cfg.raw;
    const int k = static_cast<int>(raw.get_int("run.k", 20));
    const int m = static_cast<int>(raw.get_int("run.m", 2));
    const double tau_step = raw.get_double("run.tau_grid_step", 0.25);
    const double dt = raw.get_double("run.dt", 1e-3);
    const std::size_t spn = samples_per_node_from(raw, k, m, tau_step);
    const double delta = raw.get_double("run.delta", 0.05);
    const int levels = static_cast<int>(raw.get_int("run.levels", 8));
    const double t_eval = raw.get_double("run.t_eval", -static_cast<double>(m));

    const CompactSetSpec spec = calibrate_compact_set(
        cfg.model, t_eval, delta, k, m, dt, spn, rng::derive_seed(cfg.seed, 0x63616cull), levels,
        tau_step);
    io::CsvWriter spec_csv({"level", "n", "radius"});
    for (const auto& lv : spec.levels)
        spec_csv.add_row({std::to_string(lv.level), std::to_string(lv.n), fd(lv.radius)});
    em.write("compact_spec.csv", spec_csv.str());

    // Holdout: an independently seeded KB measure must still fit.
    const EmpiricalMeasure fresh = kb_measure(cfg.model, k, m, tau_step, spn,
                                              -static_cast<double>(m),
                                              rng::derive_seed(cfg.seed, 0x667265ull), dt);
    const double mass = tightness_mass(fresh, spec);

    BoundReport rep;
    rep.params = cfg.model;
    rep.slack = 0.0;
    rep.add_constant("C", spec.C);
    rep.add_constant("delta", delta);
    rep.rows.push_back({"tightness_mass", mass, mass, mass, delta, mass < delta});
    em.write("bounds.csv", bound_report_csv(rep));
    em.write("constants.csv", constants_csv(rep));
    return rep.all_pass();
}

inline bool run_cip(const ExperimentConfig& cfg, Emitter& em) {
    const auto& raw = cfg.raw;
    const double tau = raw.get_double("run.tau", 0.0);
    const double t = raw.get_double("run.t", 2.0);
    const double dt = raw.get_double("run.dt", 1e-3);
    const double threshold = raw.get_double("run.threshold", 0.1);
    const std::size_t M = static_cast<std::size_t>(raw.get_int("run.M", 1000));
    const bool uniform = raw.get_bool("run.uniform_in_t", false);
    const auto offsets = raw.get_double_list("run.offsets", {0.1, 0.05, 0.025});
    const std::size_t grid_n = static_cast<std::size_t>(raw.get_int("run.K_points", 16));
    const auto K =
        default_K_grid(cfg.model.trunc_radius, grid_n, rng::derive_seed(cfg.seed, 0x4bull));

    std::vector<CriterionRow> rows;
    std::vector<double> est, se;
    bool pass = true;
    for (double off : offsets) {
        const double eps = cfg.model.epsilon - off;
        if (eps < 0.0 || eps > cfg.model.epsilon_max())
            throw std::runtime_error("cip: offset " + fd(off) + " leaves the admissible range");
        const auto c = cip_probability(cfg.model, eps, tau, t, threshold, K, M, dt,
                                       rng::derive_seed(cfg.seed, 0x636970ull), uniform);
        rows.push_back({"cip[offset=" + detail::fmt_num(off) + "]", c.sup_estimate, c.sup_ci.lo,
                        c.sup_ci.hi, true});
        est.push_back(c.sup_estimate);
        se.push_back(std::sqrt(c.sup_estimate * (1.0 - c.sup_estimate) /
                               static_cast<double>(M)));
    }
    // offset 0: coupled paths coincide, so the estimate must be exactly zero.
    const auto c0 = cip_probability(cfg.model, cfg.model.epsilon, tau, t, threshold, K, M, dt,
                                    rng::derive_seed(cfg.seed, 0x636970ull), uniform);
    const bool zero_ok = c0.sup_estimate == 0.0;
    rows.push_back({"cip[offset=0]", c0.sup_estimate, c0.sup_ci.lo, c0.sup_ci.hi, zero_ok});
    pass = pass && zero_ok;

    const auto trend = stats::monotone_decreasing_trend(est, se);
    rows.push_back({"cip_trend", trend.net_decrease, 0.0, 0.0, trend.pass});
    pass = pass && trend.pass;

    em.write("report.csv", criteria_csv(rows));
    return pass;
}

inline bool run_feller(const ExperimentConfig& cfg, Emitter& em) {
    const auto& raw = cfg.raw;
    const double tau = raw.get_double("run.tau", 0.0);
    const double t = raw.get_double("run.t", 2.0);
    const double dt = raw.get_double("run.dt", 1e-3);
    const std::size_t M = static_cast<std::size_t>(raw.get_int("run.M", 2000));
    const auto gaps_h = raw.get_double_list("run.pair_gaps", {0.2, 0.1, 0.05});
    const LatticeState base = u0_from_config(raw, cfg.model.trunc_radius, "run.u0");

    std::vector<std::pair<LatticeState, LatticeState>> pairs;
    for (double h : gaps_h) {
        LatticeState shifted = base;
        shifted.site(0) += h;
        pairs.emplace_back(base, shifted);
    }
    const auto panel = standard_panel();
    const auto rep = feller_probe(cfg.model, tau, t, pairs, panel, M, dt, cfg.seed);

    std::vector<CriterionRow> rows;
    bool pass = true;
    for (const auto& r : rep.rows)
        rows.push_back({"feller_gap[pair=" + std::to_string(r.pair_index) + "," + r.function + "]",
                        r.gap, r.ci.lo, r.ci.hi, true});
    for (std::size_t q = 0; q < panel.size(); ++q) {
        std::vector<double> est, se;
        bool below_resolution = true;
        for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
            const auto& r = rep.rows[pi * panel.size() + q];
            est.push_back(r.gap);
            se.push_back(r.ci.half_width() / 1.96);
            below_resolution = below_resolution && r.gap <= 1.6449 * se.back();
        }
        // a gap profile already indistinguishable from zero has nothing to
        // trend; that is the continuity limit, not a violation
        const auto trend = stats::monotone_decreasing_trend(est, se);
        const bool ok = trend.pass || below_resolution;
        rows.push_back({"feller_trend[" + panel[q].name + "]", trend.net_decrease, 0.0, 0.0, ok});
        pass = pass && ok;
    }
    em.write("report.csv", criteria_csv(rows));
    return pass;
}

inline bool run_ck_check(const ExperimentConfig& cfg, Emitter& em) {
    const auto& raw = cfg.raw;
    const double tau = raw.get_double("run.tau", 0.0);
    const double r = raw.get_double("run.r", 1.0);
    const double t = raw.get_double("run.t", 2.0);
    const double dt = raw.get_double("run.dt", 1e-3);
    const double alpha = raw.get_double("run.alpha", 0.01);
    const std::size_t M = static_cast<std::size_t>(raw.get_int("run.M", 2000));
    const LatticeState u0 = u0_from_config(raw, cfg.model.trunc_radius, "run.u0");

    const auto rep = chapman_kolmogorov_check(cfg.model, tau, r, t, u0, M, dt, cfg.seed);
    const double panel_alpha =
        rep.panel_count > 0 ? alpha / static_cast<double>(rep.panel_count) : alpha;
    std::vector<CriterionRow> rows;
    rows.push_back({"ck_exact_equal", rep.exact_equal ? 1.0 : 0.0, 0.0, 0.0, true});
    rows.push_back({"ck_energy_p", rep.energy_p, 0.0, 0.0, rep.exact_equal || rep.energy_p >= alpha});
    rows.push_back({"ck_min_panel_p", rep.min_panel_p, 0.0, 0.0,
                    rep.exact_equal || rep.min_panel_p >= panel_alpha});
    em.write("report.csv", criteria_csv(rows));
    return !rep.rejected(alpha);
}

inline bool run_limit_stability(const ExperimentConfig& cfg, Emitter& em) {
    const auto& raw = cfg.raw;
    StabilityOptions opt;
    opt.m = static_cast<int>(raw.get_int("run.m", 2));
    opt.k = static_cast<int>(raw.get_int("run.k", 20));
    opt.tau_step = raw.get_double("run.tau_grid_step", 0.25);
    opt.dt = raw.get_double("run.dt", 1e-3);
    opt.samples_per_node = samples_per_node_from(raw, opt.k, opt.m, opt.tau_step);
    opt.defect_replicas = static_cast<std::size_t>(raw.get_int("run.replicas", 1));
    opt.alpha = raw.get_double("run.alpha", 0.01);

    const double md = -static_cast<double>(opt.m);
    const auto times = raw.get_double_list("run.times", {md, md + 2.0, md + 5.0});
    const int n_count = static_cast<int>(raw.get_int("run.n_count", 4));
    std::vector<double> eps_seq;
    for (int n = 1; n <= n_count; ++n)
        eps_seq.push_back(cfg.model.epsilon * (1.0 - std::pow(2.0, -n)));

    const auto rep = limit_stability_experiment(cfg.model, eps_seq, times, opt, cfg.seed);

    std::vector<CriterionRow> rows;
    for (const auto& d : rep.distances)
        rows.push_back({"energy_dist[eps=" + detail::fmt_num(d.epsilon) +
                            ",t=" + detail::fmt_num(d.time) + "]",
                        d.energy, d.energy - 1.96 * d.energy_se, d.energy + 1.96 * d.energy_se,
                        true});
    for (std::size_t ti = 0; ti < rep.times.size(); ++ti)
        rows.push_back({"distance_trend[t=" + detail::fmt_num(rep.times[ti]) + "]",
                        rep.trend_per_time[ti].net_decrease, 0.0, 0.0,
                        rep.trend_per_time[ti].pass});
    for (const auto& d : rep.limit_defects)
        rows.push_back({"evolution_defect_p[tau=" + detail::fmt_num(d.tau) +
                            ",t=" + detail::fmt_num(d.t) + "]",
                        std::min(d.energy_p, d.min_panel_p), 0.0, 0.0, !d.rejected(opt.alpha)});
    rows.push_back({"limit_stability", rep.pass() ? 1.0 : 0.0, 0.0, 0.0, rep.pass()});
    em.write("report.csv", criteria_csv(rows));
    return rep.pass();
}

} // namespace run_detail

// Executes the configured experiment into out_dir, writing data files plus a
// replayable manifest.
inline RunResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    const auto t_start = std::chrono::steady_clock::now();
    RunManifest manifest;
    manifest.kind = to_string(cfg.kind);
    manifest.started_utc = utc_now_string();
    manifest.config = cfg.raw;

    RunResult result;
    result.out_dir = out_dir;
    std::filesystem::create_directories(out_dir);
    run_detail::Emitter em{out_dir, {}};

    bool pass = false;
    try {
        switch (cfg.kind) {
            case ExperimentKind::simulate: pass = run_detail::run_simulate(cfg, em); break;
            case ExperimentKind::kb_measure: pass = run_detail::run_kb_measure(cfg, em); break;
            case ExperimentKind::moment_check: pass = run_detail::run_moment_check(cfg, em); break;
            case ExperimentKind::time_average_check:
                pass = run_detail::run_time_average_check(cfg, em);
                break;
            case ExperimentKind::tail_check: pass = run_detail::run_tail_check(cfg, em); break;
            case ExperimentKind::tightness: pass = run_detail::run_tightness(cfg, em); break;
            case ExperimentKind::cip: pass = run_detail::run_cip(cfg, em); break;
            case ExperimentKind::feller: pass = run_detail::run_feller(cfg, em); break;
            case ExperimentKind::ck_check: pass = run_detail::run_ck_check(cfg, em); break;
            case ExperimentKind::limit_stability:
                pass = run_detail::run_limit_stability(cfg, em);
                break;
        }
        result.exit_code = pass ? kExitPass : kExitCriteriaFail;
    } catch (const BlowupError& e) {
        result.exit_code = kExitNumerical;
        result.note = e.what();
    } catch (const AggregateBlowupError& e) {
        result.exit_code = kExitNumerical;
        result.note = e.what();
    } catch (const CalibrationError& e) {
        result.exit_code = kExitCriteriaFail;
        result.note = e.what();
    }

    manifest.status = result.exit_code;
    manifest.duration_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    for (const auto& rel : em.files) manifest.outputs.push_back(record_output(out_dir, rel));
    write_manifest(out_dir, manifest);
    result.manifest_path = out_dir / "manifest.txt";
    return result;
}

struct ReplayMismatch {
    std::string path;
    std::uint64_t expected = 0;
    std::uint64_t actual = 0;
};

struct ReplayResult {
    RunResult run;
    std::vector<ReplayMismatch> mismatches;
    bool ok() const { return mismatches.empty(); }
};

// Re-executes the embedded config into a fresh directory and compares every
// recorded output checksum.
inline ReplayResult replay(const std::filesystem::path& manifest_path,
                           const std::filesystem::path& out_dir) {
    const RunManifest m = load_manifest(manifest_path);
    ExperimentConfig cfg;
    cfg.raw = m.config;
    cfg.kind = experiment_kind_from(cfg.raw.get_string("kind"));
    cfg.model = model_params_from(cfg.raw);
    cfg.seed = cfg.raw.get_u64("seed", 1);

    ReplayResult rr;
    rr.run = run_experiment(cfg, out_dir);
    for (const auto& rec : m.outputs) {
        const auto path = out_dir / rec.path;
        if (!std::filesystem::exists(path)) {
            rr.mismatches.push_back({rec.path, rec.fnv64, 0});
            continue;
        }
        const std::uint64_t actual = io::checksum_file(path);
        if (actual != rec.fnv64) rr.mismatches.push_back({rec.path, rec.fnv64, actual});
    }
    return rr;
}

} // namespace evo
