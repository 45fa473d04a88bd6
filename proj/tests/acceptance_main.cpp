// Acceptance suite: one pass/fail line per criterion, exit 1 on any failure.
//
// Desk-scale profile: I = 20, dt = 1e-3, M = 2000, k = 20, m = 2,
// lambda = nu = 1, p = 3, delta = 1 (admissible epsilon range [0, 0.5]),
// forcing gaussian_decay(a = 1, b = 0.05, support 5), sigma tanh_bounded.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "evo/convergence.hpp"
#include "evo/estimates.hpp"
#include "evo/io.hpp"
#include "evo/measure.hpp"
#include "evo/parallel.hpp"
#include "evo/runner.hpp"
#include "evo/sde.hpp"

using namespace evo;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %2d: %s -- %s\n", pass ? "PASS" : "FAIL", number, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

ModelParams desk_profile(double eps) {
    ModelParams mp;
    mp.lambda = 1.0;
    mp.nu = 1.0;
    mp.p = 3.0;
    mp.delta = 1.0;
    mp.epsilon = eps;
    mp.sigma = DiffusionSpec::tanh_bounded();
    mp.g = ForcingSpec::gaussian(1.0, 0.05, 5);
    mp.trunc_radius = 20;
    return mp;
}

constexpr double kDt = 1e-3;
constexpr std::size_t kM = 2000;
constexpr int kK = 20;
constexpr int kMhor = 2;
constexpr double kTauStep = 0.25;
constexpr std::size_t kSamplesPerNode = 28; // 72 nodes -> 2016 atoms
constexpr std::uint64_t kSeed = 20260810;

std::string fmt(double v) { return io::format_double(v); }

// 1. Deterministic-limit fidelity.
void criterion_1() {
    auto mp = desk_profile(0.0);
    mp.g = ForcingSpec::zero();
    const auto u0 = LatticeState::basis(mp.trunc_radius, 0);
    const double dt = 1e-4;
    const std::size_t steps = grid_steps(0.0, 5.0, dt);
    const WienerPath empty{0.0, dt, 0, 0, std::vector<double>(steps, 0.0)};

    std::vector<double> em_flat;
    em_flat.reserve((steps + 1) * mp.dim());
    integrate_observed(u0, 0.0, steps, dt, mp, empty,
                       [&](std::size_t, double, const std::vector<double>& u) {
                           em_flat.insert(em_flat.end(), u.begin(), u.end());
                       });

    // reference RK4 on the same grid, compared state by state
    double worst = 0.0;
    {
        std::vector<double> u = u0.values;
        const std::size_t n = u.size();
        std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
        for (std::size_t k = 0; k <= steps; ++k) {
            double d = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double e = u[j] - em_flat[k * n + j];
                d += e * e;
            }
            worst = std::max(worst, std::sqrt(d));
            if (k == steps) break;
            detail::drift_into(u, k1, mp);
            for (std::size_t j = 0; j < n; ++j) tmp[j] = u[j] + 0.5 * dt * k1[j];
            detail::drift_into(tmp, k2, mp);
            for (std::size_t j = 0; j < n; ++j) tmp[j] = u[j] + 0.5 * dt * k2[j];
            detail::drift_into(tmp, k3, mp);
            for (std::size_t j = 0; j < n; ++j) tmp[j] = u[j] + dt * k3[j];
            detail::drift_into(tmp, k4, mp);
            for (std::size_t j = 0; j < n; ++j)
                u[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    report(1, "deterministic-limit fidelity (tamed EM vs RK4, dt=1e-4, sup over [0,5])",
           worst <= 1e-4, "sup-norm error = " + fmt(worst) + " <= 1e-4");
}

// 2. Dissipativity at the top admissible intensity with g = 0.
void criterion_2() {
    auto mp = desk_profile(0.5);
    mp.g = ForcingSpec::zero(); // sigma = delta tanh(s), no forcing
    const auto u0 = LatticeState::basis(mp.trunc_radius, 0);
    const auto rep = moment_bound_check(mp, u0, 0.0, {1.0, 5.0, 10.0}, kDt, kM,
                                        rng::derive_seed(kSeed, 2), 0.1);
    bool pass = true;
    std::string detail;
    for (const auto& r : rep.rows) {
        if (r.quantity.rfind("enorm2", 0) != 0) continue;
        const double rhs = r.rhs * 1.1;
        const bool ok = r.lhs_ci_hi <= rhs + 1e-12;
        pass = pass && ok;
        detail += r.quantity + ": " + fmt(r.lhs_ci_hi) + " <= " + fmt(rhs) + "; ";
    }
    report(2, "dissipativity: E||u(t)||^2 <= 1.1 e^{-lambda(t-tau)} ||u0||^2 at eps = 0.5", pass,
           detail);
}

// 3. Moment bound with forcing across the epsilon grid {0, mid, max}.
void criterion_3() {
    const auto base = desk_profile(0.0);
    bool pass = true;
    std::string detail;
    for (double eps : {0.0, 0.25, 0.5}) {
        auto mp = base;
        mp.epsilon = eps;
        const auto rep = moment_bound_check(mp, LatticeState::basis(mp.trunc_radius, 0), 0.0,
                                            {1.0, 5.0, 10.0}, kDt, kM,
                                            rng::derive_seed(kSeed, 30 + std::llround(eps * 100)),
                                            0.1);
        pass = pass && rep.all_pass();
        detail += "eps=" + fmt(eps) + (rep.all_pass() ? " ok; " : " VIOLATED; ");
    }
    report(3, "moment bound with gaussian_decay forcing, c = 2 eps^2, slack 0.1", pass, detail);
}

// 4. Tail decay across the epsilon grid and a compact grid of starts.
void criterion_4() {
    const auto mp = desk_profile(0.0);
    TailCheckInputs in;
    in.u0_set = run_detail::default_u0_grid(mp.trunc_radius);
    in.t = 0.0;
    in.n_list = {4, 8, 12, 16, mp.trunc_radius + 4};
    in.k_list = {10};
    in.eps_grid = {0.0, 0.25, 0.5};
    in.tau_step = 0.5;
    in.dt = kDt;
    in.samples_per_node = 20;
    const auto rep = tail_average_check(mp, in, rng::derive_seed(kSeed, 4), 0.1);

    bool trends = true, zeros = true, bounds = true;
    int n_trend = 0, n_zero = 0;
    for (const auto& r : rep.rows) {
        if (r.quantity.rfind("tail_trend", 0) == 0) {
            trends = trends && r.pass;
            ++n_trend;
        } else if (r.quantity.find("[n=" + std::to_string(mp.trunc_radius + 4) + "]") !=
                   std::string::npos) {
            zeros = zeros && r.pass && r.lhs == 0.0;
            ++n_zero;
        } else {
            bounds = bounds && r.pass;
        }
    }
    report(4, "tail averages decreasing in n, zero beyond the truncation radius",
           trends && zeros && bounds,
           std::to_string(n_trend) + " trend rows, " + std::to_string(n_zero) +
               " beyond-radius rows, decreasing=" + (trends ? "yes" : "NO") + ", zeros=" +
               (zeros ? "exact" : "NO") + ", cutoff-bounds=" + (bounds ? "ok" : "NO"));
}

// 5. KB tightness at delta = 0.05 on an independently seeded measure.
void criterion_5() {
    const auto mp = desk_profile(0.5);
    const double delta = 0.05;
    const auto spec =
        calibrate_compact_set(mp, -static_cast<double>(kMhor), delta, kK, kMhor, kDt,
                              kSamplesPerNode, rng::derive_seed(kSeed, 51), 8, kTauStep);
    const auto fresh = kb_measure(mp, kK, kMhor, kTauStep, kSamplesPerNode,
                                  -static_cast<double>(kMhor), rng::derive_seed(kSeed, 52), kDt);
    const double mass = tightness_mass(fresh, spec);
    report(5, "KB tightness: calibrated compact set at delta = 0.05 on a fresh measure",
           mass < delta,
           "mass outside = " + fmt(mass) + " < " + fmt(delta) + " (C = " + fmt(spec.C) +
               ", n_8 = " + std::to_string(spec.levels.back().n) + ")");
}

// 6. Evolution property of a KB family; exact zero defect in the trivial case.
void criterion_6() {
    const auto mp = desk_profile(0.4);
    const std::vector<double> times{-2.0, 0.0, 3.0};
    const auto fam = evolution_family(mp, kMhor, kK, times, kDt, kSamplesPerNode,
                                      rng::derive_seed(kSeed, 61), kTauStep);
    // all three ordered pairs of the three construction times
    bool pass = true;
    std::string detail;
    const std::vector<std::pair<std::size_t, std::size_t>> pairs{{0, 1}, {0, 2}, {1, 2}};
    for (std::size_t j = 0; j < pairs.size(); ++j) {
        const auto d = evolution_defect(fam, pairs[j].first, pairs[j].second, kDt, 1,
                                        rng::derive_seed(kSeed, 62 + j));
        pass = pass && !d.rejected(0.01);
        detail += "(tau=" + fmt(d.tau) + ",t=" + fmt(d.t) + "): p_energy=" + fmt(d.energy_p) +
                  " p_panel=" + fmt(d.min_panel_p) + "; ";
    }

    auto trivial = desk_profile(0.0);
    trivial.g = ForcingSpec::zero();
    const auto fam0 = evolution_family(trivial, 1, 4, {-1.0, 0.0, 1.0}, kDt, 4,
                                       rng::derive_seed(kSeed, 63), 0.5);
    const auto d0 = evolution_defect(fam0, 0, 2, kDt, 1, rng::derive_seed(kSeed, 64));
    const bool zero_ok = d0.energy_stat == 0.0 && !d0.rejected(0.01);
    pass = pass && zero_ok;
    report(6, "evolution property: Q_{tau,t} mu_tau = mu_t (permutation tests, alpha = 0.01)",
           pass, detail + (zero_ok ? "trivial family defect exactly 0" : "TRIVIAL DEFECT NONZERO"));
}

// 7. Chapman-Kolmogorov.
void criterion_7() {
    const auto mp = desk_profile(0.4);
    const auto u0 = LatticeState::basis(mp.trunc_radius, 0, 0.5);
    const auto rep = chapman_kolmogorov_check(mp, 0.0, 1.0, 2.0, u0, kM, kDt,
                                              rng::derive_seed(kSeed, 71));
    auto det = desk_profile(0.0);
    const auto rep0 = chapman_kolmogorov_check(det, 0.0, 1.0, 2.0, u0, 8, kDt,
                                               rng::derive_seed(kSeed, 72));
    const bool pass = !rep.rejected(0.01) && rep0.exact_equal;
    report(7, "Chapman-Kolmogorov: one-stage vs two-stage laws (alpha = 0.01)", pass,
           "p_energy=" + fmt(rep.energy_p) + " p_panel=" + fmt(rep.min_panel_p) +
               (rep0.exact_equal ? ", eps=0 exactly equal" : ", EPS=0 NOT EQUAL"));
}

// 8. CIP estimates shrink with the offset and vanish at offset zero.
void criterion_8() {
    const auto mp = desk_profile(0.4);
    const auto K = default_K_grid(mp.trunc_radius, 16, rng::derive_seed(kSeed, 81));
    const double threshold = 0.1;
    const std::size_t M = 1000;
    std::vector<double> est, se;
    std::string detail;
    for (double off : {0.1, 0.05, 0.025}) {
        const auto c = cip_probability(mp, mp.epsilon - off, 0.0, 1.0, threshold, K, M, kDt,
                                       rng::derive_seed(kSeed, 82));
        est.push_back(c.sup_estimate);
        se.push_back(std::sqrt(c.sup_estimate * (1.0 - c.sup_estimate) / static_cast<double>(M)));
        detail += "P(off=" + fmt(off) + ")=" + fmt(c.sup_estimate) + " ";
    }
    const auto zero = cip_probability(mp, mp.epsilon, 0.0, 1.0, threshold, K, M, kDt,
                                      rng::derive_seed(kSeed, 82));
    const auto trend = stats::monotone_decreasing_trend(est, se);
    const bool pass = trend.pass && zero.sup_estimate == 0.0;
    report(8, "CIP: coupled exceedance probabilities nonincreasing in the offset", pass,
           detail + "P(off=0)=" + fmt(zero.sup_estimate) +
               (trend.pass ? " (trend ok)" : " (TREND FAILS)"));
}

// 9. Limit stability: the headline experiment.
void criterion_9() {
    const auto mp = desk_profile(0.4);
    StabilityOptions opt;
    opt.m = kMhor;
    opt.k = kK;
    opt.tau_step = kTauStep;
    opt.dt = kDt;
    opt.samples_per_node = kSamplesPerNode;
    std::vector<double> eps_seq;
    for (int n = 1; n <= 4; ++n) eps_seq.push_back(mp.epsilon * (1.0 - std::pow(2.0, -n)));
    const auto rep = limit_stability_experiment(mp, eps_seq, {-2.0, 0.0, 3.0}, opt,
                                                rng::derive_seed(kSeed, 91));
    std::string detail = "energy distances per time:";
    for (std::size_t ti = 0; ti < rep.times.size(); ++ti) {
        detail += " t=" + fmt(rep.times[ti]) + ":[";
        for (std::size_t ni = 0; ni < eps_seq.size(); ++ni) {
            detail += fmt(rep.distances[ni * rep.times.size() + ti].energy);
            detail += ni + 1 < eps_seq.size() ? "," : "]";
        }
    }
    detail += rep.limit_family_evolves ? "; limit family evolves" : "; LIMIT DEFECT REJECTED";
    report(9, "limit stability: distances to the eps0 family decrease, limit family evolves",
           rep.pass(), detail);
}

// 10. Reproducibility: manifests replay bit-exactly under any thread count.
void criterion_10() {
    const auto base = fs::temp_directory_path() / "evo_acceptance" /
                      ("rep_" + std::to_string(::getpid()));
    fs::remove_all(base);
    const std::string cfg_text =
        "kind = \"kb_measure\"\nseed = 4242\n"
        "model.lambda = 1\nmodel.nu = 1\nmodel.p = 3\nmodel.delta = 1\n"
        "model.epsilon = 0.4\nmodel.trunc_radius = 10\n"
        "model.sigma.family = \"tanh_bounded\"\n"
        "model.g.family = \"gaussian_decay\"\nmodel.g.params.a = 1\n"
        "model.g.params.b = 0.05\nmodel.g.params.support_radius = 5\n"
        "run.k = 6\nrun.m = 1\nrun.tau_grid_step = 0.25\nrun.dt = 0.005\n"
        "run.samples_per_node = 10\n";
    const auto cfg = parse_experiment_config(cfg_text);

    set_max_threads(2);
    const auto first = run_experiment(cfg, base / "first");
    bool pass = first.exit_code == kExitPass;
    std::string detail;
    for (int threads : {1, 2}) {
        set_max_threads(threads);
        const auto rr = replay(first.manifest_path, base / ("replay_t" + std::to_string(threads)));
        pass = pass && rr.ok();
        detail += "threads=" + std::to_string(threads) + (rr.ok() ? " ok; " : " MISMATCH; ");
    }
    set_max_threads(0);

    // CLI contract: run/replay/validate exit codes through the binary
#ifdef EVOMEASURE_BIN
    const std::string bin = EVOMEASURE_BIN;
    io::write_text_file(base / "config.txt", cfg_text);
    auto shell = [](const std::string& cmd) {
        const int st = std::system(cmd.c_str());
        return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    };
    const int run_code = shell(bin + " run " + (base / "config.txt").string() + " --out " +
                               (base / "cli").string() + " --threads 2 > /dev/null 2>&1");
    const int replay_code = shell(bin + " replay " + (base / "cli" / "manifest.txt").string() +
                                  " --threads 1 --out " + (base / "cli_replay").string() +
                                  " > /dev/null 2>&1");
    io::write_text_file(base / "bad.txt", "kind = \"simulate\"\nmodel.p = 2\n");
    const int bad_code = shell(bin + " validate " + (base / "bad.txt").string() +
                               " > /dev/null 2>&1");
    pass = pass && run_code == 0 && replay_code == 0 && bad_code == 2;
    detail += "cli run=" + std::to_string(run_code) + " replay=" + std::to_string(replay_code) +
              " validate(bad)=" + std::to_string(bad_code);
#endif
    report(10, "reproducibility: bit-exact replay across thread counts, CLI exit codes", pass,
           detail);
    fs::remove_all(base);
}

} // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_10();
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%d/10 criteria passed in %.1f s\n", 10 - g_failures, elapsed);
    return g_failures == 0 ? 0 : 1;
}
