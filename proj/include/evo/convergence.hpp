#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "evo/estimates.hpp"
#include "evo/lattice.hpp"
#include "evo/measure.hpp"
#include "evo/sde.hpp"
#include "evo/stats.hpp"

namespace evo {

// ---------------------------------------------------------------------------
// Convergence-in-probability estimation with coupled (shared-path) solutions.
// ---------------------------------------------------------------------------

struct CipGridRow {
    std::size_t grid_index = 0;
    double estimate = 0.0;
    stats::Interval ci;
};

struct CipEstimate {
    double epsilon = 0.0;
    double epsilon0 = 0.0;
    double tau = 0.0;
    double t = 0.0;
    double threshold = 0.0;
    bool uniform_in_t = false;
    std::vector<CipGridRow> per_start;
    double sup_estimate = 0.0; // max over the grid
    stats::Interval sup_ci;
};

// Estimates sup_{x in K} P(||X^eps(t,tau,x) - X^eps0(t,tau,x)|| >= threshold)
// using the same Brownian path for both intensities. With uniform_in_t the
// event is sup over grid times in [tau, t].
inline CipEstimate cip_probability(const ModelParams& params0, double epsilon, double tau,
                                   double t, double threshold,
                                   const std::vector<LatticeState>& K_grid, std::size_t M,
                                   double dt, std::uint64_t seed, bool uniform_in_t = false) {
    params0.validate();
    ModelParams pe = params0;
    pe.epsilon = epsilon;
    pe.validate();
    if (K_grid.empty()) throw std::invalid_argument("cip_probability: empty K grid");
    if (M < 1) throw std::invalid_argument("cip_probability: M must be >= 1");
    if (!(threshold > 0.0)) throw std::invalid_argument("cip_probability: threshold must be > 0");

    const std::size_t steps = grid_steps(tau, t, dt);
    const std::uint64_t sim_seed = rng::derive_seed(seed, 0x636970ull);
    CipEstimate out;
    out.epsilon = epsilon;
    out.epsilon0 = params0.epsilon;
    out.tau = tau;
    out.t = t;
    out.threshold = threshold;
    out.uniform_in_t = uniform_in_t;

    const std::size_t total = K_grid.size() * M;
    std::vector<int> exceed(total, 0);
    parallel_for(total, [&](std::size_t idx) {
        const std::size_t xi = idx / M;
        const WienerPath path = WienerPath::generate(sim_seed, idx, tau, dt, steps);
        double worst = 0.0;
        integrate_coupled_observed(K_grid[xi], tau, steps, dt, pe, params0, path,
                                   [&](std::size_t k, double, const std::vector<double>& ua,
                                       const std::vector<double>& ub) {
                                       if (!uniform_in_t && k != steps) return;
                                       double d = 0.0;
                                       for (std::size_t j = 0; j < ua.size(); ++j) {
                                           const double e = ua[j] - ub[j];
                                           d += e * e;
                                       }
                                       worst = std::max(worst, d);
                                   });
        exceed[idx] = std::sqrt(worst) >= threshold ? 1 : 0;
    });

    for (std::size_t xi = 0; xi < K_grid.size(); ++xi) {
        std::size_t count = 0;
        for (std::size_t s = 0; s < M; ++s) count += static_cast<std::size_t>(exceed[xi * M + s]);
        CipGridRow row;
        row.grid_index = xi;
        row.estimate = static_cast<double>(count) / static_cast<double>(M);
        row.ci = stats::wilson_ci(count, M);
        out.per_start.push_back(row);
        if (row.estimate >= out.sup_estimate) {
            out.sup_estimate = row.estimate;
            out.sup_ci = row.ci;
        }
    }
    return out;
}

// The default compact grid: scaled basis vectors plus random states of norm
// at most 2. Deterministic given the seed.
inline std::vector<LatticeState> default_K_grid(int radius, std::size_t count,
                                                std::uint64_t seed) {
    std::vector<LatticeState> grid;
    const double amps[] = {1.0, -1.0, 0.5, -0.5, 1.5, -1.5, 2.0, -2.0};
    const int sites[] = {0, 1, -1, 2, -2, 3, 0, 1};
    for (std::size_t j = 0; j < count / 2 && j < 8; ++j)
        grid.push_back(LatticeState::basis(radius, sites[j], amps[j]));
    rng::NormalStream z(seed, 0x4b67726964ull);
    rng::UniformStream u(seed, 0x4b67726965ull);
    while (grid.size() < count) {
        LatticeState x(radius);
        for (double& v : x.values) v = z.next();
        const double target = 0.25 + 1.75 * u.next(); // norm in (0.25, 2)
        const double nrm = norm(x);
        if (nrm > 0.0)
            for (double& v : x.values) v *= target / nrm;
        grid.push_back(std::move(x));
    }
    return grid;
}

// ---------------------------------------------------------------------------
// Feller probe: continuity of x -> E phi(u(t, tau, x)) measured on pairs of
// nearby starts driven by shared paths.
// ---------------------------------------------------------------------------

struct FellerRow {
    std::size_t pair_index = 0;
    std::string function;
    double gap = 0.0;      // |E phi(X) - E phi(X')|
    stats::Interval ci;    // bootstrap CI of the paired mean difference
    double start_distance = 0.0;
};

struct FellerReport {
    std::vector<FellerRow> rows;
    double mean_endpoint_distance = 0.0;
};

inline FellerReport feller_probe(const ModelParams& mp, double tau, double t,
                                 const std::vector<std::pair<LatticeState, LatticeState>>& pairs,
                                 const std::vector<TestFunction>& panel, std::size_t M, double dt,
                                 std::uint64_t seed) {
    mp.validate();
    if (pairs.empty() || panel.empty()) throw std::invalid_argument("feller_probe: empty inputs");
    const std::uint64_t sim_seed = rng::derive_seed(seed, 0x66656c6cull);
    FellerReport rep;
    double dist_acc = 0.0;
    for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
        std::vector<LatticeState> xa(M), xb(M);
        parallel_for(M, [&](std::size_t s) {
            const std::uint64_t stream = pi * M + s;
            xa[s] = simulate_final(pairs[pi].first, tau, t, dt, mp, sim_seed, stream);
            xb[s] = simulate_final(pairs[pi].second, tau, t, dt, mp, sim_seed, stream);
        });
        double d_end = 0.0;
        for (std::size_t s = 0; s < M; ++s) d_end += distance(xa[s], xb[s]);
        dist_acc += d_end / static_cast<double>(M);
        for (std::size_t q = 0; q < panel.size(); ++q) {
            std::vector<double> diffs(M);
            for (std::size_t s = 0; s < M; ++s)
                diffs[s] = panel[q].f(xa[s]) - panel[q].f(xb[s]);
            const double gap = std::abs(stats::mean(diffs));
            const auto ci =
                stats::bootstrap_mean_ci(diffs, 400, 0.95, rng::derive_seed(seed, pi * 64 + q));
            rep.rows.push_back({pi, panel[q].name, gap, ci,
                                distance(pairs[pi].first, pairs[pi].second)});
        }
    }
    rep.mean_endpoint_distance = dist_acc / static_cast<double>(pairs.size());
    return rep;
}

// ---------------------------------------------------------------------------
// Evolution-property defect: push mu_tau from tau to t with fresh noise and
// compare with mu_t via the energy permutation test and panel pairing gaps.
// ---------------------------------------------------------------------------

struct DefectStats {
    double tau = 0.0;
    double t = 0.0;
    double energy_stat = 0.0;
    double energy_p = 1.0;
    double max_panel_gap = 0.0;
    double min_panel_p = 1.0;
    std::size_t panel_count = 0;
    // Family-wise level alpha: Bonferroni across the panel functions.
    bool rejected(double alpha = 0.01) const {
        return energy_p < alpha ||
               (panel_count > 0 && min_panel_p < alpha / static_cast<double>(panel_count));
    }
};

inline DefectStats evolution_defect(const EvolutionFamily& family, std::size_t tau_index,
                                    std::size_t t_index, double dt, std::size_t replicas,
                                    std::uint64_t seed, int n_perm = 999) {
    if (tau_index >= t_index || t_index >= family.times.size())
        throw std::invalid_argument("evolution_defect: need tau_index < t_index within family");
    const double tau = family.times[tau_index];
    const double t = family.times[t_index];
    const EmpiricalMeasure pushed = push_forward(family.at(tau_index), tau, t, family.params, dt,
                                                 rng::derive_seed(seed, 0x64656665ull), replicas);
    const EmpiricalMeasure& target = family.at(t_index);

    DefectStats out;
    out.tau = tau;
    out.t = t;

    if (pushed.atoms == target.atoms) {
        // identical clouds (tau == t or fully deterministic dynamics)
        out.energy_stat = 0.0;
        out.energy_p = 1.0;
        return out;
    }

    const auto energy = stats::energy_perm_test(
        pushed.atoms, target.atoms,
        [](const LatticeState& a, const LatticeState& b) { return distance(a, b); }, n_perm,
        rng::derive_seed(seed, 0x656e6572ull));
    out.energy_stat = energy.statistic;
    out.energy_p = energy.p_value;

    const auto panel = standard_panel();
    out.panel_count = panel.size();
    for (std::size_t q = 0; q < panel.size(); ++q) {
        std::vector<double> va(pushed.size()), vb(target.size());
        for (std::size_t j = 0; j < pushed.size(); ++j) va[j] = panel[q].f(pushed.atoms[j]);
        for (std::size_t j = 0; j < target.size(); ++j) vb[j] = panel[q].f(target.atoms[j]);
        const auto r = stats::perm_test_mean_diff(va, vb, n_perm,
                                                  rng::derive_seed(seed, 0x70616e00ull + q));
        out.max_panel_gap = std::max(out.max_panel_gap, r.statistic);
        out.min_panel_p = std::min(out.min_panel_p, r.p_value);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Chapman-Kolmogorov: law of direct simulation tau -> t versus composed
// simulation tau -> r -> t with independent noise on the second leg.
// ---------------------------------------------------------------------------

struct CkReport {
    double tau = 0.0, r = 0.0, t = 0.0;
    double energy_stat = 0.0;
    double energy_p = 1.0;
    double min_panel_p = 1.0;
    std::size_t panel_count = 0;
    bool exact_equal = false; // endpoints bitwise equal (epsilon = 0 case)
    bool rejected(double alpha = 0.01) const {
        return !exact_equal &&
               (energy_p < alpha ||
                (panel_count > 0 && min_panel_p < alpha / static_cast<double>(panel_count)));
    }
};

inline CkReport chapman_kolmogorov_check(const ModelParams& mp, double tau, double r, double t,
                                         const LatticeState& u0, std::size_t M, double dt,
                                         std::uint64_t seed, int n_perm = 999) {
    mp.validate();
    if (!(tau <= r && r <= t)) throw std::invalid_argument("ck_check: need tau <= r <= t");
    CkReport rep;
    rep.tau = tau;
    rep.r = r;
    rep.t = t;

    std::vector<LatticeState> direct =
        run_ensemble(u0, tau, t, dt, mp, M, rng::derive_seed(seed, 0x636b3161ull));
    std::vector<LatticeState> mid =
        run_ensemble(u0, tau, r, dt, mp, M, rng::derive_seed(seed, 0x636b3262ull));
    std::vector<LatticeState> composed(M);
    const std::uint64_t leg2 = rng::derive_seed(seed, 0x636b3363ull);
    parallel_for(M, [&](std::size_t j) {
        composed[j] = simulate_final(mid[j], r, t, dt, mp, leg2, j);
    });

    rep.exact_equal = direct == composed;
    if (rep.exact_equal) return rep;

    const auto energy = stats::energy_perm_test(
        direct, composed,
        [](const LatticeState& a, const LatticeState& b) { return distance(a, b); }, n_perm,
        rng::derive_seed(seed, 0x636b656eull));
    rep.energy_stat = energy.statistic;
    rep.energy_p = energy.p_value;

    const auto panel = standard_panel();
    rep.panel_count = panel.size();
    for (std::size_t q = 0; q < panel.size(); ++q) {
        std::vector<double> va(M), vb(M);
        for (std::size_t j = 0; j < M; ++j) {
            va[j] = panel[q].f(direct[j]);
            vb[j] = panel[q].f(composed[j]);
        }
        const auto pr = stats::perm_test_mean_diff(va, vb, n_perm,
                                                   rng::derive_seed(seed, 0x636b7000ull + q));
        rep.min_panel_p = std::min(rep.min_panel_p, pr.p_value);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Limit stability: families at eps_n versus the family at eps0, plus the
// evolution defects of the eps0 family itself.
// ---------------------------------------------------------------------------

struct FamilyDistanceRow {
    double epsilon = 0.0;
    double time = 0.0;
    double energy = 0.0;
    double energy_se = 0.0;
    double w1_sq_norm = 0.0;
    double max_panel_gap = 0.0;
};

struct StabilityReport {
    std::vector<double> epsilon_seq;
    std::vector<double> times;
    std::vector<FamilyDistanceRow> distances;
    std::vector<stats::TrendResult> trend_per_time; // over the epsilon sequence
    std::vector<DefectStats> limit_defects;         // of the eps0 family
    bool distances_decreasing = false;
    bool limit_family_evolves = false;
    bool pass() const { return distances_decreasing && limit_family_evolves; }
};

struct StabilityOptions {
    int m = 2;
    int k = 20;
    double tau_step = 0.25;
    double dt = 1e-3;
    std::size_t samples_per_node = 28;
    std::size_t defect_replicas = 1;
    std::size_t defect_pairs = 3;
    int n_perm = 999;
    double alpha = 0.01;
};

inline StabilityReport limit_stability_experiment(const ModelParams& params0,
                                                  const std::vector<double>& epsilon_seq,
                                                  const std::vector<double>& times,
                                                  const StabilityOptions& opt,
                                                  std::uint64_t seed) {
    params0.validate();
    if (epsilon_seq.empty()) throw std::invalid_argument("limit_stability: empty epsilon_seq");
    StabilityReport rep;
    rep.epsilon_seq = epsilon_seq;
    rep.times = times;

    // The same construction seed for every family couples the ensembles
    // across epsilon through shared Wiener streams.
    const std::uint64_t family_seed = rng::derive_seed(seed, 0x66616d696cull);
    const EvolutionFamily fam0 = evolution_family(params0, opt.m, opt.k, times, opt.dt,
                                                  opt.samples_per_node, family_seed, opt.tau_step);

    const auto panel = standard_panel();
    for (double eps : epsilon_seq) {
        ModelParams pn = params0;
        pn.epsilon = eps;
        pn.validate();
        const EvolutionFamily fam_n = evolution_family(pn, opt.m, opt.k, times, opt.dt,
                                                       opt.samples_per_node, family_seed,
                                                       opt.tau_step);
        for (std::size_t ti = 0; ti < times.size(); ++ti) {
            const auto e = energy_distance_with_se(fam_n.at(ti), fam0.at(ti));
            FamilyDistanceRow row;
            row.epsilon = eps;
            row.time = times[ti];
            row.energy = e.value;
            row.energy_se = e.se;
            row.w1_sq_norm =
                w1_functional(fam_n.at(ti), fam0.at(ti), ScalarFunctional::sq_norm_f());
            const auto pa = test_function_pairing(fam_n.at(ti), panel);
            const auto pb = test_function_pairing(fam0.at(ti), panel);
            for (std::size_t q = 0; q < panel.size(); ++q)
                row.max_panel_gap = std::max(row.max_panel_gap, std::abs(pa[q] - pb[q]));
            rep.distances.push_back(row);
        }
    }

    rep.distances_decreasing = true;
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
        std::vector<double> est, se;
        for (std::size_t ni = 0; ni < epsilon_seq.size(); ++ni) {
            const auto& row = rep.distances[ni * times.size() + ti];
            est.push_back(row.energy);
            se.push_back(row.energy_se);
        }
        const auto trend = stats::monotone_decreasing_trend(est, se);
        rep.trend_per_time.push_back(trend);
        rep.distances_decreasing = rep.distances_decreasing && trend.pass;
    }

    // Defect of the limit family at pseudo-randomly chosen (tau, t) pairs;
    // depends only on fam0 and the seed, never on the epsilon sequence.
    std::vector<std::pair<std::size_t, std::size_t>> all_pairs;
    for (std::size_t a = 0; a < times.size(); ++a)
        for (std::size_t b = a + 1; b < times.size(); ++b) all_pairs.emplace_back(a, b);
    rng::UniformStream pick(rng::derive_seed(seed, 0x7061697273ull), 0);
    std::vector<std::pair<std::size_t, std::size_t>> chosen;
    if (all_pairs.size() <= opt.defect_pairs) {
        chosen = all_pairs;
    } else {
        std::vector<std::size_t> idx(all_pairs.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (std::size_t j = 0; j < opt.defect_pairs; ++j)
            std::swap(idx[j], idx[j + pick.below(idx.size() - j)]);
        for (std::size_t j = 0; j < opt.defect_pairs; ++j) chosen.push_back(all_pairs[idx[j]]);
    }
    rep.limit_family_evolves = true;
    for (std::size_t j = 0; j < chosen.size(); ++j) {
        const auto d = evolution_defect(fam0, chosen[j].first, chosen[j].second, opt.dt,
                                        opt.defect_replicas,
                                        rng::derive_seed(seed, 0x64656600ull + j), opt.n_perm);
        rep.limit_defects.push_back(d);
        rep.limit_family_evolves = rep.limit_family_evolves && !d.rejected(opt.alpha);
    }
    return rep;
}

} // namespace evo
