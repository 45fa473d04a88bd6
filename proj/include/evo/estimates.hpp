#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "evo/lattice.hpp"
#include "evo/measure.hpp"
#include "evo/sde.hpp"
#include "evo/stats.hpp"

namespace evo {

// ---------------------------------------------------------------------------
// Compact sets of the tightness construction.
//
//   Y_l = { u : u_i = 0 for |i| > n_l, ||u|| <= R_l },  R_l = 2^l sqrt(C/delta)
//   Z_l = closed 2^{-l} neighborhood of Y_l,  Z = intersection over l <= L.
// ---------------------------------------------------------------------------

struct CompactLevel {
    int level = 0;
    int n = 0;
    double radius = 0.0;
};

// Distance from u to Y(n, R): drop everything outside [-n, n], clip the inner
// part to the ball of radius R.
inline double dist_to_compact_piece(const LatticeState& u, int n, double R) {
    const int I = u.radius();
    double outer_sq = 0.0, inner_sq = 0.0;
    for (int i = -I; i <= I; ++i) {
        const double v = u.site(i);
        (std::abs(i) <= n ? inner_sq : outer_sq) += v * v;
    }
    const double excess = std::max(0.0, std::sqrt(inner_sq) - R);
    return std::sqrt(outer_sq + excess * excess);
}

struct CompactSetSpec {
    double delta = 0.0;
    double C = 0.0;
    std::vector<CompactLevel> levels;

    static double level_radius(int level, double C, double delta) {
        return std::pow(2.0, level) * std::sqrt(C) / std::sqrt(delta);
    }

    void validate() const {
        if (!(delta > 0.0) || delta >= 1.0)
            throw std::invalid_argument("CompactSetSpec: delta must be in (0,1)");
        if (levels.empty()) throw std::invalid_argument("CompactSetSpec: no levels");
        for (std::size_t q = 0; q < levels.size(); ++q) {
            if (levels[q].level != static_cast<int>(q) + 1)
                throw std::invalid_argument("CompactSetSpec: levels must be 1..L in order");
            if (q > 0 && levels[q].n < levels[q - 1].n)
                throw std::invalid_argument("CompactSetSpec: n_l must be nondecreasing");
        }
    }

    bool level_contains(const LatticeState& u, std::size_t q) const {
        const double tol = std::pow(2.0, -levels[q].level);
        return dist_to_compact_piece(u, levels[q].n, levels[q].radius) <= tol;
    }

    bool contains(const LatticeState& u) const {
        for (std::size_t q = 0; q < levels.size(); ++q)
            if (!level_contains(u, q)) return false;
        return true;
    }
};

// Weighted mass outside Z = intersection of the level neighborhoods.
inline double tightness_mass(const EmpiricalMeasure& mu, const CompactSetSpec& spec) {
    mu.validate();
    spec.validate();
    double outside = 0.0;
    for (std::size_t j = 0; j < mu.size(); ++j)
        if (!spec.contains(mu.atoms[j])) outside += mu.weights[j];
    return outside;
}

// ---------------------------------------------------------------------------
// Bound reports.
// ---------------------------------------------------------------------------

struct BoundRow {
    std::string quantity;
    double lhs = 0.0;
    double lhs_ci_lo = 0.0;
    double lhs_ci_hi = 0.0;
    double rhs = 0.0;
    bool pass = false;
};

struct BoundReport {
    std::vector<BoundRow> rows;
    std::vector<std::pair<std::string, double>> constants;
    ModelParams params;
    double slack = 0.1;

    bool all_pass() const {
        for (const auto& r : rows)
            if (!r.pass) return false;
        return !rows.empty();
    }

    void add_constant(const std::string& name, double v) { constants.emplace_back(name, v); }
};

namespace detail {

inline bool bound_holds(double lhs_hi, double rhs, double slack) {
    return lhs_hi <= rhs * (1.0 + slack) + 1e-12;
}

// Per-trajectory statistics collected in one pass: ||u(t_s)||^2 and the
// weighted integral int_tau^{t_s} e^{lambda (r - t_s)} ||u(r)||^2 dr at each
// snapshot time, plus site-wise squares at the final time.
struct MomentSample {
    std::vector<double> sq_at;       // per snapshot
    std::vector<double> integral_at; // per snapshot
    std::vector<double> final_site_sq;
};

inline MomentSample moment_sample(const LatticeState& u0, double tau,
                                  const std::vector<double>& snapshot_times, double dt,
                                  const ModelParams& mp, std::uint64_t seed,
                                  std::uint64_t stream) {
    const double t_end = snapshot_times.back();
    const std::size_t steps = grid_steps(tau, t_end, dt);
    std::vector<std::size_t> snap_idx(snapshot_times.size());
    for (std::size_t s = 0; s < snapshot_times.size(); ++s)
        snap_idx[s] = grid_steps(tau, snapshot_times[s], dt);

    MomentSample out;
    out.sq_at.assign(snapshot_times.size(), 0.0);
    out.integral_at.assign(snapshot_times.size(), 0.0);

    const WienerPath path = WienerPath::generate(seed, stream, tau, dt, steps);
    // Trapezoid accumulation of e^{lambda (r - t_end)} ||u(r)||^2.
    double acc = 0.0, prev_g = 0.0;
    std::size_t next_snap = 0;
    auto observer = [&](std::size_t k, double t, const std::vector<double>& u) {
        double sq = 0.0;
        for (double v : u) sq += v * v;
        const double g = std::exp(mp.lambda * (t - t_end)) * sq;
        if (k > 0) acc += 0.5 * (prev_g + g) * dt;
        prev_g = g;
        while (next_snap < snap_idx.size() && snap_idx[next_snap] == k) {
            out.sq_at[next_snap] = sq;
            // rescale from reference point t_end to the snapshot time
            out.integral_at[next_snap] = acc * std::exp(mp.lambda * (t_end - t));
            if (snap_idx[next_snap] == steps) {
                out.final_site_sq.resize(u.size());
                for (std::size_t j = 0; j < u.size(); ++j) out.final_site_sq[j] = u[j] * u[j];
            }
            ++next_snap;
        }
    };
    const LatticeState fin = integrate_observed(u0, tau, steps, dt, mp, path, observer);
    if (out.final_site_sq.empty()) {
        out.final_site_sq.resize(fin.values.size());
        for (std::size_t j = 0; j < fin.values.size(); ++j)
            out.final_site_sq[j] = fin.values[j] * fin.values[j];
    }
    return out;
}

struct MeanCi {
    double mean = 0.0;
    stats::Interval ci;
};

inline MeanCi mean_with_ci(const std::vector<double>& xs, std::uint64_t seed) {
    MeanCi out;
    out.mean = stats::mean(xs);
    out.ci = stats::bootstrap_mean_ci(xs, 400, 0.95, seed);
    return out;
}

inline std::string fmt_num(double v) {
    std::string s = std::to_string(v);
    while (!s.empty() && s.back() == '0') s.pop_back();
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Moment inequality: for each requested t,
//
//   E||u(t)||^2 + (lambda/2) int_tau^t e^{lambda(r-t)} E||u(r)||^2 dr
//     <= e^{lambda(tau-t)} ||u0||^2 + c int_{-inf}^t e^{lambda(s-t)} ||g||^2 ds
//
// with the derived constant c = 2 eps^2 (at most lambda/(2 delta^2) on the
// admissible range). Rows "enorm2[...]" check the first lhs term alone
// against the same right-hand side.
// ---------------------------------------------------------------------------

inline BoundReport moment_bound_check(const ModelParams& mp, const LatticeState& u0, double tau,
                                      std::vector<double> ts, double dt, std::size_t M,
                                      std::uint64_t seed, double slack = 0.1) {
    mp.validate();
    detail::check_state(u0, mp, "moment_bound_check");
    if (ts.empty()) throw std::invalid_argument("moment_bound_check: no evaluation times");
    std::sort(ts.begin(), ts.end());
    if (ts.front() < tau) throw std::invalid_argument("moment_bound_check: t < tau");
    if (M < 1) throw std::invalid_argument("moment_bound_check: M must be >= 1");

    const std::uint64_t sim_seed = rng::derive_seed(seed, 0x6d6f6d656eull);
    std::vector<detail::MomentSample> samples(M);
    parallel_for(M, [&](std::size_t j) {
        samples[j] = detail::moment_sample(u0, tau, ts, dt, mp, sim_seed, j);
    });

    const double c_noise = 2.0 * mp.epsilon * mp.epsilon;
    BoundReport rep;
    rep.params = mp;
    rep.slack = slack;
    rep.add_constant("c_noise", c_noise);
    rep.add_constant("c_noise_cap", mp.lambda / (2.0 * mp.delta * mp.delta));

    for (std::size_t s = 0; s < ts.size(); ++s) {
        const double t = ts[s];
        const double rhs = std::exp(mp.lambda * (tau - t)) * sq_norm(u0) +
                           c_noise * mp.g.weighted_integral_shifted(mp.lambda, t);
        std::vector<double> full(M), first(M);
        for (std::size_t j = 0; j < M; ++j) {
            first[j] = samples[j].sq_at[s];
            full[j] = samples[j].sq_at[s] + 0.5 * mp.lambda * samples[j].integral_at[s];
        }
        const auto mc_full = detail::mean_with_ci(full, rng::derive_seed(seed, 100 + s));
        const auto mc_first = detail::mean_with_ci(first, rng::derive_seed(seed, 200 + s));
        rep.rows.push_back({"moment[t=" + detail::fmt_num(t) + "]", mc_full.mean, mc_full.ci.lo,
                            mc_full.ci.hi, rhs, detail::bound_holds(mc_full.ci.hi, rhs, slack)});
        rep.rows.push_back({"enorm2[t=" + detail::fmt_num(t) + "]", mc_first.mean, mc_first.ci.lo,
                            mc_first.ci.hi, rhs, detail::bound_holds(mc_first.ci.hi, rhs, slack)});
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Lemma-style time averages over tau in (-k, t), midpoint grid.
// ---------------------------------------------------------------------------

namespace detail {

struct TimeAverageData {
    std::vector<double> term1;        // ||u(t, tau_j, u0)||^2 per (node, sample)
    std::vector<double> term2;        // int_tau^t e^{lambda(r-t)} ||u||^2 dr per (node, sample)
    std::vector<std::vector<double>> final_site_sq; // per (node, sample)
};

inline TimeAverageData time_average_data(const ModelParams& mp, const LatticeState& u0, double k,
                                         double t, double tau_step, std::size_t spn,
                                         std::uint64_t seed, double dt) {
    if (!(k + t > 0.0)) throw std::invalid_argument("time average: need k + t > 0");
    const std::size_t nodes = static_cast<std::size_t>(std::llround((k + t) / tau_step));
    if (nodes == 0) throw std::invalid_argument("time average: empty tau grid");
    const std::size_t total = nodes * spn;
    TimeAverageData data;
    data.term1.resize(total);
    data.term2.resize(total);
    data.final_site_sq.resize(total);
    parallel_for(total, [&](std::size_t idx) {
        const std::size_t node = idx / spn;
        const double tau = -k + (static_cast<double>(node) + 0.5) * tau_step;
        auto s = moment_sample(u0, tau, {t}, dt, mp, seed, idx);
        data.term1[idx] = s.sq_at[0];
        data.term2[idx] = s.integral_at[0];
        data.final_site_sq[idx] = std::move(s.final_site_sq);
    });
    return data;
}

// Analytic pieces shared by the averaged bounds.
struct AveragedRhs {
    double u0_coeff = 0.0;  // (1 - e^{-lambda(k+t)}) / (lambda (k+t))
    double g_shift = 0.0;   // int_{-inf}^t e^{lambda(s-t)} ||g||^2 ds
};

inline AveragedRhs averaged_rhs(const ModelParams& mp, double k, double t) {
    AveragedRhs r;
    const double span = k + t;
    r.u0_coeff = (1.0 - std::exp(-mp.lambda * span)) / (mp.lambda * span);
    r.g_shift = mp.g.weighted_integral_shifted(mp.lambda, t);
    return r;
}

} // namespace detail

// Lemma 3.1(i)-style check:
//
//   (1/(k+t)) int_{-k}^t E||u(t,tau,u0)||^2 dtau
//     + (1/(k+t)) int_{-k}^t int_tau^t e^{lambda(r-t)} E||u(r,tau,u0)||^2 dr dtau
//   <= (1 + 2/lambda) [ u0_coeff ||u0||^2 + 2 eps^2 G(t) ]
//
// checked per epsilon on the grid and for the sup over the grid against the
// epsilon-independent constant (eps = eps_max of the admissible range).
inline BoundReport time_average_bound_check(ModelParams mp, const LatticeState& u0, double t,
                                            const std::vector<int>& k_list,
                                            const std::vector<double>& eps_grid, double tau_step,
                                            double dt, std::size_t samples_per_node,
                                            std::uint64_t seed, double slack = 0.1) {
    if (k_list.empty() || eps_grid.empty())
        throw std::invalid_argument("time_average_bound_check: empty grids");
    BoundReport rep;
    rep.slack = slack;
    const double pad = 1.0 + 2.0 / mp.lambda;
    rep.add_constant("pad_factor", pad);
    const double eps_max = mp.epsilon_max();
    rep.add_constant("c_noise_sup", 2.0 * eps_max * eps_max * pad);

    for (std::size_t ki = 0; ki < k_list.size(); ++ki) {
        const double k = static_cast<double>(k_list[ki]);
        const auto parts = detail::averaged_rhs(mp, k, t);
        double sup_lhs = 0.0;
        stats::Interval sup_ci{0.0, 0.0};
        for (std::size_t ei = 0; ei < eps_grid.size(); ++ei) {
            mp.epsilon = eps_grid[ei];
            mp.validate();
            const auto data = detail::time_average_data(
                mp, u0, k, t, tau_step, samples_per_node,
                rng::derive_seed(seed, 0x74610000ull + ki * 64 + ei), dt);
            std::vector<double> combined(data.term1.size());
            for (std::size_t j = 0; j < combined.size(); ++j)
                combined[j] = data.term1[j] + data.term2[j];
            const auto mc = detail::mean_with_ci(combined, rng::derive_seed(seed, 900 + ki * 64 + ei));
            const double c_eps = 2.0 * mp.epsilon * mp.epsilon;
            const double rhs = pad * (parts.u0_coeff * sq_norm(u0) + c_eps * parts.g_shift);
            rep.rows.push_back({"time_avg[k=" + std::to_string(k_list[ki]) +
                                    ",eps=" + detail::fmt_num(mp.epsilon) + "]",
                                mc.mean, mc.ci.lo, mc.ci.hi, rhs,
                                detail::bound_holds(mc.ci.hi, rhs, slack)});
            if (mc.mean >= sup_lhs) {
                sup_lhs = mc.mean;
                sup_ci = mc.ci;
            }
        }
        const double rhs_sup =
            pad * (parts.u0_coeff * sq_norm(u0) + 2.0 * eps_max * eps_max * parts.g_shift);
        rep.rows.push_back({"time_avg_sup[k=" + std::to_string(k_list[ki]) + "]", sup_lhs,
                            sup_ci.lo, sup_ci.hi, rhs_sup,
                            detail::bound_holds(sup_ci.hi, rhs_sup, slack)});
    }
    rep.params = mp;
    return rep;
}

// ---------------------------------------------------------------------------
// Lemma 3.1(ii)/(iii)-style tail averages. For each u0 in u0_set, epsilon on
// the grid and k in k_list, reports
//
//   lhs(n) = (1/(k+t)) int_{-k}^t sum_{|i| >= n} E|u_i(t,tau,u0)|^2 dtau
//
// against the cut-off bound at half index h = max(1, n/2):
//
//   rhs(n) = u0_coeff * tail(u0, h) + 2 eps^2 G_h(t) + (4 nu / h) * term2_bound
//
// plus a monotone-decrease trend row over n per (u0, eps, k) and exact zeros
// for n beyond the truncation radius.
// ---------------------------------------------------------------------------

struct TailCheckInputs {
    std::vector<LatticeState> u0_set;
    double t = 0.0;
    std::vector<int> n_list;
    std::vector<int> k_list;
    std::vector<double> eps_grid;
    double tau_step = 0.25;
    double dt = 1e-3;
    std::size_t samples_per_node = 20;
};

inline BoundReport tail_average_check(ModelParams mp, const TailCheckInputs& in,
                                      std::uint64_t seed, double slack = 0.1) {
    if (in.u0_set.empty() || in.n_list.empty() || in.k_list.empty() || in.eps_grid.empty())
        throw std::invalid_argument("tail_average_check: empty inputs");
    BoundReport rep;
    rep.slack = slack;
    const double pad = 1.0 + 2.0 / mp.lambda;
    rep.add_constant("pad_factor", pad);
    rep.add_constant("c_lap", 4.0 * mp.nu);

    const int I = mp.trunc_radius;
    for (std::size_t ui = 0; ui < in.u0_set.size(); ++ui) {
        for (std::size_t ki = 0; ki < in.k_list.size(); ++ki) {
            const double k = static_cast<double>(in.k_list[ki]);
            const auto parts = detail::averaged_rhs(mp, k, in.t);
            for (std::size_t ei = 0; ei < in.eps_grid.size(); ++ei) {
                mp.epsilon = in.eps_grid[ei];
                mp.validate();
                const auto data = detail::time_average_data(
                    mp, in.u0_set[ui], k, in.t, in.tau_step, in.samples_per_node,
                    rng::derive_seed(seed, 0x7461696cull + ui * 4096 + ki * 64 + ei), in.dt);
                const double c_eps = 2.0 * mp.epsilon * mp.epsilon;
                const double term2_bound =
                    (2.0 / mp.lambda) *
                    (parts.u0_coeff * sq_norm(in.u0_set[ui]) + c_eps * parts.g_shift);
                const std::string tag = "[u0=" + std::to_string(ui) +
                                        ",k=" + std::to_string(in.k_list[ki]) +
                                        ",eps=" + detail::fmt_num(mp.epsilon) + "]";
                std::vector<double> means, ses;
                for (int n : in.n_list) {
                    std::vector<double> tails(data.final_site_sq.size(), 0.0);
                    for (std::size_t j = 0; j < tails.size(); ++j) {
                        const auto& site_sq = data.final_site_sq[j];
                        double s = 0.0;
                        if (n <= I) {
                            for (int i = std::max(n, 1); i <= I; ++i)
                                s += site_sq[static_cast<std::size_t>(i + I)] +
                                     site_sq[static_cast<std::size_t>(-i + I)];
                            if (n == 0) s += site_sq[static_cast<std::size_t>(I)];
                        }
                        tails[j] = s;
                    }
                    const auto mc = detail::mean_with_ci(
                        tails, rng::derive_seed(seed, 5000 + ui * 4096 + ki * 512 + ei * 64 +
                                                          static_cast<std::size_t>(n)));
                    double rhs = 0.0;
                    bool pass = false;
                    if (n > I) {
                        rhs = 0.0;
                        pass = mc.mean == 0.0; // structurally exact
                    } else {
                        const int h = std::max(1, n / 2);
                        rhs = parts.u0_coeff * tail_sq_norm(in.u0_set[ui], h) +
                              c_eps * mp.g.weighted_tail_integral_shifted(mp.lambda, in.t, h) +
                              (4.0 * mp.nu / static_cast<double>(h)) * term2_bound;
                        pass = detail::bound_holds(mc.ci.hi, rhs, slack);
                    }
                    rep.rows.push_back({"tail" + tag + "[n=" + std::to_string(n) + "]", mc.mean,
                                        mc.ci.lo, mc.ci.hi, rhs, pass});
                    if (n <= I) {
                        means.push_back(mc.mean);
                        ses.push_back(mc.ci.half_width() / 1.96);
                    }
                }
                if (means.size() >= 2) {
                    const auto trend = stats::monotone_decreasing_trend(means, ses);
                    rep.rows.push_back({"tail_trend" + tag, trend.net_decrease, 0.0, 0.0, 0.0,
                                        trend.pass});
                }
            }
        }
    }
    rep.params = mp;
    return rep;
}

// ---------------------------------------------------------------------------
// Compact-set calibration: C from measured time-average second moments and
// n_l from measured tail averages so the delta/2^{4l} budgets hold with a
// safety margin. Fails (reporting the smallest achievable delta) if the
// budget cannot be met within the truncation radius.
// ---------------------------------------------------------------------------

struct CalibrationError : std::runtime_error {
    double smallest_delta;
    explicit CalibrationError(double d)
        : std::runtime_error("calibrate_compact_set: tail budget unreachable within the "
                             "truncation radius; smallest achievable delta = " +
                             std::to_string(d)),
          smallest_delta(d) {}
};

inline CompactSetSpec calibrate_compact_set(const ModelParams& mp, double t, double delta, int k,
                                            int m, double dt, std::size_t samples_per_node,
                                            std::uint64_t seed, int levels = 8,
                                            double tau_step = 0.25, double margin = 0.25) {
    mp.validate();
    if (!(delta > 0.0) || delta >= 1.0)
        throw std::invalid_argument("calibrate_compact_set: delta must be in (0,1)");
    if (!(k > m) || m < 0) throw std::invalid_argument("calibrate_compact_set: need k > m >= 0");
    if (t < static_cast<double>(-m))
        throw std::invalid_argument("calibrate_compact_set: t must be >= -m");

    // KB-style ensemble: tau over (-k, -m), u0 = 0, evaluated at t.
    const std::size_t nodes =
        static_cast<std::size_t>(std::llround(static_cast<double>(k - m) / tau_step));
    if (nodes == 0) throw std::invalid_argument("calibrate_compact_set: empty tau grid");
    const std::size_t total = nodes * samples_per_node;
    const LatticeState origin(mp.trunc_radius);
    const std::uint64_t sim_seed = rng::derive_seed(seed, 0x63616c69ull);
    std::vector<std::vector<double>> site_sq(total);
    std::vector<double> sqn(total);
    parallel_for(total, [&](std::size_t idx) {
        const std::size_t node = idx / samples_per_node;
        const double tau =
            -static_cast<double>(k) + (static_cast<double>(node) + 0.5) * tau_step;
        auto s = detail::moment_sample(origin, tau, {t}, dt, mp, sim_seed, idx);
        sqn[idx] = s.sq_at[0];
        site_sq[idx] = std::move(s.final_site_sq);
    });

    const int I = mp.trunc_radius;
    const double z = 1.9599639845400545;
    const double mean_sq = stats::mean(sqn);
    const double se_sq = stats::sample_sd(sqn) / std::sqrt(static_cast<double>(total));
    const double C = (mean_sq + z * se_sq) * (1.0 + margin);

    // Tail means for every candidate n in one pass over the site profile.
    std::vector<double> mean_site(static_cast<std::size_t>(2 * I + 1), 0.0);
    for (const auto& row : site_sq)
        for (std::size_t j = 0; j < row.size(); ++j) mean_site[j] += row[j];
    for (double& v : mean_site) v /= static_cast<double>(total);
    auto tail_mean = [&](int n) {
        double s = 0.0;
        for (int i = std::max(n, 1); i <= I; ++i)
            s += mean_site[static_cast<std::size_t>(i + I)] +
                 mean_site[static_cast<std::size_t>(-i + I)];
        if (n == 0) s += mean_site[static_cast<std::size_t>(I)];
        return s;
    };

    CompactSetSpec spec;
    spec.delta = delta;
    spec.C = C;
    int prev_n = 0;
    for (int l = 1; l <= levels; ++l) {
        const double budget = delta / std::pow(2.0, 4.0 * l);
        int found = -1;
        for (int n = prev_n; n <= I; ++n) {
            if (tail_mean(n) * (1.0 + margin) <= budget) {
                found = n;
                break;
            }
        }
        if (found < 0) {
            const double smallest =
                tail_mean(I) * (1.0 + margin) * std::pow(2.0, 4.0 * levels);
            throw CalibrationError(smallest);
        }
        prev_n = found;
        spec.levels.push_back({l, found, CompactSetSpec::level_radius(l, C, delta)});
    }
    spec.validate();
    return spec;
}

} // namespace evo
