#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "evo/lattice.hpp"
#include "evo/parallel.hpp"
#include "evo/rng.hpp"

namespace evo {

struct BlowupError : std::runtime_error {
    double t;
    double state_norm;
    BlowupError(double t_, double norm_)
        : std::runtime_error("integrator blowup at t = " + std::to_string(t_) +
                             ", ||u|| = " + std::to_string(norm_)),
          t(t_), state_norm(norm_) {}
};

// One or more trajectories of an ensemble blew up.
struct AggregateBlowupError : std::runtime_error {
    std::size_t failed;
    std::size_t total;
    AggregateBlowupError(const std::string& op, std::size_t failed_, std::size_t total_,
                         const std::string& first)
        : std::runtime_error(op + ": " + std::to_string(failed_) + "/" + std::to_string(total_) +
                             " trajectories blew up; first: " + first),
          failed(failed_), total(total_) {}
};

// Discretized scalar Brownian increments; increment k ~ N(0, dt). Fully
// determined by (seed, stream_id, t0, dt, length).
struct WienerPath {
    double t0 = 0.0;
    double dt = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
    std::vector<double> increments;

    static WienerPath generate(std::uint64_t seed, std::uint64_t stream_id, double t0, double dt,
                               std::size_t n) {
        if (!(dt > 0.0)) throw std::invalid_argument("WienerPath: dt must be > 0");
        WienerPath w{t0, dt, seed, stream_id, {}};
        w.increments.resize(n);
        rng::NormalStream z(seed, stream_id);
        const double s = std::sqrt(dt);
        for (std::size_t k = 0; k < n; ++k) w.increments[k] = s * z.next();
        return w;
    }

    // Sums groups of `factor` fine increments; used by step-refinement tests.
    WienerPath coarsen(std::size_t factor) const {
        WienerPath w{t0, dt * static_cast<double>(factor), seed, stream_id, {}};
        w.increments.resize(increments.size() / factor);
        for (std::size_t k = 0; k < w.increments.size(); ++k) {
            double s = 0.0;
            for (std::size_t j = 0; j < factor; ++j) s += increments[k * factor + j];
            w.increments[k] = s;
        }
        return w;
    }
};

// Number of grid steps between tau and t_end (count rounded to the nearest
// integer; t_end is snapped to the grid).
inline std::size_t grid_steps(double tau, double t_end, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("grid_steps: dt must be > 0");
    if (t_end < tau) throw std::invalid_argument("grid_steps: t_end < tau");
    return static_cast<std::size_t>(std::llround((t_end - tau) / dt));
}

namespace detail {

constexpr double kBlowupNormSq = 1e24;

// One tamed Euler-Maruyama step on raw buffers. `scratch` holds the drift.
inline void tamed_em_step_into(std::vector<double>& u, std::vector<double>& scratch, double t,
                               double dt, double dW, const ModelParams& mp) {
    drift_into(u, scratch, mp);
    double fsq = 0.0;
    for (double v : scratch) fsq += v * v;
    const double tame = dt / (1.0 + dt * std::sqrt(fsq));
    const std::size_t n = u.size();
    if (mp.epsilon != 0.0 && mp.sigma.family != DiffusionFamily::zero) {
        const int I = (static_cast<int>(n) - 1) / 2;
        const double amp = mp.g.amplitude_at(t);
        const int r = mp.g.family == ForcingFamily::zero ? -1 : mp.g.support_radius;
        for (std::size_t j = 0; j < n; ++j) {
            const int i = static_cast<int>(j) - I;
            const double g_site = std::abs(i) <= r ? amp : 0.0;
            u[j] += tame * scratch[j] + mp.epsilon * mp.sigma.value(mp.delta, u[j], g_site) * dW;
        }
    } else {
        for (std::size_t j = 0; j < n; ++j) u[j] += tame * scratch[j];
    }
}

inline void check_blowup(const std::vector<double>& u, double t) {
    double sq = 0.0;
    for (double v : u) sq += v * v;
    if (!std::isfinite(sq) || sq > kBlowupNormSq) throw BlowupError(t, std::sqrt(sq));
}

} // namespace detail

// u' = u + dt f/(1 + dt ||f||) + diffusion(u,t) dW with f = drift(u,t).
inline LatticeState step_tamed_em(const LatticeState& u, double t, double dt, double dW,
                                  const ModelParams& mp) {
    detail::check_state(u, mp, "step_tamed_em");
    if (!(dt > 0.0)) throw std::invalid_argument("step_tamed_em: dt must be > 0");
    LatticeState out = u;
    std::vector<double> scratch(u.values.size());
    detail::tamed_em_step_into(out.values, scratch, t, dt, dW, mp);
    detail::check_blowup(out.values, t + dt);
    return out;
}

// Core integration loop. Calls observe(step_index, t_k, state_values) at every
// grid point, including k = 0 and the final point. Returns the final state.
template <class Observer>
LatticeState integrate_observed(const LatticeState& u0, double tau, std::size_t steps, double dt,
                                const ModelParams& mp, const WienerPath& path, Observer&& observe) {
    detail::check_state(u0, mp, "integrate");
    if (path.increments.size() < steps)
        throw std::invalid_argument("integrate: Wiener path shorter than step count");
    std::vector<double> u = u0.values;
    std::vector<double> scratch(u.size());
    observe(std::size_t{0}, tau, u);
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = tau + static_cast<double>(k) * dt;
        detail::tamed_em_step_into(u, scratch, t, dt, path.increments[k], mp);
        detail::check_blowup(u, t + dt);
        observe(k + 1, tau + static_cast<double>(k + 1) * dt, u);
    }
    LatticeState out(mp.trunc_radius);
    out.values = std::move(u);
    return out;
}

// Uniform time grid with every state retained.
struct Trajectory {
    std::vector<double> times;
    std::vector<LatticeState> states;
    ModelParams params;
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;

    const LatticeState& back() const { return states.back(); }
};

inline Trajectory simulate(const LatticeState& u0, double tau, double t_end, double dt,
                           const ModelParams& mp, std::uint64_t seed, std::uint64_t stream_id) {
    mp.validate();
    const std::size_t steps = grid_steps(tau, t_end, dt);
    const WienerPath path = WienerPath::generate(seed, stream_id, tau, dt, steps);
    Trajectory traj;
    traj.params = mp;
    traj.seed = seed;
    traj.stream_id = stream_id;
    traj.times.reserve(steps + 1);
    traj.states.reserve(steps + 1);
    integrate_observed(u0, tau, steps, dt, mp, path,
                       [&](std::size_t, double t, const std::vector<double>& u) {
                           traj.times.push_back(t);
                           LatticeState s(mp.trunc_radius);
                           s.values = u;
                           traj.states.push_back(std::move(s));
                       });
    return traj;
}

// Final state only; cheaper than simulate for ensemble work.
inline LatticeState simulate_final(const LatticeState& u0, double tau, double t_end, double dt,
                                   const ModelParams& mp, std::uint64_t seed,
                                   std::uint64_t stream_id) {
    const std::size_t steps = grid_steps(tau, t_end, dt);
    const WienerPath path = WienerPath::generate(seed, stream_id, tau, dt, steps);
    return integrate_observed(u0, tau, steps, dt, mp, path,
                              [](std::size_t, double, const std::vector<double>&) {});
}

// Drives two parameterizations with identical Brownian increments. The
// parameter sets may differ only in epsilon.
inline void require_coupled_compatible(const ModelParams& a, const ModelParams& b) {
    const bool same = a.lambda == b.lambda && a.nu == b.nu && a.p == b.p && a.delta == b.delta &&
                      a.trunc_radius == b.trunc_radius && a.sigma.family == b.sigma.family &&
                      a.g.family == b.g.family && a.g.a == b.g.a && a.g.b == b.g.b &&
                      a.g.c == b.g.c && a.g.support_radius == b.g.support_radius;
    if (!same)
        throw std::invalid_argument("coupled simulation: parameter sets may differ only in epsilon");
}

inline std::pair<Trajectory, Trajectory> simulate_coupled(const LatticeState& u0, double tau,
                                                          double t_end, double dt,
                                                          const ModelParams& pa,
                                                          const ModelParams& pb,
                                                          std::uint64_t seed,
                                                          std::uint64_t stream_id) {
    pa.validate();
    pb.validate();
    require_coupled_compatible(pa, pb);
    const std::size_t steps = grid_steps(tau, t_end, dt);
    const WienerPath path = WienerPath::generate(seed, stream_id, tau, dt, steps);
    auto run = [&](const ModelParams& mp) {
        Trajectory traj;
        traj.params = mp;
        traj.seed = seed;
        traj.stream_id = stream_id;
        integrate_observed(u0, tau, steps, dt, mp, path,
                           [&](std::size_t, double t, const std::vector<double>& u) {
                               traj.times.push_back(t);
                               LatticeState s(mp.trunc_radius);
                               s.values = u;
                               traj.states.push_back(std::move(s));
                           });
        return traj;
    };
    return {run(pa), run(pb)};
}

// Coupled integration reporting only observe(step, t, u_a, u_b).
template <class Observer>
void integrate_coupled_observed(const LatticeState& u0, double tau, std::size_t steps, double dt,
                                const ModelParams& pa, const ModelParams& pb,
                                const WienerPath& path, Observer&& observe) {
    detail::check_state(u0, pa, "integrate_coupled");
    require_coupled_compatible(pa, pb);
    std::vector<double> ua = u0.values, ub = u0.values;
    std::vector<double> scratch(ua.size());
    observe(std::size_t{0}, tau, ua, ub);
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = tau + static_cast<double>(k) * dt;
        detail::tamed_em_step_into(ua, scratch, t, dt, path.increments[k], pa);
        detail::tamed_em_step_into(ub, scratch, t, dt, path.increments[k], pb);
        detail::check_blowup(ua, t + dt);
        detail::check_blowup(ub, t + dt);
        observe(k + 1, tau + static_cast<double>(k + 1) * dt, ua, ub);
    }
}

// M independent trajectories, stream_id = stream_base .. stream_base+M-1,
// merged in stream order. Deterministic for any worker count. Per-trajectory
// blowups are aggregated into one error.
struct EnsembleOptions {
    std::uint64_t stream_base = 0;
};

inline std::vector<LatticeState> run_ensemble(
    const std::function<LatticeState(std::size_t)>& u0_sampler, double tau, double t_end,
    double dt, const ModelParams& mp, std::size_t M, std::uint64_t master_seed,
    EnsembleOptions opts = {}) {
    if (M < 1) throw std::invalid_argument("run_ensemble: M must be >= 1");
    mp.validate();
    std::vector<LatticeState> finals(M);
    std::vector<std::string> failures(M);
    parallel_for(M, [&](std::size_t j) {
        try {
            finals[j] = simulate_final(u0_sampler(j), tau, t_end, dt, mp, master_seed,
                                       opts.stream_base + j);
        } catch (const BlowupError& e) {
            failures[j] = e.what();
        }
    });
    std::string summary;
    std::size_t bad = 0;
    for (std::size_t j = 0; j < M; ++j) {
        if (!failures[j].empty()) {
            if (bad == 0) summary = "trajectory " + std::to_string(j) + ": " + failures[j];
            ++bad;
        }
    }
    if (bad > 0) throw AggregateBlowupError("run_ensemble", bad, M, summary);
    return finals;
}

inline std::vector<LatticeState> run_ensemble(const LatticeState& u0, double tau, double t_end,
                                              double dt, const ModelParams& mp, std::size_t M,
                                              std::uint64_t master_seed, EnsembleOptions opts = {}) {
    return run_ensemble([&](std::size_t) { return u0; }, tau, t_end, dt, mp, M, master_seed, opts);
}

// Classical RK4 on the drift alone (epsilon ignored); the deterministic
// reference the epsilon = 0 integrator checks against.
inline LatticeState reference_ode_solve(const LatticeState& u0, double tau, double t_end,
                                        double dt, const ModelParams& mp) {
    detail::check_state(u0, mp, "reference_ode_solve");
    const std::size_t steps = grid_steps(tau, t_end, dt);
    std::vector<double> u = u0.values;
    const std::size_t n = u.size();
    std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
    for (std::size_t k = 0; k < steps; ++k) {
        detail::drift_into(u, k1, mp);
        for (std::size_t j = 0; j < n; ++j) tmp[j] = u[j] + 0.5 * dt * k1[j];
        detail::drift_into(tmp, k2, mp);
        for (std::size_t j = 0; j < n; ++j) tmp[j] = u[j] + 0.5 * dt * k2[j];
        detail::drift_into(tmp, k3, mp);
        for (std::size_t j = 0; j < n; ++j) tmp[j] = u[j] + dt * k3[j];
        detail::drift_into(tmp, k4, mp);
        for (std::size_t j = 0; j < n; ++j)
            u[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        detail::check_blowup(u, tau + static_cast<double>(k + 1) * dt);
    }
    LatticeState out(mp.trunc_radius);
    out.values = std::move(u);
    return out;
}

} // namespace evo
