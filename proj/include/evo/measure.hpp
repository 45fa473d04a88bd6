#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "evo/lattice.hpp"
#include "evo/sde.hpp"
#include "evo/stats.hpp"

namespace evo {

struct MeasureProvenance {
    double time = 0.0; // the time this measure represents
    int k = 0;
    int m = 0;
    double tau_step = 0.0;
    std::size_t samples_per_node = 0;
    std::uint64_t seed = 0;
};

// Weighted sample cloud approximating a probability measure on the truncated
// state space.
struct EmpiricalMeasure {
    std::vector<LatticeState> atoms;
    std::vector<double> weights;
    MeasureProvenance prov;

    std::size_t size() const { return atoms.size(); }

    int radius() const {
        if (atoms.empty()) throw std::logic_error("EmpiricalMeasure: empty");
        return atoms.front().radius();
    }

    void validate() const {
        if (atoms.empty() || atoms.size() != weights.size())
            throw std::invalid_argument("EmpiricalMeasure: atoms/weights mismatch or empty");
        double total = 0.0;
        const int I = atoms.front().radius();
        for (std::size_t j = 0; j < atoms.size(); ++j) {
            if (atoms[j].radius() != I)
                throw std::invalid_argument("EmpiricalMeasure: mixed truncation radii");
            if (!atoms[j].finite())
                throw std::invalid_argument("EmpiricalMeasure: non-finite atom");
            if (weights[j] < 0.0) throw std::invalid_argument("EmpiricalMeasure: negative weight");
            total += weights[j];
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw std::invalid_argument("EmpiricalMeasure: weights sum to " + std::to_string(total));
    }

    static EmpiricalMeasure point_mass(LatticeState u) {
        EmpiricalMeasure mu;
        mu.atoms.push_back(std::move(u));
        mu.weights.push_back(1.0);
        return mu;
    }

    static EmpiricalMeasure uniform(std::vector<LatticeState> atoms_) {
        EmpiricalMeasure mu;
        mu.atoms = std::move(atoms_);
        mu.weights.assign(mu.atoms.size(), 1.0 / static_cast<double>(mu.atoms.size()));
        return mu;
    }
};

namespace seed_salt {
// Fixed purpose tags for sub-seed derivation.
inline constexpr std::uint64_t kKbMeasure = 0x6b626d6561ull;
inline constexpr std::uint64_t kPushForward = 0x70757368ull;
inline constexpr std::uint64_t kFamilyBase = 0x66616d30ull;
} // namespace seed_salt

// Krylov-Bogolyubov time-average measure: uniform mixture over a midpoint
// tau-grid on [-k, -m] of the laws of u(t_eval, tau, 0), each law sampled by
// an ensemble of size samples_per_node. Atom (node j, sample s) uses Wiener
// stream j*samples_per_node + s, so the construction is reproducible and
// couples across parameter sets sharing a seed.
inline EmpiricalMeasure kb_measure(const ModelParams& mp, int k, int m, double tau_step,
                                   std::size_t samples_per_node, double t_eval,
                                   std::uint64_t seed, double dt) {
    mp.validate();
    if (!(k > m) || m < 0) throw std::invalid_argument("kb_measure: need k > m >= 0");
    if (!(tau_step > 0.0)) throw std::invalid_argument("kb_measure: tau_step must be > 0");
    if (samples_per_node < 1) throw std::invalid_argument("kb_measure: need >= 1 sample per node");
    const std::size_t nodes =
        static_cast<std::size_t>(std::llround(static_cast<double>(k - m) / tau_step));
    if (nodes == 0) throw std::invalid_argument("kb_measure: empty tau grid");
    if (t_eval < static_cast<double>(-m))
        throw std::invalid_argument("kb_measure: t_eval must be >= -m");

    const std::uint64_t sim_seed = rng::derive_seed(seed, seed_salt::kKbMeasure);
    const std::size_t total = nodes * samples_per_node;
    EmpiricalMeasure mu;
    mu.atoms.resize(total);
    mu.weights.assign(total, 1.0 / static_cast<double>(total));
    mu.prov = {t_eval, k, m, tau_step, samples_per_node, seed};

    std::vector<std::string> failures(total);
    const LatticeState origin(mp.trunc_radius);
    parallel_for(total, [&](std::size_t idx) {
        const std::size_t node = idx / samples_per_node;
        const double tau = -static_cast<double>(k) + (static_cast<double>(node) + 0.5) * tau_step;
        try {
            mu.atoms[idx] = simulate_final(origin, tau, t_eval, dt, mp, sim_seed, idx);
        } catch (const BlowupError& e) {
            failures[idx] = e.what();
        }
    });
    for (std::size_t idx = 0; idx < total; ++idx)
        if (!failures[idx].empty())
            throw AggregateBlowupError("kb_measure", 1, total,
                                       "atom " + std::to_string(idx) + ": " + failures[idx]);
    return mu;
}

// Realizes the adjoint operator Q_{tau,t}: each atom is simulated forward
// from tau to t. With replicas > 1 each atom spawns that many noise
// realizations and its weight is divided accordingly. t == tau is the
// identity.
inline EmpiricalMeasure push_forward(const EmpiricalMeasure& mu, double tau, double t,
                                     const ModelParams& mp, double dt, std::uint64_t seed,
                                     std::size_t replicas = 1) {
    mu.validate();
    mp.validate();
    if (t < tau) throw std::invalid_argument("push_forward: t must be >= tau");
    if (replicas < 1) throw std::invalid_argument("push_forward: replicas must be >= 1");
    if (t == tau) return mu;

    const std::uint64_t sim_seed = rng::derive_seed(seed, seed_salt::kPushForward);
    const std::size_t total = mu.size() * replicas;
    EmpiricalMeasure out;
    out.atoms.resize(total);
    out.weights.resize(total);
    out.prov = mu.prov;
    out.prov.time = t;
    out.prov.seed = seed;

    std::vector<std::string> failures(total);
    parallel_for(total, [&](std::size_t idx) {
        const std::size_t a = idx / replicas;
        try {
            out.atoms[idx] = simulate_final(mu.atoms[a], tau, t, dt, mp, sim_seed, idx);
        } catch (const BlowupError& e) {
            failures[idx] = e.what();
        }
        out.weights[idx] = mu.weights[a] / static_cast<double>(replicas);
    });
    for (std::size_t idx = 0; idx < total; ++idx)
        if (!failures[idx].empty())
            throw AggregateBlowupError("push_forward", 1, total,
                                       "atom " + std::to_string(idx) + ": " + failures[idx]);
    return out;
}

struct FamilyConstruction {
    int m = 0;
    int k = 0;
    double tau_step = 0.0;
    std::size_t samples_per_node = 0;
};

// Time-indexed family mu_t = Q_{-m,t} eta_{k,m} over the given times.
struct EvolutionFamily {
    std::vector<double> times;
    std::vector<EmpiricalMeasure> measures;
    ModelParams params;
    FamilyConstruction construction;

    const EmpiricalMeasure& at(std::size_t i) const { return measures.at(i); }
};

inline EvolutionFamily evolution_family(const ModelParams& mp, int m, int k,
                                        const std::vector<double>& times, double dt,
                                        std::size_t samples_per_node, std::uint64_t seed,
                                        double tau_step) {
    if (times.empty()) throw std::invalid_argument("evolution_family: empty time list");
    for (double t : times)
        if (t < static_cast<double>(-m))
            throw std::invalid_argument("evolution_family: all times must be >= -m");
    EvolutionFamily fam;
    fam.times = times;
    fam.params = mp;
    fam.construction = {m, k, tau_step, samples_per_node};
    const EmpiricalMeasure eta = kb_measure(mp, k, m, tau_step, samples_per_node,
                                            static_cast<double>(-m), seed, dt);
    fam.measures.reserve(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
        fam.measures.push_back(push_forward(eta, static_cast<double>(-m), times[i], mp, dt,
                                            rng::derive_seed(seed, seed_salt::kFamilyBase + i)));
    }
    return fam;
}

// Scalar functionals used for exact one-dimensional Wasserstein comparisons.
struct ScalarFunctional {
    enum class Kind { coordinate, sq_norm, tail };
    Kind kind = Kind::sq_norm;
    int index = 0; // site for coordinate, n for tail

    static ScalarFunctional coordinate(int site) { return {Kind::coordinate, site}; }
    static ScalarFunctional sq_norm_f() { return {Kind::sq_norm, 0}; }
    static ScalarFunctional tail(int n) { return {Kind::tail, n}; }

    double operator()(const LatticeState& u) const {
        switch (kind) {
            case Kind::coordinate: return u.site(index);
            case Kind::sq_norm: return sq_norm(u);
            case Kind::tail: return tail_sq_norm(u, index);
        }
        return 0.0;
    }

    std::string name() const {
        switch (kind) {
            case Kind::coordinate: return "coord[" + std::to_string(index) + "]";
            case Kind::sq_norm: return "sq_norm";
            case Kind::tail: return "tail[" + std::to_string(index) + "]";
        }
        return "?";
    }
};

// Exact W1 between the push-forwards of two measures under a scalar functional.
inline double w1_functional(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                            const ScalarFunctional& f) {
    a.validate();
    b.validate();
    std::vector<double> va(a.size()), vb(b.size());
    for (std::size_t j = 0; j < a.size(); ++j) va[j] = f(a.atoms[j]);
    for (std::size_t j = 0; j < b.size(); ++j) vb[j] = f(b.atoms[j]);
    return stats::w1_weighted_1d(std::move(va), a.weights, std::move(vb), b.weights);
}

// Energy distance 2 E||X-Y|| - E||X-X'|| - E||Y-Y'|| with weighted
// V-statistics. Nonnegative; zero iff the clouds agree as distributions.
inline double energy_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
    a.validate();
    b.validate();
    if (a.radius() != b.radius())
        throw std::invalid_argument("energy_distance: truncation radii differ");
    auto within = [](const EmpiricalMeasure& m) {
        const std::size_t n = m.size();
        std::vector<double> partial(n, 0.0);
        parallel_for(n, [&](std::size_t i) {
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                s += m.weights[j] * distance(m.atoms[i], m.atoms[j]);
            partial[i] = m.weights[i] * s;
        });
        double out = 0.0;
        for (double v : partial) out += v;
        return out;
    };
    const std::size_t na = a.size();
    std::vector<double> cross_partial(na, 0.0);
    parallel_for(na, [&](std::size_t i) {
        double s = 0.0;
        for (std::size_t j = 0; j < b.size(); ++j)
            s += b.weights[j] * distance(a.atoms[i], b.atoms[j]);
        cross_partial[i] = a.weights[i] * s;
    });
    double cross = 0.0;
    for (double v : cross_partial) cross += v;
    return 2.0 * cross - within(a) - within(b);
}

// Energy distance with a crude SE from disjoint strided sub-clouds; the trend
// tests need a noise scale, not a tight interval.
struct EnergySplitEstimate {
    double value = 0.0;  // full-cloud estimate
    double se = 0.0;     // sd of block estimates / sqrt(blocks)
};

inline EnergySplitEstimate energy_distance_with_se(const EmpiricalMeasure& a,
                                                   const EmpiricalMeasure& b, int blocks = 4) {
    EnergySplitEstimate out;
    out.value = energy_distance(a, b);
    if (blocks < 2 || a.size() < static_cast<std::size_t>(2 * blocks) ||
        b.size() < static_cast<std::size_t>(2 * blocks))
        return out;
    std::vector<double> vals;
    for (int g = 0; g < blocks; ++g) {
        auto slice = [&](const EmpiricalMeasure& m) {
            EmpiricalMeasure s;
            for (std::size_t j = static_cast<std::size_t>(g); j < m.size();
                 j += static_cast<std::size_t>(blocks))
                s.atoms.push_back(m.atoms[j]);
            s.weights.assign(s.atoms.size(), 1.0 / static_cast<double>(s.atoms.size()));
            s.prov = m.prov;
            return s;
        };
        vals.push_back(energy_distance(slice(a), slice(b)));
    }
    out.se = stats::sample_sd(vals) / std::sqrt(static_cast<double>(blocks));
    return out;
}

// Bounded-Lipschitz test functions phi with |phi| <= bound.
struct TestFunction {
    std::string name;
    double bound = 1.0;
    double lipschitz = 1.0;
    std::function<double(const LatticeState&)> f;
};

// The fixed 12-function panel: coordinate squashers, norm cutoffs, and
// products of two squashed coordinates.
inline std::vector<TestFunction> standard_panel() {
    auto coord_tanh = [](int i) {
        return TestFunction{"tanh(u_" + std::to_string(i) + ")", 1.0, 1.0,
                            [i](const LatticeState& u) { return std::tanh(u.site(i)); }};
    };
    auto prod_tanh = [](int i, int j) {
        return TestFunction{"tanh(u_" + std::to_string(i) + ")tanh(u_" + std::to_string(j) + ")",
                            1.0, 1.4142135623730951, [i, j](const LatticeState& u) {
                                return std::tanh(u.site(i)) * std::tanh(u.site(j));
                            }};
    };
    std::vector<TestFunction> panel;
    panel.push_back(coord_tanh(0));
    panel.push_back(coord_tanh(1));
    panel.push_back(coord_tanh(-1));
    panel.push_back(coord_tanh(2));
    panel.push_back(coord_tanh(-2));
    panel.push_back({"tanh(norm)", 1.0, 1.0,
                     [](const LatticeState& u) { return std::tanh(norm(u)); }});
    panel.push_back({"min(norm,1)", 1.0, 1.0,
                     [](const LatticeState& u) { return std::min(norm(u), 1.0); }});
    panel.push_back({"1/(1+sq_norm)", 1.0, 0.6495,
                     [](const LatticeState& u) { return 1.0 / (1.0 + sq_norm(u)); }});
    panel.push_back(prod_tanh(0, 1));
    panel.push_back(prod_tanh(-1, 1));
    panel.push_back(prod_tanh(0, -1));
    panel.push_back(prod_tanh(1, 2));
    return panel;
}

// Weighted mean of each panel function over the atoms.
inline std::vector<double> test_function_pairing(const EmpiricalMeasure& mu,
                                                 const std::vector<TestFunction>& panel) {
    mu.validate();
    if (panel.empty()) throw std::invalid_argument("test_function_pairing: empty panel");
    std::vector<double> out(panel.size(), 0.0);
    for (std::size_t q = 0; q < panel.size(); ++q) {
        double s = 0.0;
        for (std::size_t j = 0; j < mu.size(); ++j) s += mu.weights[j] * panel[q].f(mu.atoms[j]);
        out[q] = s;
    }
    return out;
}

} // namespace evo
