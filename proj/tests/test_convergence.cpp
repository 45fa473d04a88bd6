#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "evo/convergence.hpp"

using namespace evo;

namespace {

ModelParams small_model(double eps = 0.4) {
    ModelParams mp;
    mp.lambda = 1.0;
    mp.nu = 1.0;
    mp.p = 3.0;
    mp.delta = 1.0;
    mp.epsilon = eps;
    mp.sigma = DiffusionSpec::tanh_bounded();
    mp.g = ForcingSpec::gaussian(1.0, 0.05, 3);
    mp.trunc_radius = 6;
    return mp;
}

constexpr double kDt = 0.01;

} // namespace

TEST_CASE("cip estimate is exactly zero at matching intensities") {
    const auto mp = small_model();
    const auto K = default_K_grid(mp.trunc_radius, 6, 3);
    const auto est = cip_probability(mp, mp.epsilon, 0.0, 1.0, 0.1, K, 40, kDt, 99);
    CHECK(est.sup_estimate == 0.0);
    for (const auto& row : est.per_start) CHECK(row.estimate == 0.0);

    const auto est2 = cip_probability(mp, mp.epsilon, 0.0, 1.0, 0.1, K, 40, kDt, 12345);
    CHECK(est2.sup_estimate == 0.0);
}

TEST_CASE("cip estimate vanishes for an enormous threshold") {
    const auto mp = small_model();
    const auto K = default_K_grid(mp.trunc_radius, 4, 3);
    const auto est = cip_probability(mp, 0.2, 0.0, 1.0, 1e9, K, 30, kDt, 7);
    CHECK(est.sup_estimate == 0.0);
}

TEST_CASE("cip estimates shrink with the intensity offset") {
    const auto mp = small_model(0.45);
    const auto K = default_K_grid(mp.trunc_radius, 6, 11);
    std::vector<double> est;
    for (double off : {0.25, 0.12, 0.06}) {
        const auto c = cip_probability(mp, mp.epsilon - off, 0.0, 1.5, 0.05, K, 80, kDt, 31);
        est.push_back(c.sup_estimate);
    }
    CHECK(est[0] >= est[1]);
    CHECK(est[1] >= est[2]);
    CHECK(est[0] > est[2]); // a real decrease across the sweep
}

TEST_CASE("cip is symmetric under swapping the pair") {
    const auto mp0 = small_model(0.4);
    auto mp1 = small_model(0.25);
    const auto K = default_K_grid(mp0.trunc_radius, 4, 5);
    const auto a = cip_probability(mp0, 0.25, 0.0, 1.0, 0.08, K, 60, kDt, 77);
    const auto b = cip_probability(mp1, 0.40, 0.0, 1.0, 0.08, K, 60, kDt, 77);
    for (std::size_t j = 0; j < a.per_start.size(); ++j)
        CHECK(a.per_start[j].estimate == b.per_start[j].estimate);
}

TEST_CASE("uniform-in-t variant dominates the endpoint variant") {
    const auto mp = small_model(0.45);
    const auto K = default_K_grid(mp.trunc_radius, 4, 13);
    const auto end = cip_probability(mp, 0.25, 0.0, 1.5, 0.05, K, 60, kDt, 3, false);
    const auto unif = cip_probability(mp, 0.25, 0.0, 1.5, 0.05, K, 60, kDt, 3, true);
    CHECK(unif.sup_estimate >= end.sup_estimate);
}

TEST_CASE("feller probe: identical starts give exactly zero gaps") {
    const auto mp = small_model();
    const auto x = LatticeState::basis(mp.trunc_radius, 0, 0.5);
    const auto rep = feller_probe(mp, 0.0, 1.0, {{x, x}}, standard_panel(), 30, kDt, 5);
    for (const auto& r : rep.rows) CHECK(r.gap == 0.0);
    CHECK(rep.mean_endpoint_distance == 0.0);
}

TEST_CASE("feller probe on a deterministic flow respects Lipschitz bounds") {
    auto mp = small_model(0.0);
    const auto x = LatticeState::basis(mp.trunc_radius, 0, 0.8);
    auto y = x;
    y.site(0) += 0.1;
    const auto panel = standard_panel();
    const auto rep = feller_probe(mp, 0.0, 1.0, {{x, y}}, panel, 1, kDt, 5);
    REQUIRE(rep.rows.size() == panel.size());
    for (std::size_t q = 0; q < panel.size(); ++q)
        CHECK(rep.rows[q].gap <= panel[q].lipschitz * rep.mean_endpoint_distance + 1e-12);
}

TEST_CASE("feller gaps shrink along a halving sequence") {
    const auto mp = small_model(0.35);
    const auto base = LatticeState::basis(mp.trunc_radius, 0, 0.5);
    std::vector<std::pair<LatticeState, LatticeState>> pairs;
    for (double h : {0.4, 0.2, 0.1}) {
        auto shifted = base;
        shifted.site(0) += h;
        pairs.emplace_back(base, shifted);
    }
    const auto panel = standard_panel();
    const auto rep = feller_probe(mp, 0.0, 1.0, pairs, panel, 60, kDt, 7);
    // aggregate over the panel: max gap per pair decreases
    std::vector<double> max_gap(pairs.size(), 0.0);
    for (const auto& r : rep.rows)
        max_gap[r.pair_index] = std::max(max_gap[r.pair_index], r.gap);
    CHECK(max_gap[0] > max_gap[1]);
    CHECK(max_gap[1] > max_gap[2]);
}

TEST_CASE("evolution defect vanishes identically for trivial dynamics") {
    auto mp = small_model(0.0);
    mp.g = ForcingSpec::zero();
    const auto fam = evolution_family(mp, 1, 4, {-1.0, 0.0, 1.0}, kDt, 4, 5, 0.5);
    for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t b = a + 1; b < 3; ++b) {
            const auto d = evolution_defect(fam, a, b, kDt, 1, 7);
            CHECK(d.energy_stat == 0.0);
            CHECK(d.energy_p == 1.0);
            CHECK_FALSE(d.rejected(0.01));
        }
}

TEST_CASE("evolution defect of a KB family is statistically null") {
    const auto mp = small_model(0.4);
    const auto fam = evolution_family(mp, 1, 5, {-1.0, 0.5}, kDt, 50, 2024, 0.25);
    const auto d = evolution_defect(fam, 0, 1, kDt, 1, 99);
    CHECK_FALSE(d.rejected(0.01));
}

TEST_CASE("chapman-kolmogorov: exact flow composition at zero noise") {
    auto mp = small_model(0.0);
    const auto rep = chapman_kolmogorov_check(mp, 0.0, 0.6, 1.4, LatticeState::basis(6, 0), 12,
                                              kDt, 3);
    CHECK(rep.exact_equal);
    CHECK_FALSE(rep.rejected(0.01));
}

TEST_CASE("chapman-kolmogorov: degenerate split points keep the law") {
    const auto mp = small_model(0.4);
    const auto u0 = LatticeState::basis(mp.trunc_radius, 0, 0.5);
    for (double r : {0.0, 1.0}) {
        const auto rep = chapman_kolmogorov_check(mp, 0.0, r, 1.0, u0, 150, kDt, 17);
        CHECK_FALSE(rep.rejected(0.01));
    }
}

TEST_CASE("chapman-kolmogorov: generic split passes the two-sample tests") {
    const auto mp = small_model(0.4);
    const auto u0 = LatticeState::basis(mp.trunc_radius, 0, 0.5);
    const auto rep = chapman_kolmogorov_check(mp, 0.0, 0.4, 1.0, u0, 200, kDt, 23);
    CHECK_FALSE(rep.rejected(0.01));
    CHECK(rep.energy_p >= 0.01);
}

TEST_CASE("limit stability: constant epsilon sequence is at the floor") {
    const auto mp = small_model(0.35);
    StabilityOptions opt;
    opt.m = 1;
    opt.k = 4;
    opt.tau_step = 0.5;
    opt.dt = kDt;
    opt.samples_per_node = 10;
    const auto rep = limit_stability_experiment(mp, {0.35, 0.35}, {-1.0, 0.0}, opt, 31);
    for (const auto& d : rep.distances) CHECK(std::abs(d.energy) < 1e-12);
    CHECK(rep.distances_decreasing);
    CHECK(rep.limit_family_evolves);
    CHECK(rep.pass());
}

TEST_CASE("limit stability: defects of the limit family ignore the sequence") {
    const auto mp = small_model(0.4);
    StabilityOptions opt;
    opt.m = 1;
    opt.k = 4;
    opt.tau_step = 0.5;
    opt.dt = kDt;
    opt.samples_per_node = 8;
    const auto rep_a = limit_stability_experiment(mp, {0.2, 0.3}, {-1.0, 0.0}, opt, 77);
    const auto rep_b = limit_stability_experiment(mp, {0.1, 0.15, 0.25}, {-1.0, 0.0}, opt, 77);
    REQUIRE(rep_a.limit_defects.size() == rep_b.limit_defects.size());
    for (std::size_t j = 0; j < rep_a.limit_defects.size(); ++j) {
        CHECK(rep_a.limit_defects[j].energy_stat == rep_b.limit_defects[j].energy_stat);
        CHECK(rep_a.limit_defects[j].energy_p == rep_b.limit_defects[j].energy_p);
        CHECK(rep_a.limit_defects[j].min_panel_p == rep_b.limit_defects[j].min_panel_p);
    }
}

TEST_CASE("limit stability: geometric sequence contracts toward the limit") {
    const auto mp = small_model(0.4);
    StabilityOptions opt;
    opt.m = 1;
    opt.k = 5;
    opt.tau_step = 0.5;
    opt.dt = kDt;
    opt.samples_per_node = 25;
    std::vector<double> eps_seq;
    for (int n = 1; n <= 3; ++n) eps_seq.push_back(0.4 * (1.0 - std::pow(2.0, -n)));
    const auto rep = limit_stability_experiment(mp, eps_seq, {-1.0, 0.5}, opt, 11);
    CHECK(rep.distances_decreasing);
    CHECK(rep.limit_family_evolves);
}
