#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "evo/parallel.hpp"
#include "evo/sde.hpp"
#include "evo/stats.hpp"

using namespace evo;

namespace {

ModelParams desk(int radius = 20) {
    ModelParams mp;
    mp.lambda = 1.0;
    mp.nu = 1.0;
    mp.p = 3.0;
    mp.delta = 1.0;
    mp.epsilon = 0.0;
    mp.sigma = DiffusionSpec::tanh_bounded();
    mp.g = ForcingSpec::zero();
    mp.trunc_radius = radius;
    return mp;
}

ModelParams small_noisy(double eps = 0.25) {
    ModelParams mp = desk(6);
    mp.epsilon = eps;
    mp.g = ForcingSpec::gaussian(1.0, 0.05, 3);
    return mp;
}

} // namespace

TEST_CASE("zero state is a fixed point when g vanishes") {
    const auto mp = desk(5);
    const LatticeState u(5);
    for (double dW : {0.0, 0.3, -2.0}) {
        const auto next = step_tamed_em(u, 0.0, 0.01, dW, mp);
        for (double v : next.values) CHECK(v == 0.0);
    }
}

TEST_CASE("one tamed step matches the hand-computed example") {
    const auto mp = desk(5);
    const auto u = LatticeState::basis(5, 0);
    const auto next = step_tamed_em(u, 0.0, 0.1, 0.0, mp);
    CHECK(next.site(0) == Catch::Approx(0.7191532042497213).epsilon(1e-12));
    CHECK(next.site(1) == Catch::Approx(0.07021169893756969).epsilon(1e-12));
    CHECK(next.site(-1) == Catch::Approx(0.07021169893756969).epsilon(1e-12));
}

TEST_CASE("one tamed step agrees with explicit Euler to O(dt^2)") {
    const auto mp = desk(5);
    const auto u = LatticeState::basis(5, 0);
    const auto f = drift(u, 0.0, mp);
    const double fn = norm(f);
    auto gap = [&](double dt) {
        const auto tamed = step_tamed_em(u, 0.0, dt, 0.0, mp);
        double worst = 0.0;
        for (std::size_t j = 0; j < u.values.size(); ++j) {
            const double euler = u.values[j] + dt * f.values[j];
            worst = std::max(worst, std::abs(tamed.values[j] - euler));
        }
        return worst;
    };
    const double g2 = gap(1e-2), g3 = gap(1e-3);
    CHECK(g2 <= 1e-4 * fn * fn * 1.01);
    CHECK(g3 <= 1e-6 * fn * fn * 1.01);
    CHECK(g2 / g3 == Catch::Approx(100.0).epsilon(0.5)); // quadratic contraction
}

TEST_CASE("simulate: zero everything stays zero") {
    const auto mp = desk(6);
    const auto traj = simulate(LatticeState(6), -1.0, 1.0, 0.01, mp, 7, 0);
    REQUIRE(traj.times.size() == 201);
    for (const auto& s : traj.states)
        for (double v : s.values) CHECK(v == 0.0);
}

TEST_CASE("epsilon = 0 trajectory tracks the reference ODE solver") {
    auto mp = desk(10);
    mp.nu = 1e-9;
    mp.p = 4.0;
    const auto u0 = LatticeState::basis(10, 0);
    const double dt = 1e-4;
    const auto em = simulate_final(u0, 0.0, 2.0, dt, mp, 1, 0);
    const auto ref = reference_ode_solve(u0, 0.0, 2.0, dt, mp);
    CHECK(distance(em, ref) < 1e-4);
    // with nu ~ 0 and p = 4 the decay is at least e^{-lambda t}
    CHECK(norm(em) <= std::exp(-2.0) * 1.001);
}

TEST_CASE("simulate is bitwise deterministic") {
    const auto mp = small_noisy();
    const auto a = simulate(LatticeState::basis(6, 0), 0.0, 1.0, 0.01, mp, 33, 4);
    const auto b = simulate(LatticeState::basis(6, 0), 0.0, 1.0, 0.01, mp, 33, 4);
    CHECK(a.states == b.states);
}

TEST_CASE("coupled simulation equals plain when epsilons agree") {
    const auto mp = small_noisy();
    const auto [ta, tb] = simulate_coupled(LatticeState::basis(6, 1), 0.0, 1.0, 0.01, mp, mp, 5, 2);
    CHECK(ta.states == tb.states);

    ModelParams m0 = mp;
    m0.epsilon = 0.0;
    const auto [za, zb] = simulate_coupled(LatticeState::basis(6, 1), 0.0, 1.0, 0.01, m0, m0, 5, 2);
    double worst = 0.0;
    for (std::size_t k = 0; k < za.states.size(); ++k)
        worst = std::max(worst, distance(za.states[k], zb.states[k]));
    CHECK(worst == 0.0);
}

TEST_CASE("coupled simulation rejects non-epsilon parameter differences") {
    const auto mp = small_noisy();
    ModelParams other = mp;
    other.nu = 2.0;
    CHECK_THROWS_AS(simulate_coupled(LatticeState(6), 0.0, 1.0, 0.01, mp, other, 1, 0),
                    std::invalid_argument);
}

TEST_CASE("coupled distance shrinks with the epsilon offset") {
    const auto mp = small_noisy(0.45);
    const auto u0 = LatticeState::basis(6, 0, 0.5);
    const std::size_t M = 60;
    std::vector<double> means;
    for (double off : {0.2, 0.1, 0.05}) {
        ModelParams pe = mp;
        pe.epsilon = mp.epsilon - off;
        std::vector<double> dist_samples(M);
        parallel_for(M, [&](std::size_t s) {
            const std::size_t steps = grid_steps(0.0, 1.0, 0.01);
            const auto path = WienerPath::generate(77, s, 0.0, 0.01, steps);
            double d_end = 0.0;
            integrate_coupled_observed(u0, 0.0, steps, 0.01, pe, mp, path,
                                       [&](std::size_t k, double, const std::vector<double>& a,
                                           const std::vector<double>& b) {
                                           if (k != steps) return;
                                           double d = 0.0;
                                           for (std::size_t j = 0; j < a.size(); ++j)
                                               d += (a[j] - b[j]) * (a[j] - b[j]);
                                           d_end = std::sqrt(d);
                                       });
            dist_samples[s] = d_end;
        });
        means.push_back(stats::mean(dist_samples));
    }
    CHECK(means[0] > means[1]);
    CHECK(means[1] > means[2]);
    CHECK(means[2] > 0.0);
}

TEST_CASE("run_ensemble basics") {
    const auto mp = small_noisy();
    const auto u0 = LatticeState::basis(6, 0, 0.7);
    const auto finals = run_ensemble(u0, 0.0, 0.5, 0.01, mp, 5, 99);
    REQUIRE(finals.size() == 5);
    CHECK(finals[0] == simulate_final(u0, 0.0, 0.5, 0.01, mp, 99, 0));

    ModelParams det = mp;
    det.epsilon = 0.0;
    const auto fixed = run_ensemble(u0, 0.0, 0.5, 0.01, det, 4, 99);
    for (const auto& s : fixed) CHECK(s == fixed[0]);
}

TEST_CASE("run_ensemble is independent of the worker count") {
    const auto mp = small_noisy();
    const auto u0 = LatticeState::basis(6, 0, 0.7);
    set_max_threads(1);
    const auto serial = run_ensemble(u0, 0.0, 0.5, 0.01, mp, 16, 7);
    set_max_threads(3);
    const auto threaded = run_ensemble(u0, 0.0, 0.5, 0.01, mp, 16, 7);
    set_max_threads(0);
    CHECK(serial == threaded);
}

TEST_CASE("ensemble mean CI shrinks like 1/sqrt(M)") {
    const auto mp = small_noisy();
    const auto u0 = LatticeState(6);
    std::vector<double> widths;
    for (std::size_t M : {100u, 400u, 1600u}) {
        const auto finals = run_ensemble(u0, 0.0, 1.0, 0.01, mp, M, 1234);
        std::vector<double> sq(M);
        for (std::size_t j = 0; j < M; ++j) sq[j] = sq_norm(finals[j]);
        const auto ci = stats::bootstrap_mean_ci(sq, 400, 0.95, 9);
        widths.push_back(ci.half_width());
    }
    CHECK(widths[0] / widths[1] == Catch::Approx(2.0).epsilon(0.45));
    CHECK(widths[1] / widths[2] == Catch::Approx(2.0).epsilon(0.45));
}

TEST_CASE("mean-square self-difference contracts like sqrt(dt)") {
    const auto mp = small_noisy(0.4);
    const auto u0 = LatticeState::basis(6, 0, 0.5);
    const double dt_fine = 0.0025;
    const std::size_t M = 150;
    // error(dt) = rms distance between the dt and dt/2 solutions on shared noise
    auto level_error = [&](std::size_t coarsen_factor) {
        std::vector<double> sq(M);
        parallel_for(M, [&](std::size_t s) {
            const std::size_t fine_steps = grid_steps(0.0, 1.0, dt_fine);
            const auto fine = WienerPath::generate(4242, s, 0.0, dt_fine, fine_steps);
            const auto coarse = fine.coarsen(coarsen_factor);
            const auto half = fine.coarsen(coarsen_factor / 2);
            auto run = [&](const WienerPath& w) {
                return integrate_observed(u0, 0.0, w.increments.size(), w.dt, mp, w,
                                          [](std::size_t, double, const std::vector<double>&) {});
            };
            sq[s] = std::pow(distance(run(coarse), run(half)), 2.0);
        });
        return std::sqrt(stats::mean(sq));
    };
    const double e_coarse = level_error(4); // dt=0.01 vs dt=0.005
    const double e_fine = level_error(2);   // dt=0.005 vs dt=0.0025
    CHECK(e_coarse / e_fine == Catch::Approx(std::sqrt(2.0)).epsilon(0.35));
}

TEST_CASE("blowup is detected and carries position") {
    auto mp = small_noisy();
    const auto u = LatticeState::basis(6, 0);
    try {
        (void)step_tamed_em(u, 0.0, 0.01, 1e200, mp);
        FAIL("expected BlowupError");
    } catch (const BlowupError& e) {
        CHECK(e.t == Catch::Approx(0.01));
        CHECK(e.state_norm > 1e10);
    }
}

TEST_CASE("grid construction snaps t_end") {
    CHECK(grid_steps(0.0, 1.0, 0.01) == 100);
    CHECK(grid_steps(-3.0, -1.0, 0.1) == 20);
    CHECK(grid_steps(0.0, 1.0004, 0.001) == 1000);
    CHECK_THROWS_AS(grid_steps(1.0, 0.0, 0.1), std::invalid_argument);
}
