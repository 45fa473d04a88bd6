#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "evo/parallel.hpp"
#include "evo/rng.hpp"

namespace evo::stats {

inline double mean(const std::vector<double>& xs) {
    if (xs.empty()) throw std::invalid_argument("mean: empty sample");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double sample_variance(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size() - 1);
}

inline double sample_sd(const std::vector<double>& xs) { return std::sqrt(sample_variance(xs)); }

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw std::invalid_argument("quantile: empty sample");
    if (q <= 0.0) return sorted.front();
    if (q >= 1.0) return sorted.back();
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    double half_width() const { return 0.5 * (hi - lo); }
};

// Percentile bootstrap for the sample mean. Deterministic given the seed.
inline Interval bootstrap_mean_ci(const std::vector<double>& xs, int resamples = 400,
                                  double level = 0.95, std::uint64_t seed = 1) {
    if (xs.empty()) throw std::invalid_argument("bootstrap_mean_ci: empty sample");
    const std::size_t n = xs.size();
    std::vector<double> means(static_cast<std::size_t>(resamples));
    parallel_for(means.size(), [&](std::size_t b) {
        rng::UniformStream u(seed, b);
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += xs[u.below(n)];
        means[b] = s / static_cast<double>(n);
    });
    std::sort(means.begin(), means.end());
    const double alpha = 0.5 * (1.0 - level);
    return {quantile_sorted(means, alpha), quantile_sorted(means, 1.0 - alpha)};
}

// Wilson score interval for a binomial proportion.
inline Interval wilson_ci(std::size_t successes, std::size_t n, double level = 0.95) {
    if (n == 0) throw std::invalid_argument("wilson_ci: n must be > 0");
    const double z = level >= 0.99 ? 2.5758293035489004 : 1.9599639845400545;
    const double nn = static_cast<double>(n);
    const double ph = static_cast<double>(successes) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double center = (ph + z2 / (2.0 * nn)) / denom;
    const double hw = z * std::sqrt(ph * (1.0 - ph) / nn + z2 / (4.0 * nn * nn)) / denom;
    return {std::max(0.0, center - hw), std::min(1.0, center + hw)};
}

// Exact Wasserstein-1 between two weighted samples on the line, by quantile
// coupling of the sorted atoms.
inline double w1_weighted_1d(std::vector<double> va, std::vector<double> wa,
                             std::vector<double> vb, std::vector<double> wb) {
    if (va.empty() || vb.empty()) throw std::invalid_argument("w1: empty sample");
    if (va.size() != wa.size() || vb.size() != wb.size())
        throw std::invalid_argument("w1: values/weights length mismatch");
    auto sort_pair = [](std::vector<double>& v, std::vector<double>& w) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> v2(v.size()), w2(v.size());
        double total = std::accumulate(w.begin(), w.end(), 0.0);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            v2[k] = v[idx[k]];
            w2[k] = w[idx[k]] / total;
        }
        v = std::move(v2);
        w = std::move(w2);
    };
    sort_pair(va, wa);
    sort_pair(vb, wb);
    // Walk the merged quantile grid; each segment pairs one atom of a with
    // one atom of b over the shared mass interval.
    double out = 0.0, prev = 0.0;
    std::size_t i = 0, j = 0;
    double ca = wa[0], cb = wb[0];
    while (i < va.size() && j < vb.size()) {
        const double cur = std::min(ca, cb);
        out += (cur - prev) * std::abs(va[i] - vb[j]);
        prev = cur;
        const bool advance_a = (ca == cur), advance_b = (cb == cur);
        if (advance_a) {
            ++i;
            ca = i < va.size() ? cur + wa[i] : 2.0;
        }
        if (advance_b) {
            ++j;
            cb = j < vb.size() ? cur + wb[j] : 2.0;
        }
    }
    return out;
}

struct PermTestResult {
    double statistic = 0.0;
    double p_value = 1.0;
    bool rejects(double alpha) const { return p_value < alpha; }
};

// Two-sample permutation test on |mean(X) - mean(Y)|.
inline PermTestResult perm_test_mean_diff(const std::vector<double>& xs,
                                          const std::vector<double>& ys, int n_perm = 999,
                                          std::uint64_t seed = 1) {
    if (xs.empty() || ys.empty()) throw std::invalid_argument("perm test: empty sample");
    const std::size_t na = xs.size(), n = na + ys.size();
    std::vector<double> pool(xs);
    pool.insert(pool.end(), ys.begin(), ys.end());
    const double total = std::accumulate(pool.begin(), pool.end(), 0.0);
    auto stat_for = [&](double sum_a) {
        const double ma = sum_a / static_cast<double>(na);
        const double mb = (total - sum_a) / static_cast<double>(n - na);
        return std::abs(ma - mb);
    };
    const double observed = stat_for(std::accumulate(xs.begin(), xs.end(), 0.0));
    std::vector<int> exceed(static_cast<std::size_t>(n_perm), 0);
    parallel_for(exceed.size(), [&](std::size_t b) {
        rng::UniformStream u(seed, b);
        // Partial Fisher-Yates: draw na pooled indices without replacement.
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        double sum_a = 0.0;
        for (std::size_t k = 0; k < na; ++k) {
            const std::size_t r = k + u.below(n - k);
            std::swap(idx[k], idx[r]);
            sum_a += pool[idx[k]];
        }
        exceed[b] = stat_for(sum_a) >= observed - 1e-15 ? 1 : 0;
    });
    const int count = std::accumulate(exceed.begin(), exceed.end(), 0);
    return {observed, (1.0 + count) / (1.0 + static_cast<double>(n_perm))};
}

// Two-sample energy-distance permutation test over points with a caller
// supplied metric. Uses one pooled distance matrix plus row sums, so each
// permutation costs O(|A|^2) lookups.
template <class Point, class Dist>
PermTestResult energy_perm_test(const std::vector<Point>& A, const std::vector<Point>& B,
                                Dist&& dist, int n_perm = 999, std::uint64_t seed = 1) {
    const std::size_t na = A.size(), nb = B.size(), n = na + nb;
    if (na == 0 || nb == 0) throw std::invalid_argument("energy test: empty sample");
    std::vector<float> D(n * n, 0.0f);
    auto point_at = [&](std::size_t i) -> const Point& { return i < na ? A[i] : B[i - na]; };
    parallel_for(n, [&](std::size_t i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const float d = static_cast<float>(dist(point_at(i), point_at(j)));
            D[i * n + j] = d;
            D[j * n + i] = d;
        }
    });
    std::vector<double> row_sum(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += D[i * n + j];
        row_sum[i] = s;
    }
    const double T = std::accumulate(row_sum.begin(), row_sum.end(), 0.0);
    auto energy_for = [&](const std::size_t* a_idx) {
        double s_arow = 0.0;
        for (std::size_t k = 0; k < na; ++k) s_arow += row_sum[a_idx[k]];
        double s_aa = 0.0;
        for (std::size_t k = 0; k < na; ++k) {
            const float* row = &D[a_idx[k] * n];
            double acc = 0.0;
            for (std::size_t l = 0; l < na; ++l) acc += row[a_idx[l]];
            s_aa += acc;
        }
        const double s_ab = s_arow - s_aa;
        const double s_bb = T - 2.0 * s_arow + s_aa;
        const double fa = static_cast<double>(na), fb = static_cast<double>(nb);
        return 2.0 * s_ab / (fa * fb) - s_aa / (fa * fa) - s_bb / (fb * fb);
    };
    std::vector<std::size_t> ident(n);
    std::iota(ident.begin(), ident.end(), std::size_t{0});
    const double observed = energy_for(ident.data());
    std::vector<int> exceed(static_cast<std::size_t>(n_perm), 0);
    parallel_for(exceed.size(), [&](std::size_t b) {
        rng::UniformStream u(seed, b);
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (std::size_t k = 0; k < na; ++k) std::swap(idx[k], idx[k + u.below(n - k)]);
        exceed[b] = energy_for(idx.data()) >= observed - 1e-15 ? 1 : 0;
    });
    const int count = std::accumulate(exceed.begin(), exceed.end(), 0);
    return {observed, (1.0 + count) / (1.0 + static_cast<double>(n_perm))};
}

// Monotone-decreasing trend over noisy estimates: no consecutive pair may
// increase significantly, and the net first-to-last drop must be significant
// (one-sided z at the given level). Zero-SE inputs degrade to the exact
// comparisons. An all-(near-)zero profile passes, it is already at the floor.
struct TrendResult {
    bool pass = false;
    double worst_increase = 0.0; // max over consecutive pairs of (e_{j+1} - e_j) - z*se
    double net_decrease = 0.0;   // e_first - e_last
    std::string detail;
};

inline TrendResult monotone_decreasing_trend(const std::vector<double>& est,
                                             const std::vector<double>& se,
                                             double z = 1.6448536269514722,
                                             double atol = 1e-12) {
    if (est.size() < 2 || est.size() != se.size())
        throw std::invalid_argument("trend: need >= 2 estimates with matching SEs");
    TrendResult out;
    out.worst_increase = -std::numeric_limits<double>::infinity();
    bool increase_violation = false;
    for (std::size_t j = 0; j + 1 < est.size(); ++j) {
        const double inc = est[j + 1] - est[j];
        const double s = std::sqrt(se[j] * se[j] + se[j + 1] * se[j + 1]);
        const double slack_inc = inc - z * s;
        out.worst_increase = std::max(out.worst_increase, slack_inc);
        if (s == 0.0 ? inc > atol : slack_inc > 0.0) increase_violation = true;
    }
    out.net_decrease = est.front() - est.back();
    const double s_net = std::sqrt(se.front() * se.front() + se.back() * se.back());
    double peak = 0.0;
    for (double e : est) peak = std::max(peak, std::abs(e));
    const bool at_floor = peak <= atol;
    const bool net_ok = s_net == 0.0 ? out.net_decrease > atol : out.net_decrease > z * s_net;
    out.pass = !increase_violation && (net_ok || at_floor);
    out.detail = increase_violation ? "significant increase between consecutive points"
                 : (!out.pass ? "net decrease not significant" : "ok");
    return out;
}

} // namespace evo::stats
