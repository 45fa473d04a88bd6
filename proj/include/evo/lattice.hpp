#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace evo {

// A truncation of a point of l2(Z): sites i in [-I, I] stored at index i + I.
struct LatticeState {
    std::vector<double> values;

    LatticeState() = default;
    explicit LatticeState(int radius) : values(static_cast<std::size_t>(2 * radius + 1), 0.0) {
        if (radius < 0) throw std::invalid_argument("LatticeState: negative radius");
    }

    static LatticeState basis(int radius, int site, double amplitude = 1.0) {
        LatticeState u(radius);
        u.site(site) = amplitude;
        return u;
    }

    int radius() const { return (static_cast<int>(values.size()) - 1) / 2; }

    double site(int i) const { return values[static_cast<std::size_t>(i + radius())]; }
    double& site(int i) { return values[static_cast<std::size_t>(i + radius())]; }

    bool finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool operator==(const LatticeState&) const = default;
};

inline double sq_norm(const LatticeState& u) {
    double s = 0.0;
    for (double v : u.values) s += v * v;
    return s;
}

inline double norm(const LatticeState& u) { return std::sqrt(sq_norm(u)); }

inline double dot(const LatticeState& a, const LatticeState& b) {
    if (a.values.size() != b.values.size())
        throw std::invalid_argument("dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t j = 0; j < a.values.size(); ++j) s += a.values[j] * b.values[j];
    return s;
}

inline double distance(const LatticeState& a, const LatticeState& b) {
    if (a.values.size() != b.values.size())
        throw std::invalid_argument("distance: dimension mismatch");
    double s = 0.0;
    for (std::size_t j = 0; j < a.values.size(); ++j) {
        const double d = a.values[j] - b.values[j];
        s += d * d;
    }
    return std::sqrt(s);
}

// Sum of |u_i|^2 over |i| >= n. n = 0 gives the full square norm.
inline double tail_sq_norm(const LatticeState& u, int n) {
    if (n < 0) throw std::invalid_argument("tail_sq_norm: n must be >= 0");
    const int I = u.radius();
    if (n > I) return 0.0;
    double s = 0.0;
    for (int i = std::max(n, 1); i <= I; ++i)
        s += u.site(i) * u.site(i) + u.site(-i) * u.site(-i);
    if (n == 0) s += u.site(0) * u.site(0);
    return s;
}

// (inner, outer): inner keeps sites |i| <= n, outer the rest.
inline std::pair<LatticeState, LatticeState> truncation_split(const LatticeState& u, int n) {
    if (n < 0) throw std::invalid_argument("truncation_split: n must be >= 0");
    const int I = u.radius();
    LatticeState inner(I), outer(I);
    for (int i = -I; i <= I; ++i)
        (std::abs(i) <= n ? inner : outer).site(i) = u.site(i);
    return {std::move(inner), std::move(outer)};
}

enum class DiffusionFamily { tanh_bounded, linear_saturated, zero };
enum class ForcingFamily { gaussian_decay, exp_past_decay, zero };

inline const char* to_string(DiffusionFamily f) {
    switch (f) {
        case DiffusionFamily::tanh_bounded: return "tanh_bounded";
        case DiffusionFamily::linear_saturated: return "linear_saturated";
        case DiffusionFamily::zero: return "zero";
    }
    return "?";
}

inline const char* to_string(ForcingFamily f) {
    switch (f) {
        case ForcingFamily::gaussian_decay: return "gaussian_decay";
        case ForcingFamily::exp_past_decay: return "exp_past_decay";
        case ForcingFamily::zero: return "zero";
    }
    return "?";
}

// Time-dependent forcing g_i(t), constant across the (finite) support.
//   gaussian_decay : g_i(t) = a exp(-b t^2) 1{|i| <= support_radius}, b > 0
//   exp_past_decay : g_i(t) = a exp(c t)    1{|i| <= support_radius}, c > -lambda/2
//   zero           : g == 0
struct ForcingSpec {
    ForcingFamily family = ForcingFamily::zero;
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    int support_radius = 0;

    static ForcingSpec zero() { return {}; }
    static ForcingSpec gaussian(double a, double b, int support_radius) {
        return {ForcingFamily::gaussian_decay, a, b, 0.0, support_radius};
    }
    static ForcingSpec exp_past(double a, double c, int support_radius) {
        return {ForcingFamily::exp_past_decay, a, 0.0, c, support_radius};
    }

    double amplitude_at(double t) const {
        switch (family) {
            case ForcingFamily::gaussian_decay: return a * std::exp(-b * t * t);
            case ForcingFamily::exp_past_decay: return a * std::exp(c * t);
            case ForcingFamily::zero: return 0.0;
        }
        return 0.0;
    }

    double site_value(int i, double t) const {
        if (family == ForcingFamily::zero || std::abs(i) > support_radius) return 0.0;
        return amplitude_at(t);
    }

    int support_site_count() const {
        return family == ForcingFamily::zero ? 0 : 2 * support_radius + 1;
    }

    // Number of support sites with |i| >= n.
    int support_sites_beyond(int n) const {
        if (family == ForcingFamily::zero || n > support_radius) return 0;
        if (n <= 0) return support_site_count();
        return 2 * (support_radius - n + 1);
    }

    // ||g(t)||^2 over the full lattice (the support is finite, so exact).
    double sq_norm_at(double t) const {
        const double amp = amplitude_at(t);
        return amp * amp * support_site_count();
    }

    // Sum over |i| >= n of |g_i(t)|^2.
    double tail_sq_norm_at(double t, int n) const {
        const double amp = amplitude_at(t);
        return amp * amp * support_sites_beyond(n);
    }

    // Closed form of int_{-inf}^t e^{lambda r} ||g(r)||^2 dr.
    double weighted_integral(double lambda, double t) const;

    // Closed form of int_{-inf}^t e^{lambda (r - t)} ||g(r)||^2 dr, evaluated
    // in log space so large |t| cannot overflow.
    double weighted_integral_shifted(double lambda, double t) const;

    // Same integral with only the sites |i| >= n contributing.
    double weighted_tail_integral(double lambda, double t, int n) const {
        if (family == ForcingFamily::zero) return 0.0;
        const double full = weighted_integral(lambda, t);
        const double frac = static_cast<double>(support_sites_beyond(n)) /
                            static_cast<double>(support_site_count());
        return full * frac;
    }

    double weighted_tail_integral_shifted(double lambda, double t, int n) const {
        if (family == ForcingFamily::zero) return 0.0;
        const double full = weighted_integral_shifted(lambda, t);
        const double frac = static_cast<double>(support_sites_beyond(n)) /
                            static_cast<double>(support_site_count());
        return full * frac;
    }
};

namespace detail {

// log(0.5 erfc(y)) with an asymptotic branch where erfc underflows.
inline double log_half_erfc(double y) {
    if (y < 25.0) return std::log(0.5 * std::erfc(y));
    return -y * y - std::log(2.0 * y) - 0.5 * std::log(3.141592653589793238462643383279);
}

} // namespace detail

inline double ForcingSpec::weighted_integral(double lambda, double t) const {
    const int N = support_site_count();
    switch (family) {
        case ForcingFamily::zero:
            return 0.0;
        case ForcingFamily::exp_past_decay: {
            const double rate = lambda + 2.0 * c;
            if (rate <= 0.0)
                throw std::domain_error("ForcingSpec: exp_past_decay integral diverges");
            return N * a * a * std::exp(rate * t) / rate;
        }
        case ForcingFamily::gaussian_decay: {
            if (b <= 0.0) throw std::domain_error("ForcingSpec: gaussian_decay needs b > 0");
            // int_{-inf}^t exp(lambda s - 2 b s^2) ds
            //   = exp(lambda^2/(8b)) sqrt(pi/(2b)) * 0.5 erfc(-sqrt(2b) (t - lambda/(4b)))
            const double A = lambda * lambda / (8.0 * b);
            const double x = std::sqrt(2.0 * b) * (t - lambda / (4.0 * b));
            const double log_val = A + 0.5 * std::log(3.141592653589793238462643383279 / (2.0 * b)) +
                                   detail::log_half_erfc(-x);
            return N * a * a * std::exp(log_val);
        }
    }
    return 0.0;
}

inline double ForcingSpec::weighted_integral_shifted(double lambda, double t) const {
    const int N = support_site_count();
    switch (family) {
        case ForcingFamily::zero:
            return 0.0;
        case ForcingFamily::exp_past_decay: {
            const double rate = lambda + 2.0 * c;
            if (rate <= 0.0)
                throw std::domain_error("ForcingSpec: exp_past_decay integral diverges");
            return N * a * a * std::exp(2.0 * c * t) / rate;
        }
        case ForcingFamily::gaussian_decay: {
            if (b <= 0.0) throw std::domain_error("ForcingSpec: gaussian_decay needs b > 0");
            const double A = lambda * lambda / (8.0 * b);
            const double x = std::sqrt(2.0 * b) * (t - lambda / (4.0 * b));
            const double log_val = A - lambda * t +
                                   0.5 * std::log(3.141592653589793238462643383279 / (2.0 * b)) +
                                   detail::log_half_erfc(-x);
            return N * a * a * std::exp(log_val);
        }
    }
    return 0.0;
}

// Per-site diffusion map sigma_i(t, s). The built-ins reuse the forcing g as
// their nonautonomous part, which makes the growth bound
// |sigma_i(t,s)| <= delta |s| + g_i(t) hold exactly.
struct DiffusionSpec {
    DiffusionFamily family = DiffusionFamily::tanh_bounded;

    static DiffusionSpec tanh_bounded() { return {DiffusionFamily::tanh_bounded}; }
    static DiffusionSpec linear_saturated() { return {DiffusionFamily::linear_saturated}; }
    static DiffusionSpec zero() { return {DiffusionFamily::zero}; }

    double value(double delta, double s, double g_site) const {
        switch (family) {
            case DiffusionFamily::tanh_bounded: return delta * std::tanh(s) + g_site;
            case DiffusionFamily::linear_saturated: return delta * s / (1.0 + s * s) + g_site;
            case DiffusionFamily::zero: return 0.0;
        }
        return 0.0;
    }
};

struct ModelParams {
    double lambda = 1.0;
    double nu = 1.0;
    double p = 3.0;
    double delta = 1.0;
    double epsilon = 0.0;
    DiffusionSpec sigma = DiffusionSpec::tanh_bounded();
    ForcingSpec g = ForcingSpec::zero();
    int trunc_radius = 20;

    static double epsilon_max(double lambda, double delta) {
        return std::sqrt(lambda) / (2.0 * delta);
    }
    double epsilon_max() const { return epsilon_max(lambda, delta); }

    std::size_t dim() const { return static_cast<std::size_t>(2 * trunc_radius + 1); }

    std::vector<std::string> violations() const {
        std::vector<std::string> out;
        if (!(lambda > 0.0)) out.push_back("lambda must be > 0");
        if (!(nu > 0.0)) out.push_back("nu must be > 0");
        if (!(p > 2.0)) out.push_back("p must be > 2");
        if (!(delta > 0.0)) out.push_back("delta must be > 0");
        if (lambda > 0.0 && delta > 0.0) {
            if (!(epsilon >= 0.0) || epsilon > epsilon_max())
                out.push_back("epsilon must lie in [0, sqrt(lambda)/(2 delta)] = [0, " +
                              std::to_string(epsilon_max()) + "]");
        }
        if (trunc_radius < 1) out.push_back("trunc_radius must be >= 1");
        if (g.family != ForcingFamily::zero) {
            if (g.a < 0.0) out.push_back("g: amplitude a must be >= 0");
            if (g.support_radius < 0) out.push_back("g: support_radius must be >= 0");
            if (g.support_radius > trunc_radius)
                out.push_back("g: support_radius must be <= trunc_radius");
        }
        if (g.family == ForcingFamily::gaussian_decay && !(g.b > 0.0))
            out.push_back("g: gaussian_decay needs b > 0");
        if (g.family == ForcingFamily::exp_past_decay && lambda > 0.0 &&
            !(lambda + 2.0 * g.c > 0.0))
            out.push_back("g: exp_past_decay needs c > -lambda/2 for the forcing integral");
        return out;
    }

    void validate() const {
        auto v = violations();
        if (v.empty()) return;
        std::string msg = "invalid ModelParams:";
        for (const auto& s : v) msg += " [" + s + "]";
        throw std::invalid_argument(msg);
    }
};

namespace detail {

// sign(u) |u|^(p-1), the odd superlinear term. Integer exponents take the
// multiplicative path; std::pow dominates the stepper cost otherwise.
inline double power_term(double u, double p) {
    if (u == 0.0) return 0.0;
    if (p == 3.0) return u * std::abs(u);
    if (p == 4.0) return u * u * u;
    const double mag = std::pow(std::abs(u), p - 1.0);
    return u > 0.0 ? mag : -mag;
}

// Unvalidated kernel; zero Dirichlet padding outside the truncation.
inline void drift_into(const std::vector<double>& u, std::vector<double>& f,
                       const ModelParams& mp) {
    const std::size_t n = u.size();
    for (std::size_t j = 0; j < n; ++j) {
        const double left = j > 0 ? u[j - 1] : 0.0;
        const double right = j + 1 < n ? u[j + 1] : 0.0;
        f[j] = -mp.lambda * u[j] + mp.nu * (left - 2.0 * u[j] + right) - power_term(u[j], mp.p);
    }
}

// Unvalidated kernel for epsilon * sigma_i(t, u_i).
inline void diffusion_into(const std::vector<double>& u, std::vector<double>& out, double t,
                           const ModelParams& mp) {
    const std::size_t n = u.size();
    const int I = (static_cast<int>(n) - 1) / 2;
    const double amp = mp.g.amplitude_at(t);
    const int r = mp.g.family == ForcingFamily::zero ? -1 : mp.g.support_radius;
    for (std::size_t j = 0; j < n; ++j) {
        const int i = static_cast<int>(j) - I;
        const double g_site = std::abs(i) <= r ? amp : 0.0;
        out[j] = mp.epsilon * mp.sigma.value(mp.delta, u[j], g_site);
    }
}

inline void check_state(const LatticeState& u, const ModelParams& mp, const char* op) {
    if (u.values.size() != mp.dim())
        throw std::invalid_argument(std::string(op) + ": state length does not match trunc_radius");
    if (!u.finite())
        throw std::invalid_argument(std::string(op) + ": non-finite state entry");
}

} // namespace detail

// Per-site drift f_i(u) = -lambda u_i + nu (u_{i-1} - 2 u_i + u_{i+1}) - |u_i|^{p-2} u_i.
inline LatticeState drift(const LatticeState& u, double /*t*/, const ModelParams& mp) {
    detail::check_state(u, mp, "drift");
    LatticeState f(mp.trunc_radius);
    detail::drift_into(u.values, f.values, mp);
    return f;
}

// Per-site noise coefficient epsilon * sigma_i(t, u_i).
inline LatticeState diffusion(const LatticeState& u, double t, const ModelParams& mp) {
    detail::check_state(u, mp, "diffusion");
    LatticeState out(mp.trunc_radius);
    detail::diffusion_into(u.values, out.values, t, mp);
    return out;
}

} // namespace evo
