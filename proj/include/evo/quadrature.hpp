#pragma once

#include <cmath>
#include <cstddef>
#include <functional>

namespace evo::quad {

namespace detail {

template <class F>
double simpson(F&& f, double a, double b, double fa, double fm, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

template <class F>
double adaptive(F&& f, double a, double b, double fa, double fm, double fb, double whole,
                double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = simpson(f, a, m, fa, flm, fm);
    const double right = simpson(f, m, b, fm, frm, fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
        return left + right + delta / 15.0;
    return adaptive(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

} // namespace detail

// Adaptive Simpson on [a, b].
template <class F>
double integrate(F&& f, double a, double b, double tol = 1e-12) {
    if (a == b) return 0.0;
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = detail::simpson(f, a, b, fa, fm, fb);
    return detail::adaptive(f, a, b, fa, fm, fb, whole, tol, 48);
}

// Integral of f over (-inf, t] for integrands that decay (at least
// exponentially) toward -inf. Segments of doubling width are added until two
// consecutive ones are negligible against the running total.
template <class F>
double integrate_from_minus_inf(F&& f, double t, double tol = 1e-12) {
    double total = 0.0;
    double width = 1.0;
    double hi = t;
    int quiet = 0;
    for (int seg = 0; seg < 80; ++seg) {
        const double lo = hi - width;
        const double part = integrate(f, lo, hi, tol * 0.01);
        total += part;
        const double scale = std::abs(total) > 1.0 ? std::abs(total) : 1.0;
        if (std::abs(part) <= tol * scale * 1e-3) {
            if (++quiet >= 2) break;
        } else {
            quiet = 0;
        }
        hi = lo;
        width *= 2.0;
    }
    return total;
}

} // namespace evo::quad
