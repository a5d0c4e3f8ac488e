#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>

#include "sbsde/errors.hpp"

namespace sbsde {

/// Adaptive quadrature on a finite interval, Gauss-Kronrod (G7,K15) with
/// bisection on the error estimate.  Tolerance is relative to the running
/// global estimate, with an absolute floor for integrals near zero.
class AdaptiveQuad {
  public:
    explicit AdaptiveQuad(double rel_tol = 1e-10, double abs_floor = 1e-300,
                          int max_depth = 52)
        : rel_tol_(rel_tol), abs_floor_(abs_floor), max_depth_(max_depth) {}

    double integrate(const std::function<double(double)>& f, double a, double b) const {
        if (a == b) return 0.0;
        double coarse = kronrod(f, a, b).first;
        double scale = std::max(std::abs(coarse), abs_floor_);
        return refine(f, a, b, scale, 0);
    }

  private:
    double rel_tol_;
    double abs_floor_;
    int max_depth_;

    // K15 nodes/weights on [-1,1]; G7 weights on the shared nodes.
    static constexpr double xk[15] = {
        -0.991455371120813, -0.949107912342759, -0.864864423359769,
        -0.741531185599394, -0.586087235467691, -0.405845151377397,
        -0.207784955007898, 0.0,                0.207784955007898,
        0.405845151377397,  0.586087235467691,  0.741531185599394,
        0.864864423359769,  0.949107912342759,  0.991455371120813};
    static constexpr double wk[15] = {
        0.022935322010529, 0.063092092629979, 0.104790010322250,
        0.140653259715525, 0.169004726639267, 0.190350578064785,
        0.204432940075298, 0.209482141084728, 0.204432940075298,
        0.190350578064785, 0.169004726639267, 0.140653259715525,
        0.104790010322250, 0.063092092629979, 0.022935322010529};
    static constexpr double wg[7] = {
        0.129484966168870, 0.279705391489277, 0.381830050505119,
        0.417959183673469, 0.381830050505119, 0.279705391489277,
        0.129484966168870};

    // Returns (K15 value, |K15-G7| error estimate).
    static std::pair<double, double> kronrod(const std::function<double(double)>& f,
                                             double a, double b) {
        const double c = 0.5 * (a + b);
        const double h = 0.5 * (b - a);
        double sk = 0.0, sg = 0.0;
        for (int i = 0; i < 15; ++i) {
            const double v = f(c + h * xk[i]);
            sk += wk[i] * v;
            if (i % 2 == 1) sg += wg[i / 2] * v;
        }
        return {sk * h, std::abs((sk - sg) * h)};
    }

    double refine(const std::function<double(double)>& f, double a, double b,
                  double scale, int depth) const {
        auto [v, err] = kronrod(f, a, b);
        if (!std::isfinite(v))
            throw DivergentIntegral("non-finite quadrature value on ["
                                    + std::to_string(a) + ", " + std::to_string(b) + "]");
        if (err <= rel_tol_ * scale || depth >= max_depth_) return v;
        const double c = 0.5 * (a + b);
        return refine(f, a, c, scale, depth + 1) + refine(f, c, b, scale, depth + 1);
    }
};

/// Improper integral over [x, inf) via the substitution y = x + u/(1-u),
/// u in [0,1).  The last sliver near u=1 is probed for decay first.
inline double integrate_tail(const std::function<double(double)>& f, double x,
                             double rel_tol = 1e-10) {
    auto g = [&f, x](double u) {
        const double om = 1.0 - u;
        const double y = x + u / om;
        return f(y) / (om * om);
    };
    // Tail decay probe: the mapped integrand must vanish towards u=1,
    // otherwise the original integral diverges.
    const double probe = std::abs(g(1.0 - 1e-9));
    const double ref = std::abs(g(0.5)) + std::abs(g(0.0));
    if (!std::isfinite(probe) || (probe > 1e3 * (ref + 1.0)))
        throw DivergentIntegral("tail of integrand does not decay");
    AdaptiveQuad q(rel_tol);
    return q.integrate(g, 0.0, 1.0 - 1e-12);
}

/// Safeguarded root finding: Newton from `guess` inside [lo, hi], falling
/// back to bisection whenever the Newton step leaves the bracket or stalls.
/// `fn` returns (value, derivative).
inline double newton_bisect(const std::function<std::pair<double, double>(double)>& fn,
                            double lo, double hi, double guess, double tol,
                            int max_iter) {
    double x = std::clamp(guess, lo, hi);
    for (int it = 0; it < max_iter; ++it) {
        auto [v, d] = fn(x);
        if (std::abs(v) <= tol) return x;
        if (v > 0.0) hi = x; else lo = x;
        double next = (d != 0.0) ? x - v / d : std::numeric_limits<double>::quiet_NaN();
        if (!std::isfinite(next) || next <= lo || next >= hi)
            next = 0.5 * (lo + hi);
        if (next == x) next = 0.5 * (lo + hi);
        x = next;
        if (hi - lo <= tol * std::max(1.0, std::abs(x))) return x;
    }
    auto [v, d] = fn(x);
    (void)d;
    if (std::abs(v) <= tol * 1e3) return x;
    throw NoConvergence("root solve stalled, bracket [" + std::to_string(lo) + ", "
                        + std::to_string(hi) + "], residual " + std::to_string(v));
}

} // namespace sbsde
