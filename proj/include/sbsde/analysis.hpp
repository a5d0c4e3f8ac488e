#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "sbsde/errors.hpp"
#include "sbsde/expansion.hpp"
#include "sbsde/forward.hpp"
#include "sbsde/generator.hpp"
#include "sbsde/quad.hpp"
#include "sbsde/scheme.hpp"

namespace sbsde {

/// Reference solution with an error estimate for its own accuracy.
struct OracleSolution {
    std::vector<double> t;
    std::vector<double> y;
    double est_error = 0.0;  // estimated accuracy of the oracle itself
    bool closed_form = false;
    std::function<double(double)> exact_fn; // set when a closed form exists

    double at(double time) const {
        if (exact_fn) return exact_fn(time);
        if (t.empty()) throw DomainError("oracle: empty solution");
        if (time <= t.front()) return y.front();
        if (time >= t.back()) return y.back();
        const auto it = std::upper_bound(t.begin(), t.end(), time);
        const std::size_t i = static_cast<std::size_t>(it - t.begin()) - 1;
        const double w = (time - t[i]) / (t[i + 1] - t[i]);
        return (1.0 - w) * y[i] + w * y[i + 1];
    }
};

/// Reference for deterministic coefficients.
///
/// With lambda = 0 the solution is closed-form for any generator:
/// G(Y_t) decreases at unit rate in the time change int dt/eta, so
/// Y(t) = phi( int_t^T ds / eta(s) ).
///
/// With lambda != 0 the ODE  dY/dt = -f(Y)/eta(t) - lambda(t)  is integrated
/// backward in G-coordinates: u = G(Y) satisfies
///   du/dt = -1/eta(t) - lambda(t)/f(phi(u)),
/// which is non-stiff (the second term vanishes at the blow-up) and starts
/// exactly at u(T) = 0.  RK4 with a Richardson half-step error estimate;
/// `cutoff_eps` is the u-threshold below which the limit value -1/eta is used.
inline OracleSolution oracle_deterministic(const GeneratorModel& gen,
                                           const CoefficientModel& coeff,
                                           double T, double cutoff_eps = 1e-6,
                                           int n_grid = 4000) {
    if (coeff.eta_kind != EtaKind::Deterministic)
        throw ConfigError("oracle_deterministic requires deterministic eta");
    OracleSolution sol;

    const bool lambda_zero = coeff.lambda_max == 0.0;
    if (lambda_zero) {
        sol.closed_form = true;
        sol.est_error = 0.0;
        sol.exact_fn = [gen, eta = coeff.eta_fn, T](double time) {
            if (time >= T) return std::numeric_limits<double>::infinity();
            AdaptiveQuad q(1e-12);
            const double acc = q.integrate([&eta](double s) { return 1.0 / eta(s); },
                                           time, T);
            return gen.phi(acc);
        };
        AdaptiveQuad quad(1e-12);
        sol.t.resize(n_grid + 1);
        sol.y.resize(n_grid + 1);
        // accumulate int_t^T ds/eta(s) from the right for stability
        double acc = 0.0;
        double prev_t = T;
        for (int i = n_grid; i >= 0; --i) {
            const double ti = T * i / n_grid;
            if (ti < prev_t)
                acc += quad.integrate([&](double s) { return 1.0 / coeff.eta_fn(s); },
                                      ti, prev_t);
            prev_t = ti;
            sol.t[i] = ti;
            sol.y[i] = (acc > 0.0) ? gen.phi(acc) : std::numeric_limits<double>::infinity();
        }
        return sol;
    }

    // du/dt in G-coordinates; bounded on u >= 0 since lambda/f(phi(u)) -> 0
    auto rhs = [&](double t, double u) {
        double tail = 0.0;
        if (u > cutoff_eps) tail = coeff.lambda_fn(t) / gen.f(gen.phi(u));
        return -1.0 / coeff.eta_fn(t) - tail;
    };
    auto run = [&](int steps) {
        std::vector<double> ts(steps + 1), us(steps + 1);
        double u = 0.0;
        const double hstep = T / steps;
        ts[steps] = T;
        us[steps] = 0.0;
        for (int i = steps; i > 0; --i) {
            const double t = T * i / steps;
            const double k1 = rhs(t, u);
            const double k2 = rhs(t - 0.5 * hstep, u - 0.5 * hstep * k1);
            const double k3 = rhs(t - 0.5 * hstep, u - 0.5 * hstep * k2);
            const double k4 = rhs(t - hstep, u - hstep * k3);
            u -= hstep / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            ts[i - 1] = T * (i - 1) / steps;
            us[i - 1] = u;
        }
        return std::pair{ts, us};
    };

    auto [t1, u1] = run(n_grid);
    auto [t2, u2] = run(2 * n_grid);
    double diff = 0.0;
    sol.t = t2;
    sol.y.resize(t2.size());
    for (std::size_t i = 0; i < t2.size(); ++i)
        sol.y[i] = (u2[i] > 0.0) ? gen.phi(u2[i])
                                 : std::numeric_limits<double>::infinity();
    for (int i = 0; i < n_grid; ++i) // skip the blow-up endpoint
        diff = std::max(diff, std::abs(gen.phi(std::max(u1[i], 1e-300))
                                       - gen.phi(std::max(u2[2 * i], 1e-300))));
    sol.est_error = diff / 15.0;
    sol.closed_form = false;
    return sol;
}

/// Fine-grid reference for stochastic coefficients.  The reference shares
/// (seed, base_steps) with any coarser run, so comparisons are pathwise on
/// coupled noise.  `consistency_ratio` compares the reference against a
/// half-resolution run of itself: values well below 1 mean the reference is
/// converged relative to the gap it will be used to measure.
struct StochasticReference {
    SchemeResult solution;
    double consistency_gap = 0.0;   // |Y0_ref - Y0_half| averaged over paths
    double consistency_ratio = 0.0; // gap relative to half-run value scale
};

inline StochasticReference reference_stochastic(const GeneratorModel& gen,
                                                const CoefficientModel& coeff, double T,
                                                SchemeConfig cfg, int n_paths,
                                                std::uint64_t seed, int ref_steps) {
    if (ref_steps % 2 != 0) throw ConfigError("reference_stochastic: ref_steps must be even");
    StochasticReference ref;
    SchemeConfig fine = cfg;
    fine.n_steps = ref_steps;
    ref.solution = solve_singular(gen, coeff, T, fine, n_paths, seed, ref_steps);

    SchemeConfig half = cfg;
    half.n_steps = ref_steps / 2;
    SchemeResult coarse = solve_singular(gen, coeff, T, half, n_paths, seed, ref_steps);

    double gap = 0.0, scale = 0.0;
    for (int p = 0; p < n_paths; ++p) {
        gap += std::abs(ref.solution.y(p, 0) - coarse.y(p, 0));
        scale += std::abs(coarse.y(p, 0));
    }
    ref.consistency_gap = gap / n_paths;
    ref.consistency_ratio = (scale > 0.0) ? gap / scale : 0.0;
    return ref;
}

/// The terms of the a-priori error bound
///   C3 [ Delta^alpha + h^beta + Psi1(Delta) h^beta + Psi2(Delta) h ].
struct TheoremBound {
    double K_bound = 0.0;       // Theta(Delta) + C Delta^alpha + T lambda_star
    double psi1 = 0.0;
    double psi2 = 0.0;
    double term_delta = 0.0;    // Delta^alpha
    double term_h = 0.0;        // h^beta
    double term_psi1 = 0.0;     // Psi1 h^beta
    double term_psi2 = 0.0;     // Psi2 h
    double total = 0.0;         // C3 * sum
};

/// Evaluate the bound terms.  `C` scales the Delta^alpha slack inside the
/// K-envelope, `C3` the overall bound, `beta` is the coefficient-regularity
/// exponent (1/2 for Euler-simulated diffusions, 1 for smooth deterministic
/// coefficients), and `Phi_delta` the terminal-layer conditional-expectation
/// modulus at Delta (0 when the terminal is a function of eta alone and the
/// estimator is exact on it).
inline TheoremBound theorem_bound(const GeneratorModel& gen, const CoefficientModel& coeff,
                                  double T, double delta, double h, double beta,
                                  double C = 1.0, double C3 = 1.0, double Phi_delta = 0.0) {
    const auto alpha_opt = gen.alpha();
    if (!alpha_opt) throw DomainError("theorem_bound: generator has no known alpha");
    const double alpha = *alpha_opt;
    const double eta_star = coeff.eta_min;
    const double lam = coeff.lambda_max;

    TheoremBound b;
    b.K_bound = gen.theta_envelope(delta, coeff.eta_max, lam) + C * std::pow(delta, alpha)
                + T * lam;
    const double K = b.K_bound;
    const double fK = std::abs(gen.f(K));
    b.psi1 = fK + Phi_delta;

    double sup_f2 = 0.0;
    for (int i = 0; i <= 200; ++i)
        sup_f2 = std::max(sup_f2, std::abs(gen.f2(K * i / 200.0)));
    b.psi2 = std::abs(gen.f1(K)) * T / (2.0 * eta_star) * (fK / eta_star + lam)
             + sup_f2 / (2.0 * eta_star) * (K * K + (T * lam) * (T * lam));

    b.term_delta = std::pow(delta, alpha);
    b.term_h = std::pow(h, beta);
    b.term_psi1 = b.psi1 * std::pow(h, beta);
    b.term_psi2 = b.psi2 * h;
    b.total = C3 * (b.term_delta + b.term_h + b.term_psi1 + b.term_psi2);
    return b;
}

struct ErrorRow {
    int n_steps = 0;
    double h = 0.0;
    double delta = 0.0;
    double error = 0.0;      // measured error at t = 0, averaged over paths
    double error_sup = 0.0;  // sup over the time grid (dominated by the cutoff)
    double error_cut = 0.0;  // |xi_bar - Y(T-delta)|: the pure terminal-layer error
    double oracle_error = 0.0;
};

struct ConvergenceReport {
    std::vector<ErrorRow> rows;
    double slope = 0.0;      // log-log least-squares fit of error vs h (or delta)
    double intercept = 0.0;
    bool oracle_valid = true; // oracle's own error < 1% of the smallest measurement

    void check_oracle() {
        for (const auto& r : rows)
            if (r.error > 0.0 && r.oracle_error > 0.01 * r.error) oracle_valid = false;
    }
};

namespace detail {

inline void fit_loglog(ConvergenceReport& rep, std::function<double(const ErrorRow&)> xs) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (const auto& r : rep.rows) {
        if (r.error <= 0.0) continue;
        const double lx = std::log(xs(r)), ly = std::log(r.error);
        sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
        ++n;
    }
    if (n < 2) throw DomainError("convergence fit needs at least two positive errors");
    rep.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    rep.intercept = (sy - rep.slope * sx) / n;
}

} // namespace detail

/// Sweep over step counts at fixed Delta, measuring |Y_0 - reference| against
/// a deterministic oracle (coefficients permitting) or a coupled fine-grid
/// stochastic reference.  The slope is the empirical h-rate.
inline ConvergenceReport convergence_sweep_h(const GeneratorModel& gen,
                                             const CoefficientModel& coeff, double T,
                                             SchemeConfig cfg,
                                             const std::vector<int>& step_counts,
                                             int n_paths, std::uint64_t seed,
                                             int ref_steps = 0) {
    ConvergenceReport rep;
    const bool det = coeff.eta_kind == EtaKind::Deterministic;

    OracleSolution oracle;
    StochasticReference sref;
    int base = 0;
    if (det) {
        oracle = oracle_deterministic(gen, coeff, T);
    } else {
        if (ref_steps == 0) {
            ref_steps = 1;
            for (int n : step_counts) ref_steps = std::max(ref_steps, n);
            ref_steps *= 8;
        }
        for (int n : step_counts)
            if (ref_steps % n != 0)
                throw ConfigError("convergence_sweep_h: ref_steps must be divisible "
                                  "by every step count");
        sref = reference_stochastic(gen, coeff, T, cfg, n_paths, seed, ref_steps);
        base = ref_steps;
    }

    for (int n : step_counts) {
        SchemeConfig c = cfg;
        c.n_steps = n;
        SchemeResult res = solve_singular(gen, coeff, T, c, n_paths, seed, base);
        ErrorRow row;
        row.n_steps = n;
        row.h = res.h;
        row.delta = cfg.delta;
        double err = 0.0;
        for (int p = 0; p < n_paths; ++p) {
            const double ref = det ? oracle.at(0.0) : sref.solution.y(p, 0);
            err += std::abs(res.y(p, 0) - ref);
        }
        row.error = err / n_paths;
        if (det)
            for (int i = 0; i <= n; ++i)
                row.error_sup = std::max(row.error_sup,
                                         std::abs(res.y(0, i) - oracle.at(res.h * i)));
        row.oracle_error = det ? oracle.est_error : sref.consistency_gap;
        rep.rows.push_back(row);
    }
    detail::fit_loglog(rep, [](const ErrorRow& r) { return r.h; });
    rep.check_oracle();
    return rep;
}

/// Sweep over Delta at fixed (fine) h against the deterministic oracle.
/// The Delta-rate is fitted on the sup-over-grid error: the terminal layer
/// dominates the sup, while the error at t = 0 is damped by the backward
/// contraction and sits on the h-floor.  `error` still reports t = 0.
inline ConvergenceReport convergence_sweep_delta(const GeneratorModel& gen,
                                                 const CoefficientModel& coeff, double T,
                                                 SchemeConfig cfg,
                                                 const std::vector<double>& deltas,
                                                 int n_paths, std::uint64_t seed) {
    if (coeff.eta_kind != EtaKind::Deterministic)
        throw ConfigError("convergence_sweep_delta requires deterministic coefficients");
    ConvergenceReport rep;
    OracleSolution oracle = oracle_deterministic(gen, coeff, T);
    for (double d : deltas) {
        SchemeConfig c = cfg;
        c.delta = d;
        SchemeResult res = solve_singular(gen, coeff, T, c, n_paths, seed);
        ErrorRow row;
        row.n_steps = c.n_steps;
        row.h = res.h;
        row.delta = d;
        row.error = std::abs(res.y(0, 0) - oracle.at(0.0));
        for (int i = 0; i <= c.n_steps; ++i)
            row.error_sup = std::max(row.error_sup,
                                     std::abs(res.y(0, i) - oracle.at(res.h * i)));
        row.error_cut = std::abs(res.y(0, c.n_steps) - oracle.at(res.horizon));
        row.oracle_error = oracle.est_error;
        rep.rows.push_back(row);
    }
    {
        // fit on the cutoff-node error; it carries the Delta-rate with no
        // h contamination (the cutoff value IS the terminal approximation)
        ConvergenceReport tmp = rep;
        for (auto& r : tmp.rows) r.error = r.error_cut;
        detail::fit_loglog(tmp, [](const ErrorRow& r) { return r.delta; });
        rep.slope = tmp.slope;
        rep.intercept = tmp.intercept;
    }
    rep.check_oracle();
    return rep;
}

struct BalanceResult {
    std::vector<double> deltas;
    std::vector<double> totals;
    double best_delta = 0.0;
    double best_total = 0.0;
};

/// Grid search for the Delta minimizing the theorem bound at fixed h.
/// Ties go to the larger Delta (cheaper terminal layer).
inline BalanceResult balance_delta(const GeneratorModel& gen, const CoefficientModel& coeff,
                                   double T, double h, double beta,
                                   const std::vector<double>& deltas,
                                   double C = 1.0, double C3 = 1.0, double Phi = 0.0) {
    if (deltas.empty()) throw ConfigError("balance_delta: empty grid");
    BalanceResult res;
    res.best_total = std::numeric_limits<double>::infinity();
    for (double d : deltas) {
        const double tot = theorem_bound(gen, coeff, T, d, h, beta, C, C3, Phi).total;
        res.deltas.push_back(d);
        res.totals.push_back(tot);
        if (tot <= res.best_total) { // "<=" keeps the larger Delta on ties
            res.best_total = tot;
            res.best_delta = d;
        }
    }
    return res;
}

} // namespace sbsde
