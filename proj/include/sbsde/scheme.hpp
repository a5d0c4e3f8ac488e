#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "sbsde/errors.hpp"
#include "sbsde/expansion.hpp"
#include "sbsde/forward.hpp"
#include "sbsde/generator.hpp"

namespace sbsde {

enum class EstimatorKind { DeterministicPassthrough, LeastSquaresRegression, NestedMC };

struct CondExpEstimator {
    EstimatorKind kind = EstimatorKind::DeterministicPassthrough;
    int degree = 3;        // polynomial degree in eta
    int inner_paths = 64;  // NestedMC only

    static CondExpEstimator passthrough() { return {}; }
    static CondExpEstimator regression(int degree = 3) {
        return {EstimatorKind::LeastSquaresRegression, degree, 64};
    }
    static CondExpEstimator nested(int inner_paths) {
        return {EstimatorKind::NestedMC, 3, inner_paths};
    }
};

struct SchemeConfig {
    double delta = 0.1;      // cutoff before T
    int n_steps = 100;       // N, so h = (T - delta) / N
    CondExpEstimator estimator;
    double newton_tol = 1e-12;
    int newton_max_iter = 100;
    int expansion_order = 0;
};

struct SchemeDiagnostics {
    long newton_iter_total = 0;
    int newton_iter_max = 0;
    long regression_fallbacks = 0;
    std::vector<double> regression_cond; // per backward step
};

struct SchemeResult {
    int n_steps = 0;
    int n_paths = 0;
    double h = 0.0;
    double horizon = 0.0;            // scheme horizon T - delta
    std::vector<double> y_bar;       // node layout [path * (n_steps+1) + i]
    std::vector<double> terminal;    // xi_bar per path
    SchemeDiagnostics diagnostics;

    double y(int path, int i) const {
        return y_bar[static_cast<std::size_t>(path) * (n_steps + 1) + i];
    }
    double& y(int path, int i) {
        return y_bar[static_cast<std::size_t>(path) * (n_steps + 1) + i];
    }
    double max_terminal() const {
        return *std::max_element(terminal.begin(), terminal.end());
    }
};

/// One implicit Euler step: the unique y >= 0 with
///   y - h * a_bar * f(y) = m + h * lambda_bar.
/// F(y) = y - h a f(y) is strictly increasing with F(0) = 0, so the root
/// lies in [0, m + h*lambda_bar].  Newton from the upper end, bisection
/// whenever a step leaves the bracket.
inline double implicit_step(const GeneratorModel& gen, double h, double a_bar,
                            double lambda_bar, double m, double tol = 1e-12,
                            int max_iter = 100, int* iters = nullptr) {
    if (m < 0.0) throw DomainError("implicit_step: m must be non-negative");
    const double target = m + h * lambda_bar;
    if (target == 0.0) {
        if (iters) *iters = 0;
        return 0.0;
    }
    double lo = 0.0, hi = target, y = target;
    for (int it = 1; it <= max_iter; ++it) {
        const double res = y - h * a_bar * gen.f(y) - target;
        if (std::abs(res) <= tol) {
            if (iters) *iters = it;
            return y;
        }
        if (res > 0.0) hi = y; else lo = y;
        const double deriv = 1.0 - h * a_bar * gen.f1(y); // >= 1
        double next = y - res / deriv;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        y = next;
    }
    const double res = y - h * a_bar * gen.f(y) - target;
    if (std::abs(res) <= tol * 1e3) {
        if (iters) *iters = max_iter;
        return y;
    }
    throw NoConvergence("implicit_step: no root after " + std::to_string(max_iter)
                        + " iterations, bracket [" + std::to_string(lo) + ", "
                        + std::to_string(hi) + "]");
}

namespace detail {

inline std::vector<double> regress_on_eta(const PathEnsemble& ens, int step,
                                          const std::vector<double>& values,
                                          int degree, SchemeDiagnostics* diag) {
    const int n = ens.n_paths;
    // center/scale the regressor for conditioning
    double mean = 0.0;
    for (int p = 0; p < n; ++p) mean += ens.eta_at(p, step);
    mean /= n;
    double scale = 0.0;
    for (int p = 0; p < n; ++p) scale = std::max(scale, std::abs(ens.eta_at(p, step) - mean));
    if (scale == 0.0) scale = 1.0;

    for (int deg = degree; deg >= 0; --deg) {
        Eigen::MatrixXd A(n, deg + 1);
        Eigen::VectorXd b(n);
        for (int p = 0; p < n; ++p) {
            const double z = (ens.eta_at(p, step) - mean) / scale;
            double pw = 1.0;
            for (int j = 0; j <= deg; ++j) {
                A(p, j) = pw;
                pw *= z;
            }
            b(p) = values[p];
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
        if (qr.rank() < deg + 1) {
            if (deg == 0) throw SingularRegression("regression rank-deficient at degree 0");
            if (diag) ++diag->regression_fallbacks;
            continue;
        }
        if (diag) {
            const auto& R = qr.matrixR();
            double dmax = 0.0, dmin = std::numeric_limits<double>::infinity();
            for (int j = 0; j <= deg; ++j) {
                const double d = std::abs(R(j, j));
                dmax = std::max(dmax, d);
                dmin = std::min(dmin, d);
            }
            diag->regression_cond.push_back(dmin > 0.0 ? dmax / dmin
                                                       : std::numeric_limits<double>::infinity());
        }
        Eigen::VectorXd coef = qr.solve(b);
        std::vector<double> out(n);
        for (int p = 0; p < n; ++p) {
            const double z = (ens.eta_at(p, step) - mean) / scale;
            double acc = 0.0, pw = 1.0;
            for (int j = 0; j <= deg; ++j) {
                acc += coef(j) * pw;
                pw *= z;
            }
            // conditional expectations of non-negative variables stay non-negative
            out[p] = std::max(acc, 0.0);
        }
        return out;
    }
    throw SingularRegression("unreachable");
}

// piecewise-linear interpolation of the outer cross-section value profile
inline double interp_sorted(const std::vector<std::pair<double, double>>& xy, double x) {
    if (x <= xy.front().first) return xy.front().second;
    if (x >= xy.back().first) return xy.back().second;
    auto it = std::lower_bound(xy.begin(), xy.end(), std::make_pair(x, -1e300));
    auto lo = it == xy.begin() ? it : std::prev(it);
    if (it->first == lo->first) return it->second;
    const double w = (x - lo->first) / (it->first - lo->first);
    return lo->second * (1.0 - w) + it->second * w;
}

inline std::vector<double> nested_mc(const CondExpEstimator& est, const PathEnsemble& ens,
                                     int step, const std::vector<double>& values,
                                     const CoefficientModel& coeff) {
    if (est.inner_paths < 1) throw InnerEstimatorError("inner_paths must be >= 1");
    const int n = ens.n_paths;
    std::vector<std::pair<double, double>> profile(n);
    for (int p = 0; p < n; ++p) profile[p] = {ens.eta_at(p, step + 1), values[p]};
    std::sort(profile.begin(), profile.end());

    const double h = ens.h(), t = ens.t(step), sqrt_h = std::sqrt(h);
    std::vector<double> out(n);
    for (int p = 0; p < n; ++p) {
        double acc = 0.0;
        for (int j = 0; j < est.inner_paths; ++j) {
            const double z = rng::normal(ens.seed ^ 0x5bd1e995u,
                                         static_cast<std::uint64_t>(p) * est.inner_paths + j,
                                         step);
            double eta_next;
            if (coeff.eta_kind == EtaKind::ArctanTransform) {
                const double x = ens.latent[ens.node(p, step)]
                                 + coeff.latent_drift * h + coeff.latent_vol * sqrt_h * z;
                eta_next = coeff.arctan_map(x);
            } else if (coeff.eta_kind == EtaKind::CustomIto) {
                const double e = ens.eta_at(p, step);
                eta_next = std::clamp(e + coeff.ito_drift(t, e) * h
                                          + coeff.ito_vol(t, e) * sqrt_h * z,
                                      coeff.eta_min, coeff.eta_max);
            } else {
                eta_next = ens.eta_at(p, step + 1);
            }
            acc += interp_sorted(profile, eta_next);
        }
        out[p] = std::max(acc / est.inner_paths, 0.0);
    }
    return out;
}

} // namespace detail

/// Approximates E_{t_i}[values] given the ensemble state at step i.
inline std::vector<double> estimate_cond_exp(const CondExpEstimator& est,
                                             const PathEnsemble& ens, int step,
                                             const std::vector<double>& values,
                                             SchemeDiagnostics* diag = nullptr,
                                             const CoefficientModel* coeff = nullptr) {
    for (double v : values)
        if (!std::isfinite(v)) throw DomainError("estimate_cond_exp: non-finite value");
    switch (est.kind) {
        case EstimatorKind::DeterministicPassthrough:
            return values;
        case EstimatorKind::LeastSquaresRegression:
            return detail::regress_on_eta(ens, step, values, est.degree, diag);
        case EstimatorKind::NestedMC:
            if (!coeff) throw InnerEstimatorError("NestedMC needs the coefficient model");
            return detail::nested_mc(est, ens, step, values, *coeff);
    }
    return values;
}

/// Backward recursion Y_i = E_{t_i}[Y_{i+1}] + h a_i f(Y_i) + h lambda_i
/// from the given terminal layer.
inline SchemeResult backward_solve(const GeneratorModel& gen, const PathEnsemble& ens,
                                   const DiscreteCoefficients& dcoef,
                                   const SchemeConfig& cfg,
                                   const std::vector<double>& terminal,
                                   const CoefficientModel* coeff = nullptr) {
    const int N = ens.n_steps, P = ens.n_paths;
    if (static_cast<int>(terminal.size()) != P)
        throw ConfigError("backward_solve: terminal size != n_paths");
    for (double v : terminal)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw DomainError("backward_solve: terminal must be non-negative and finite");

    SchemeResult res;
    res.n_steps = N;
    res.n_paths = P;
    res.h = ens.h();
    res.horizon = ens.horizon;
    res.terminal = terminal;
    res.y_bar.assign(static_cast<std::size_t>(P) * (N + 1), 0.0);
    for (int p = 0; p < P; ++p) res.y(p, N) = terminal[p];

    std::vector<double> layer(P), cond(P);
    for (int p = 0; p < P; ++p) layer[p] = terminal[p];

    for (int i = N - 1; i >= 0; --i) {
        try {
            cond = estimate_cond_exp(cfg.estimator, ens, i, layer, &res.diagnostics, coeff);
        } catch (const std::exception& e) {
            throw NoConvergence("backward_solve: estimator failed at step "
                                + std::to_string(i) + ": " + e.what());
        }
        for (int p = 0; p < P; ++p) {
            int iters = 0;
            try {
                layer[p] = implicit_step(gen, res.h, dcoef.a_bar[ens.node(p, i)],
                                         dcoef.lambda_bar[ens.node(p, i)], cond[p],
                                         cfg.newton_tol, cfg.newton_max_iter, &iters);
            } catch (const std::exception& e) {
                throw NoConvergence("backward_solve: implicit step failed at (path "
                                    + std::to_string(p) + ", step " + std::to_string(i)
                                    + "): " + e.what());
            }
            res.diagnostics.newton_iter_total += iters;
            res.diagnostics.newton_iter_max = std::max(res.diagnostics.newton_iter_max, iters);
            res.y(p, i) = layer[p];
        }
    }
    return res;
}

/// Full singular-BSDE solver: simulate coefficients on [0, T-delta], build the
/// expansion terminal layer at the cutoff, run the backward recursion.
inline SchemeResult solve_singular(const GeneratorModel& gen, const CoefficientModel& coeff,
                                   double T, const SchemeConfig& cfg, int n_paths,
                                   std::uint64_t seed, int base_steps = 0) {
    if (!(cfg.delta > 0.0 && cfg.delta < T))
        throw ConfigError("solve_singular: delta must lie in (0, T)");
    PathEnsemble ens = simulate(coeff, T - cfg.delta, cfg.n_steps, n_paths, seed, base_steps);
    DiscreteCoefficients dcoef = discrete_coefficients(ens, coeff);

    std::vector<double> eta_cut(n_paths);
    for (int p = 0; p < n_paths; ++p) eta_cut[p] = ens.eta_at(p, cfg.n_steps);

    std::vector<double> terminal;
    if (cfg.expansion_order == 0) {
        terminal = terminal_order0(gen, cfg.delta, eta_cut);
    } else if (cfg.expansion_order == 1) {
        terminal = terminal_order1_power(gen, cfg.delta, T, coeff, ens);
    } else {
        throw UnsupportedExpansion("expansion order must be 0 or 1");
    }
    return backward_solve(gen, ens, dcoef, cfg, terminal, &coeff);
}

} // namespace sbsde
