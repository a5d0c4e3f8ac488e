#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "sbsde/errors.hpp"
#include "sbsde/expansion.hpp"
#include "sbsde/forward.hpp"
#include "sbsde/generator.hpp"
#include "sbsde/scheme.hpp"

namespace sbsde {

/// Liquidate a position x0 by time T against the cost
///   int_0^T ( zeta_t |Xdot_t|^p + lambda_t |X_t|^p ) dt,   X_T = 0,
/// with p > 1 and q = p/(p-1).  The value function is |x|^p Y_t where Y solves
/// the singular-terminal BSDE with generator -(p-1) zeta^{1-q} |y|^{q-1} y,
/// i.e. the scaled power generator f(y) = -(p-1) y |y|^{q-1} with
/// eta_t = zeta_t^{q-1}.
struct LiquidationProblem {
    double x0 = 1.0;
    double p = 2.0;
    double T = 1.0;
    std::function<double(double)> zeta = [](double) { return 1.0; };
    double zeta_min = 1.0;
    double zeta_max = 1.0;
    std::function<double(double)> lambda = [](double) { return 0.0; };
    double lambda_max = 0.0;

    double q() const { return p / (p - 1.0); }

    void validate() const {
        if (!(p > 1.0)) throw ConfigError("liquidation: p must exceed 1");
        if (!(zeta_min > 0.0) || zeta_max < zeta_min)
            throw ConfigError("liquidation: zeta bounds must satisfy 0 < min <= max");
        if (lambda_max < 0.0) throw ConfigError("liquidation: lambda bound negative");
        if (!(T > 0.0)) throw ConfigError("liquidation: T must be positive");
    }
};

struct LiquidationMapping {
    GeneratorModel generator;
    CoefficientModel coefficients;
};

/// BSDE data for the liquidation problem: scaled power generator and
/// eta = zeta^{q-1}.  q-1 > 0, so the eta bounds are the transformed
/// zeta bounds in the same order.
inline LiquidationMapping map_to_bsde(const LiquidationProblem& prob) {
    prob.validate();
    const double q = prob.q();
    const double qm1 = q - 1.0;
    auto zeta = prob.zeta;
    return LiquidationMapping{
        GeneratorModel::power(q, prob.p - 1.0),
        CoefficientModel::deterministic(
            [zeta, qm1](double t) { return std::pow(zeta(t), qm1); },
            std::pow(prob.zeta_min, qm1), std::pow(prob.zeta_max, qm1),
            prob.lambda, prob.lambda_max),
    };
}

struct LiquidationResult {
    SchemeResult bsde;            // Y on [0, T - delta]
    double y0 = 0.0;              // Y at time 0 (paths agree for deterministic zeta)
    double value = 0.0;           // |x0|^p Y_0
    std::vector<double> t;        // state grid, extends past the cutoff to near T
    std::vector<double> state;    // X* on the grid (path 0)
    std::vector<double> rate;     // liquidation rate -Xdot/X on the grid
    std::vector<double> y;        // Y along the grid (expansion profile past cutoff)
    double terminal_residual = 0.0; // |X*| at the last grid point before T
    double cost = 0.0;            // realized cost of the computed trajectory
    double cost_stderr = 0.0;
};

/// Solve the liquidation problem: backward BSDE pass, then the closed-loop
/// state  X*_t = x0 exp( -int_0^t zeta_u^{1-q} |Y_u|^{q-1} du ).  On the
/// terminal window (T - delta, T] the rate uses the expansion profile
/// Y ~ phi((T-u)/eta), which drives X* to zero; the last-node residual is
/// reported.  The realized cost integrates zeta |rate X|^p + lambda |X|^p by
/// the trapezoid rule, with |Xdot| = rate * X along the closed loop.
inline LiquidationResult solve_liquidation(const LiquidationProblem& prob,
                                           const SchemeConfig& cfg, int n_paths = 1,
                                           std::uint64_t seed = 1,
                                           int tail_substeps = 2000,
                                           double tail_eps_ratio = 1e-9) {
    LiquidationMapping map = map_to_bsde(prob);
    const double q = prob.q();
    const double qm1 = q - 1.0;

    LiquidationResult res;
    res.bsde = solve_singular(map.generator, map.coefficients, prob.T, cfg, n_paths, seed);
    res.y0 = res.bsde.y(0, 0);
    res.value = std::pow(std::abs(prob.x0), prob.p) * res.y0;

    const double h = res.bsde.h;
    const int N = res.bsde.n_steps;
    auto rate_of = [&](double t, double y) {
        return std::pow(prob.zeta(t), 1.0 - q) * std::pow(std::abs(y), qm1);
    };

    // core grid: left-point rate on [0, T - delta]
    std::vector<double> ts, xs, rates, ys;
    double x = prob.x0;
    for (int i = 0; i <= N; ++i) {
        const double t = i * h;
        ts.push_back(t);
        xs.push_back(x);
        ys.push_back(res.bsde.y(0, i));
        rates.push_back(rate_of(t, ys.back()));
        if (i < N) x *= std::exp(-rates.back() * h);
    }

    // terminal window: expansion profile in the rate, geometric refinement
    // towards T (the rate blows up like 1/(T - u))
    const double t_cut = prob.T - cfg.delta;
    const double tail_end = prob.T - tail_eps_ratio * prob.T;
    for (int k = 1; k <= tail_substeps; ++k) {
        const double frac = static_cast<double>(k) / tail_substeps;
        const double u = prob.T - cfg.delta * std::pow((prob.T - tail_end) / cfg.delta, frac);
        const double eta_u = std::pow(prob.zeta(u), qm1);
        const double y_u = map.generator.phi((prob.T - u) / eta_u);
        const double r = rate_of(u, y_u);
        const double du = u - ts.back();
        x *= std::exp(-0.5 * (rates.back() + r) * du);
        ts.push_back(u);
        xs.push_back(x);
        rates.push_back(r);
        ys.push_back(y_u);
        (void)t_cut;
    }
    res.t = ts;
    res.state = xs;
    res.rate = rates;
    res.y = ys;
    res.terminal_residual = std::abs(xs.back());

    // realized cost along the same grid
    auto cost_density = [&](std::size_t i) {
        const double t = ts[i];
        const double xd = rates[i] * xs[i];
        return prob.zeta(t) * std::pow(std::abs(xd), prob.p)
               + prob.lambda(t) * std::pow(std::abs(xs[i]), prob.p);
    };
    double cost = 0.0;
    for (std::size_t i = 0; i + 1 < ts.size(); ++i)
        cost += 0.5 * (cost_density(i) + cost_density(i + 1)) * (ts[i + 1] - ts[i]);
    res.cost = cost;
    res.cost_stderr = 0.0; // deterministic zeta: all paths coincide
    return res;
}

} // namespace sbsde
