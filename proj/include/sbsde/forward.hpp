#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "sbsde/errors.hpp"
#include "sbsde/rng.hpp"

namespace sbsde {

enum class EtaKind { Deterministic, ArctanTransform, CustomIto };
enum class LambdaKind { Deterministic, StateFunction };

/// Coefficient processes eta (Ito with hard bounds) and lambda.
/// The arctan transform eta = (eta_max-eta_min)/pi * atan(X) + (eta_max+eta_min)/2
/// keeps eta strictly inside (eta_min, eta_max) for any latent X.
struct CoefficientModel {
    EtaKind eta_kind = EtaKind::Deterministic;
    std::function<double(double)> eta_fn;                  // Deterministic: eta(t)
    double latent_x0 = 0.0;                                // ArctanTransform latent start
    double latent_drift = 0.0;                             // b of the latent SDE
    double latent_vol = 0.0;                               // sigma of the latent SDE
    std::function<double(double, double)> ito_drift;       // CustomIto: b^eta(t, eta)
    std::function<double(double, double)> ito_vol;         // CustomIto: sigma^eta(t, eta)

    double eta_min = 1.0;  // eta_star > 0
    double eta_max = 1.0;  // eta^star >= eta_star

    LambdaKind lambda_kind = LambdaKind::Deterministic;
    std::function<double(double)> lambda_fn;               // lambda(t)
    std::function<double(double, double)> lambda_state_fn; // lambda(t, eta)
    double lambda_max = 0.0;                               // lambda^star >= 0

    // sup norms of the eta dynamics; exact for Deterministic/ArctanTransform,
    // user-supplied for CustomIto
    double b_eta_sup = 0.0;
    double sigma_eta_sup = 0.0;

    static CoefficientModel deterministic(std::function<double(double)> eta,
                                          double eta_lo, double eta_hi,
                                          std::function<double(double)> lambda,
                                          double lambda_hi,
                                          double b_eta_sup = 0.0) {
        CoefficientModel c;
        c.eta_kind = EtaKind::Deterministic;
        c.eta_fn = std::move(eta);
        c.eta_min = eta_lo;
        c.eta_max = eta_hi;
        c.lambda_fn = std::move(lambda);
        c.lambda_max = lambda_hi;
        c.b_eta_sup = b_eta_sup; // |eta'(t)| bound when eta varies in time
        c.validate();
        return c;
    }

    static CoefficientModel constant(double eta, double lambda = 0.0) {
        return deterministic([eta](double) { return eta; }, eta, eta,
                             [lambda](double) { return lambda; }, lambda);
    }

    static CoefficientModel arctan(double eta_lo, double eta_hi, double x0,
                                   double drift, double vol,
                                   std::function<double(double)> lambda = {},
                                   double lambda_hi = 0.0) {
        CoefficientModel c;
        c.eta_kind = EtaKind::ArctanTransform;
        c.eta_min = eta_lo;
        c.eta_max = eta_hi;
        c.latent_x0 = x0;
        c.latent_drift = drift;
        c.latent_vol = vol;
        c.lambda_fn = lambda ? std::move(lambda) : [](double) { return 0.0; };
        c.lambda_max = lambda_hi;
        // psi'(x) = s/(1+x^2) <= s, sup|psi''| = s * 3*sqrt(3)/8, s = (hi-lo)/pi
        const double s = (eta_hi - eta_lo) / M_PI;
        c.b_eta_sup = s * std::abs(drift) + 0.5 * s * (3.0 * std::sqrt(3.0) / 8.0) * vol * vol;
        c.sigma_eta_sup = s * std::abs(vol);
        c.validate();
        return c;
    }

    static CoefficientModel custom_ito(std::function<double(double, double)> b,
                                       std::function<double(double, double)> sig,
                                       double eta0, double eta_lo, double eta_hi,
                                       double b_sup, double sigma_sup,
                                       std::function<double(double)> lambda = {},
                                       double lambda_hi = 0.0) {
        CoefficientModel c;
        c.eta_kind = EtaKind::CustomIto;
        c.ito_drift = std::move(b);
        c.ito_vol = std::move(sig);
        c.latent_x0 = eta0;
        c.eta_min = eta_lo;
        c.eta_max = eta_hi;
        c.b_eta_sup = b_sup;
        c.sigma_eta_sup = sigma_sup;
        c.lambda_fn = lambda ? std::move(lambda) : [](double) { return 0.0; };
        c.lambda_max = lambda_hi;
        c.validate();
        return c;
    }

    void validate() const {
        if (eta_min <= 0.0) throw ConfigError("eta lower bound must be positive");
        if (eta_max < eta_min) throw ConfigError("eta bounds out of order");
        if (lambda_max < 0.0) throw ConfigError("lambda bound must be non-negative");
        if (eta_kind != EtaKind::Deterministic && eta_max <= eta_min)
            throw ConfigError("stochastic eta requires eta_min < eta_max");
    }

    double eta_sharp() const { return eta_max / eta_min; }

    double arctan_map(double x) const {
        return (eta_max - eta_min) / M_PI * std::atan(x) + 0.5 * (eta_max + eta_min);
    }
    double arctan_map_d1(double x) const {
        return (eta_max - eta_min) / M_PI / (1.0 + x * x);
    }
    double arctan_map_d2(double x) const {
        const double d = 1.0 + x * x;
        return -(eta_max - eta_min) / M_PI * 2.0 * x / (d * d);
    }

    double lambda_at(double t, double eta) const {
        double v = (lambda_kind == LambdaKind::StateFunction && lambda_state_fn)
                       ? lambda_state_fn(t, eta)
                       : (lambda_fn ? lambda_fn(t) : 0.0);
        return std::clamp(v, 0.0, lambda_max);
    }
};

/// Uniform grid t_i = i*h plus per-path Brownian increments and coefficient
/// values.  Increments are drawn at `base_steps` resolution and summed into
/// the working grid, so ensembles at different step counts sharing a
/// base_steps and seed see the same underlying noise.
struct PathEnsemble {
    double horizon = 0.0;
    int n_steps = 0;
    int n_paths = 0;
    int base_steps = 0;
    std::uint64_t seed = 0;
    long clip_events = 0;

    std::vector<double> dW;       // [path * n_steps + i], i < n_steps
    std::vector<double> latent;   // node layout [path * (n_steps+1) + i]
    std::vector<double> eta;
    std::vector<double> a;        // 1/eta
    std::vector<double> lambda;
    std::vector<double> b_eta;    // eta-dynamics coefficients at nodes
    std::vector<double> sigma_eta;

    double h() const { return horizon / n_steps; }
    double t(int i) const { return horizon * i / n_steps; }
    std::size_t node(int path, int i) const {
        return static_cast<std::size_t>(path) * (n_steps + 1) + i;
    }
    double eta_at(int path, int i) const { return eta[node(path, i)]; }
    double a_at(int path, int i) const { return a[node(path, i)]; }
    double lambda_at(int path, int i) const { return lambda[node(path, i)]; }
};

/// Euler-Maruyama simulation of the coefficient processes on [0, horizon].
inline PathEnsemble simulate(const CoefficientModel& coeff, double horizon,
                             int n_steps, int n_paths, std::uint64_t seed,
                             int base_steps = 0) {
    if (horizon <= 0.0) throw ConfigError("simulate: horizon must be positive");
    if (n_steps < 1 || n_paths < 1) throw ConfigError("simulate: n_steps and n_paths must be >= 1");
    if (base_steps == 0) base_steps = n_steps;
    if (base_steps % n_steps != 0)
        throw ConfigError("simulate: base_steps must be a multiple of n_steps");
    coeff.validate();

    PathEnsemble ens;
    ens.horizon = horizon;
    ens.n_steps = n_steps;
    ens.n_paths = n_paths;
    ens.base_steps = base_steps;
    ens.seed = seed;

    const int refine = base_steps / n_steps;
    const double h_base = horizon / base_steps;
    const double sqrt_hb = std::sqrt(h_base);
    const std::size_t nodes = static_cast<std::size_t>(n_paths) * (n_steps + 1);

    ens.dW.resize(static_cast<std::size_t>(n_paths) * n_steps);
    ens.latent.assign(nodes, 0.0);
    ens.eta.resize(nodes);
    ens.a.resize(nodes);
    ens.lambda.resize(nodes);
    ens.b_eta.assign(nodes, 0.0);
    ens.sigma_eta.assign(nodes, 0.0);

    for (int p = 0; p < n_paths; ++p) {
        for (int i = 0; i < n_steps; ++i) {
            double s = 0.0;
            for (int k = 0; k < refine; ++k)
                s += rng::normal(seed, p, static_cast<std::uint64_t>(i) * refine + k);
            ens.dW[static_cast<std::size_t>(p) * n_steps + i] = s * sqrt_hb;
        }

        double x = (coeff.eta_kind == EtaKind::ArctanTransform) ? coeff.latent_x0
                   : (coeff.eta_kind == EtaKind::CustomIto)     ? coeff.latent_x0
                                                                : 0.0;
        for (int i = 0; i <= n_steps; ++i) {
            const double t = ens.t(i);
            const std::size_t n = ens.node(p, i);
            double e = coeff.eta_min;
            switch (coeff.eta_kind) {
                case EtaKind::Deterministic: {
                    e = coeff.eta_fn(t);
                    const double fd = 1e-6 * std::max(1.0, horizon);
                    ens.b_eta[n] = (coeff.eta_fn(std::min(t + fd, horizon))
                                    - coeff.eta_fn(std::max(t - fd, 0.0)))
                                   / (std::min(t + fd, horizon) - std::max(t - fd, 0.0));
                    break;
                }
                case EtaKind::ArctanTransform: {
                    ens.latent[n] = x;
                    e = coeff.arctan_map(x);
                    const double d1 = coeff.arctan_map_d1(x);
                    ens.b_eta[n] = d1 * coeff.latent_drift
                                   + 0.5 * coeff.arctan_map_d2(x) * coeff.latent_vol * coeff.latent_vol;
                    ens.sigma_eta[n] = d1 * coeff.latent_vol;
                    break;
                }
                case EtaKind::CustomIto: {
                    ens.latent[n] = x;
                    e = x;
                    if (e < coeff.eta_min || e > coeff.eta_max) {
                        e = std::clamp(e, coeff.eta_min, coeff.eta_max);
                        ++ens.clip_events;
                    }
                    ens.b_eta[n] = coeff.ito_drift(t, e);
                    ens.sigma_eta[n] = coeff.ito_vol(t, e);
                    break;
                }
            }
            ens.eta[n] = e;
            ens.a[n] = 1.0 / e;
            ens.lambda[n] = coeff.lambda_at(t, e);

            if (i < n_steps) {
                const double dw = ens.dW[static_cast<std::size_t>(p) * n_steps + i];
                const double h = ens.h();
                if (coeff.eta_kind == EtaKind::ArctanTransform)
                    x += coeff.latent_drift * h + coeff.latent_vol * dw;
                else if (coeff.eta_kind == EtaKind::CustomIto)
                    x = e + coeff.ito_drift(t, e) * h + coeff.ito_vol(t, e) * dw;
            }
        }
    }
    return ens;
}

/// Discrete-time coefficients for the backward recursion, with the hard
/// clamps 0 <= a_bar <= 1/eta_star and 0 <= lambda_bar <= lambda_star.
struct DiscreteCoefficients {
    std::vector<double> a_bar;      // node layout, same as PathEnsemble
    std::vector<double> lambda_bar;
};

inline DiscreteCoefficients discrete_coefficients(const PathEnsemble& ens,
                                                  const CoefficientModel& coeff) {
    DiscreteCoefficients d;
    d.a_bar.resize(ens.a.size());
    d.lambda_bar.resize(ens.lambda.size());
    for (std::size_t i = 0; i < ens.a.size(); ++i)
        d.a_bar[i] = std::clamp(ens.a[i], 0.0, 1.0 / coeff.eta_min);
    for (std::size_t i = 0; i < ens.lambda.size(); ++i)
        d.lambda_bar[i] = std::clamp(ens.lambda[i], 0.0, coeff.lambda_max);
    return d;
}

} // namespace sbsde
