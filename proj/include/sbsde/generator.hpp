#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sbsde/errors.hpp"
#include "sbsde/quad.hpp"

namespace sbsde {

enum class GeneratorKind { Power, Exponential, Custom };

struct PhiDerivs {
    double d1; // phi'
    double d2; // phi''
    double d3; // phi'''
};

/// Empirical audit of the boundedness conditions on kappa^2 and on the
/// f'-increment function.  Evidence on a finite grid, not a proof.
struct AuditReport {
    std::vector<double> grid;
    std::vector<double> kappa2;
    std::vector<double> a6_plus;   // |f'(phi + varsigma phi' theta) - f'(phi)|
    std::vector<double> a6_minus;
    double kappa2_sup = 0.0;
    double a6_sup = 0.0;
    double a6_envelope_slope = 0.0; // log-log slope of the increment as x -> 0
    bool a5_bounded = false;
    bool a6_bounded = false;
    bool blow_up = false;
    bool constant_psi = false;      // guaranteed for the built-in kinds
    double positivity_threshold = 0.0; // largest grid x where phi + vs*phi'*theta <= 0
};

/// Driver f together with every object derived from it: the tail integral G,
/// its inverse phi (the blow-up profile), derivatives of phi, the ratios
/// kappa^i, the rate functions varpi / vartheta and the envelope Theta.
///
/// Built-in kinds carry closed forms; Custom runs the quadrature/root-find
/// pipeline at the configured tolerances.  Immutable after construction.
class GeneratorModel {
  public:
    static GeneratorModel power(double q, double scale = 1.0) {
        if (q <= 1.0) throw ConfigError("power generator requires q > 1");
        if (scale <= 0.0) throw ConfigError("power generator requires scale > 0");
        GeneratorModel g;
        g.kind_ = GeneratorKind::Power;
        g.q_ = q;
        g.p_ = q / (q - 1.0);
        g.scale_ = scale;
        g.f_ = [q, scale](double y) { return -scale * y * std::pow(std::abs(y), q - 1.0); };
        g.f1_ = [q, scale](double y) { return -scale * q * std::pow(std::abs(y), q - 1.0); };
        g.f2_ = [q, scale](double y) {
            return -scale * q * (q - 1.0) * std::pow(std::abs(y), q - 2.0)
                   * (y >= 0.0 ? 1.0 : -1.0);
        };
        return g;
    }

    static GeneratorModel exponential(double a) {
        if (a <= 0.0) throw ConfigError("exponential generator requires a > 0");
        GeneratorModel g;
        g.kind_ = GeneratorKind::Exponential;
        g.a_ = a;
        g.f_ = [a](double y) { return -(std::exp(a * y) - 1.0); };
        g.f1_ = [a](double y) { return -a * std::exp(a * y); };
        g.f2_ = [a](double y) { return -a * a * std::exp(a * y); };
        return g;
    }

    static GeneratorModel custom(std::function<double(double)> f,
                                 std::function<double(double)> f1,
                                 std::function<double(double)> f2,
                                 double quad_tol = 1e-10, double root_tol = 1e-10) {
        GeneratorModel g;
        g.kind_ = GeneratorKind::Custom;
        g.f_ = std::move(f);
        g.f1_ = std::move(f1);
        g.f2_ = std::move(f2);
        g.quad_tol_ = quad_tol;
        g.root_tol_ = root_tol;
        if (std::abs(g.f_(0.0)) > 1e-12)
            throw ConfigError("custom generator must satisfy f(0) = 0");
        return g;
    }

    GeneratorKind kind() const { return kind_; }
    double power_q() const { return q_; }
    double power_p() const { return p_; }
    double power_scale() const { return scale_; }
    double exp_a() const { return a_; }
    double quad_tol() const { return quad_tol_; }
    double root_tol() const { return root_tol_; }

    double f(double y) const { return f_(y); }
    double f1(double y) const { return f1_(y); }
    double f2(double y) const { return f2_(y); }

    /// G(x) = int_x^inf dy / (-f(y)).
    double G(double x) const {
        if (x <= 0.0) throw DomainError("G requires x > 0");
        switch (kind_) {
            case GeneratorKind::Power:
                return (p_ - 1.0) / scale_ * std::pow(x, 1.0 - q_);
            case GeneratorKind::Exponential:
                return exp_G(x);
            case GeneratorKind::Custom:
                return integrate_tail([this](double y) { return 1.0 / (-f_(y)); }, x,
                                      quad_tol_);
        }
        return 0.0;
    }

    /// phi = G^{-1}; monotone decreasing.
    double phi(double x) const {
        if (x <= 0.0) throw DomainError("phi requires x > 0");
        switch (kind_) {
            case GeneratorKind::Power:
                return std::pow((p_ - 1.0) / (scale_ * x), p_ - 1.0);
            case GeneratorKind::Exponential:
                return exp_G(x); // G is an involution for this family
            case GeneratorKind::Custom:
                return invert_G(x);
        }
        return 0.0;
    }

    /// (phi', phi'', phi''') from the ODE phi' = f(phi).
    PhiDerivs phi_derivs(double x) const {
        if (x <= 0.0) throw DomainError("phi_derivs requires x > 0");
        const double ph = phi(x);
        const double d1 = f_(ph);
        const double fp = f1_(ph);
        const double d2 = fp * d1;
        const double d3 = f2_(ph) * d1 * d1 + fp * fp * d1;
        return {d1, d2, d3};
    }

    /// kappa^i(x) = -phi^{(i+1)}(x) x / phi^{(i)}(x), i in {0,1,2}.
    double kappa(int i, double x) const {
        if (x <= 0.0) throw DomainError("kappa requires x > 0");
        if (i < 0 || i > 2) throw DomainError("kappa index must be 0, 1 or 2");
        if (kind_ == GeneratorKind::Power) {
            // constant ratios (p-1, p, p+1)
            return p_ - 1.0 + static_cast<double>(i);
        }
        const double ph = phi(x);
        const PhiDerivs d = phi_derivs(x);
        const double num = (i == 0) ? d.d1 : (i == 1) ? d.d2 : d.d3;
        const double den = (i == 0) ? ph : (i == 1) ? d.d1 : d.d2;
        if (den == 0.0) throw DomainError("kappa: vanishing phi derivative");
        return -num * x / den;
    }

    /// varpi(x) = int_0^x dz / (-phi'(z)).
    double varpi(double x) const {
        if (x < 0.0) throw DomainError("varpi requires x >= 0");
        if (x == 0.0) return 0.0;
        switch (kind_) {
            case GeneratorKind::Power: {
                // scale^{p-1} / (p-1)^p * x^{p+1} / (p+1); reduces to
                // (q-1)^p x^{p+1} / (p+1) at scale 1
                return std::pow(scale_, p_ - 1.0) / std::pow(p_ - 1.0, p_)
                       * std::pow(x, p_ + 1.0) / (p_ + 1.0);
            }
            case GeneratorKind::Exponential:
                return (std::expm1(a_ * x) - a_ * x) / a_;
            case GeneratorKind::Custom:
                // substitute y = phi(z): int_0^x dz/(-phi'(z)) = int_{phi(x)}^inf dy/f(y)^2
                return integrate_tail([this](double y) { const double v = f_(y);
                                                         return 1.0 / (v * v); },
                                      invert_G(x), quad_tol_);
        }
        return 0.0;
    }

    /// vartheta(x) = max(varpi(x), x^2) -- decay rate of the remainder H.
    double vartheta(double x) const { return std::max(varpi(x), x * x); }

    /// Exponent alpha in the terminal approximation, when the class pins it.
    std::optional<double> alpha() const {
        if (kind_ == GeneratorKind::Power) return 2.0 - p_;
        if (kind_ == GeneratorKind::Exponential) return 1.0;
        return std::nullopt;
    }

    /// Theta(x): inverse of Gtilde(u) = int_u^inf dy / (-f(y)/eta_max - lambda_max),
    /// the separable solution of Theta' = f(Theta)/eta_max + lambda_max with
    /// Theta(0+) = infinity.
    double theta_envelope(double x, double eta_max, double lambda_max) const {
        if (x <= 0.0) throw DomainError("theta_envelope requires x > 0");
        if (eta_max <= 0.0) throw DomainError("theta_envelope requires eta_max > 0");
        if (lambda_max < 0.0) throw DomainError("theta_envelope requires lambda_max >= 0");
        if (lambda_max == 0.0) return phi(x / eta_max);

        // zero of the denominator: -f(y_c) = eta_max * lambda_max
        double yc_lo = 0.0, yc_hi = 1.0;
        while (-f_(yc_hi) < eta_max * lambda_max) {
            yc_hi *= 2.0;
            if (yc_hi > 1e100) throw DomainError("theta_envelope: f bounded above "
                                                 "eta_max*lambda_max never reached");
        }
        const double target = eta_max * lambda_max;
        const double yc = newton_bisect(
            [&](double y) { return std::make_pair(-f_(y) - target, -f1_(y)); },
            yc_lo, yc_hi, 0.5 * (yc_lo + yc_hi), root_tol_, 200);

        auto Gt = [&](double u) {
            return integrate_tail(
                [&](double y) { return 1.0 / (-f_(y) / eta_max - lambda_max); }, u,
                quad_tol_);
        };
        // bracket: Gtilde decreasing on (yc, inf), -> infinity at yc+
        double hi = std::max(2.0 * yc + 1.0, 1.0);
        while (Gt(hi) > x) hi *= 2.0;
        double lo = hi;
        while (Gt(lo) < x) {
            lo = yc + 0.5 * (lo - yc);
            if (lo - yc < 1e-14 * std::max(1.0, yc))
                throw DomainError("theta_envelope: x beyond the range of Gtilde");
        }
        return newton_bisect(
            [&](double u) {
                const double den = -f_(u) / eta_max - lambda_max;
                return std::make_pair(x - Gt(u), 1.0 / den);
            },
            lo, hi, 0.5 * (lo + hi), root_tol_, 200);
    }

    AuditReport audit_assumptions(double eps, double varsigma, double eta_sharp,
                                  int grid_size) const {
        if (eps <= 0.0 || varsigma <= 0.0 || eta_sharp <= 0.0)
            throw DomainError("audit_assumptions requires positive eps, varsigma, eta_sharp");
        if (grid_size < 1) throw DomainError("audit_assumptions requires grid_size >= 1");

        AuditReport rep;
        const double x_hi = eps * (1.0 - 1e-9);
        const double x_lo = (grid_size == 1) ? x_hi : eps * 1e-4;
        for (int k = 0; k < grid_size; ++k) {
            const double t = (grid_size == 1) ? 0.0
                             : static_cast<double>(k) / (grid_size - 1);
            rep.grid.push_back(x_lo * std::pow(x_hi / x_lo, t));
        }

        for (double x : rep.grid) {
            rep.kappa2.push_back(kappa(2, x));
            const double ph = phi(x);
            const double shift = varsigma * phi_derivs(x).d1 * vartheta(eta_sharp * x);
            if (ph + shift <= 0.0) {
                rep.positivity_threshold = std::max(rep.positivity_threshold, x);
                throw DomainError("audit_assumptions: phi + varsigma*phi'*vartheta <= 0 "
                                  "at x = " + std::to_string(x)
                                  + " (shrink eps below this threshold)");
            }
            const double base = f1_(ph);
            rep.a6_plus.push_back(std::abs(f1_(ph + shift) - base));
            rep.a6_minus.push_back(std::abs(f1_(ph - shift) - base));
        }

        for (double v : rep.kappa2) rep.kappa2_sup = std::max(rep.kappa2_sup, v);
        for (std::size_t i = 0; i < rep.grid.size(); ++i)
            rep.a6_sup = std::max(rep.a6_sup, std::max(rep.a6_plus[i], rep.a6_minus[i]));

        // monotone-envelope fit: log-log slope of the increment near x -> 0;
        // growth at least as fast as 1/x means no integrable envelope
        if (rep.grid.size() >= 4) {
            double sx = 0, sy = 0, sxx = 0, sxy = 0;
            int n = 0;
            for (std::size_t i = 0; i < rep.grid.size() / 2; ++i) {
                const double d = std::max(rep.a6_plus[i], rep.a6_minus[i]);
                if (d <= 0.0) continue;
                const double lx = std::log(rep.grid[i]), ly = std::log(d);
                sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
                ++n;
            }
            if (n >= 2) {
                rep.a6_envelope_slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
                rep.blow_up = rep.a6_envelope_slope <= -1.0;
            }
            // A5: kappa^2 on the small-x half should plateau, not outgrow the
            // sup observed on the large-x half
            double sup_small = 0.0, sup_large = 0.0;
            for (std::size_t i = 0; i < rep.grid.size(); ++i)
                (i < rep.grid.size() / 2 ? sup_small : sup_large) =
                    std::max(i < rep.grid.size() / 2 ? sup_small : sup_large,
                             rep.kappa2[i]);
            rep.a5_bounded = sup_small <= 1.5 * std::max(sup_large, 1.0) + 1e-12;
        } else {
            rep.a5_bounded = true;
        }
        rep.a6_bounded = !rep.blow_up && std::isfinite(rep.a6_sup);
        rep.constant_psi = kind_ != GeneratorKind::Custom;
        return rep;
    }

  private:
    GeneratorModel() = default;

    // -log(1 - e^{-ax}) / a with the accurate branch on either side of
    // a*x = log 2: expm1 keeps small products exact, log1p large ones
    double exp_G(double x) const {
        const double ax = a_ * x;
        return (ax < 0.6931471805599453 ? -std::log(-std::expm1(-ax))
                                        : -std::log1p(-std::exp(-ax)))
               / a_;
    }

    double invert_G(double x) const {
        // G is strictly decreasing; grow the bracket geometrically
        double hi = 1.0;
        int guard = 0;
        while (G(hi) > x) {
            hi *= 2.0;
            if (++guard > 400) throw OutOfRange("phi: x below the range of G");
        }
        double lo = hi;
        guard = 0;
        while (G(lo) < x) {
            lo *= 0.5;
            if (++guard > 2000) throw OutOfRange("phi: x exceeds sup G");
        }
        // solve x - G(y) = 0, increasing in y; (x - G)' = 1/(-f) * ... = -G'
        return newton_bisect(
            [&](double y) { return std::make_pair(x - G(y), -1.0 / f_(y)); },
            lo, hi, std::sqrt(lo * hi), root_tol_, 200);
    }

    GeneratorKind kind_ = GeneratorKind::Custom;
    double q_ = 0.0, p_ = 0.0, scale_ = 1.0; // Power
    double a_ = 0.0;                          // Exponential
    double quad_tol_ = 1e-10;
    double root_tol_ = 1e-10;
    std::function<double(double)> f_, f1_, f2_;
};

} // namespace sbsde
