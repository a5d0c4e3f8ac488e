#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sbsde/analysis.hpp"

using namespace sbsde;

TEST_CASE("deterministic oracle, lambda = 0, closed form") {
    GeneratorModel gen = GeneratorModel::power(3.0);
    SECTION("constant eta") {
        CoefficientModel coeff = CoefficientModel::constant(2.0);
        OracleSolution sol = oracle_deterministic(gen, coeff, 1.0);
        CHECK(sol.closed_form);
        for (double t : {0.0, 0.3, 0.77, 0.95})
            CHECK(sol.at(t) == Catch::Approx(gen.phi((1.0 - t) / 2.0)).epsilon(1e-12));
    }
    SECTION("affine eta via the time change") {
        CoefficientModel coeff = CoefficientModel::deterministic(
            [](double t) { return 1.0 + t; }, 1.0, 2.0, [](double) { return 0.0; }, 0.0,
            1.0);
        OracleSolution sol = oracle_deterministic(gen, coeff, 1.0);
        for (double t : {0.0, 0.5, 0.9}) {
            const double A = std::log(2.0 / (1.0 + t));
            CHECK(sol.at(t) == Catch::Approx(gen.phi(A)).epsilon(1e-10));
        }
    }
}

TEST_CASE("deterministic oracle with lambda > 0 satisfies its ODE") {
    GeneratorModel gen = GeneratorModel::power(3.0);
    CoefficientModel coeff = CoefficientModel::constant(1.0, 0.4);
    OracleSolution sol = oracle_deterministic(gen, coeff, 1.0, 1e-6, 2000);
    CHECK_FALSE(sol.closed_form);
    CHECK(sol.est_error < 1e-4);
    // central difference of the tabulated solution vs dY/dt = -f(Y) - lambda
    for (double t : {0.1, 0.4, 0.7}) {
        const double fd = 1e-4;
        const double dY = (sol.at(t + fd) - sol.at(t - fd)) / (2.0 * fd);
        const double y = sol.at(t);
        CHECK(dY == Catch::Approx(-gen.f(y) - 0.4).epsilon(1e-3));
    }
    // lambda > 0 dominates the lambda = 0 solution
    OracleSolution base = oracle_deterministic(gen, CoefficientModel::constant(1.0), 1.0);
    for (double t : {0.0, 0.5, 0.9}) CHECK(sol.at(t) >= base.at(t) - 1e-10);
}

TEST_CASE("oracle rejects stochastic coefficients") {
    GeneratorModel gen = GeneratorModel::power(3.0);
    CoefficientModel coeff = CoefficientModel::arctan(0.5, 2.0, 0.0, 0.0, 0.3);
    CHECK_THROWS_AS(oracle_deterministic(gen, coeff, 1.0), ConfigError);
}

TEST_CASE("theorem bound decomposition") {
    GeneratorModel gen = GeneratorModel::power(3.0);
    CoefficientModel coeff = CoefficientModel::constant(1.0, 0.2);
    TheoremBound b = theorem_bound(gen, coeff, 1.0, 0.1, 0.01, 0.5);
    CHECK(b.term_delta == Catch::Approx(std::pow(0.1, 0.5)));
    CHECK(b.term_h == Catch::Approx(0.1)); // h^beta = 0.01^0.5
    CHECK(b.term_psi1 >= 0.0);
    CHECK(b.term_psi2 >= 0.0);
    CHECK(b.psi1 >= 0.0);
    CHECK(b.psi2 >= 0.0);
    CHECK(b.total == Catch::Approx(b.term_delta + b.term_h + b.term_psi1 + b.term_psi2));
    // K_bound with lambda = 0 reduces to phi(delta/eta_max) + C delta^alpha
    TheoremBound b0 = theorem_bound(gen, CoefficientModel::constant(2.0), 1.0, 0.1, 0.01,
                                    0.5, 2.0);
    CHECK(b0.K_bound
          == Catch::Approx(gen.phi(0.1 / 2.0) + 2.0 * std::pow(0.1, 0.5)).epsilon(1e-12));
    // monotone in h
    TheoremBound fine = theorem_bound(gen, coeff, 1.0, 0.1, 0.001, 0.5);
    CHECK(fine.total < b.total);
}

TEST_CASE("h-sweep reproduces first-order convergence on a deterministic problem") {
    GeneratorModel gen = GeneratorModel::power(3.0);
    CoefficientModel coeff = CoefficientModel::constant(1.0);
    SchemeConfig cfg;
    cfg.delta = 0.1;
    ConvergenceReport rep = convergence_sweep_h(gen, coeff, 1.0, cfg, {15, 30, 60, 120},
                                                1, 1);
    CHECK(rep.slope == Catch::Approx(1.0).margin(0.15));
    CHECK(rep.oracle_valid);
    REQUIRE(rep.rows.size() == 4);
    for (std::size_t i = 1; i < rep.rows.size(); ++i)
        CHECK(rep.rows[i].error < rep.rows[i - 1].error);
}

TEST_CASE("delta-sweep reproduces the alpha rate at the cutoff") {
    CoefficientModel coeff = CoefficientModel::deterministic(
        [](double t) { return 1.0 + 0.5 * t; }, 1.0, 1.5, [](double) { return 0.0; }, 0.0,
        0.5);
    SchemeConfig cfg;
    cfg.n_steps = 200;
    SECTION("power q = 3: alpha = 1/2") {
        ConvergenceReport rep = convergence_sweep_delta(
            GeneratorModel::power(3.0), coeff, 1.0, cfg, {0.2, 0.1, 0.05, 0.025}, 1, 1);
        CHECK(rep.slope == Catch::Approx(0.5).margin(0.1));
    }
    SECTION("exponential a = 1: alpha = 1") {
        ConvergenceReport rep = convergence_sweep_delta(
            GeneratorModel::exponential(1.0), coeff, 1.0, cfg, {0.2, 0.1, 0.05, 0.025}, 1,
            1);
        CHECK(rep.slope == Catch::Approx(1.0).margin(0.1));
    }
}

TEST_CASE("stochastic reference self-consistency") {
    GeneratorModel gen = GeneratorModel::power(3.0);
    CoefficientModel coeff = CoefficientModel::arctan(0.8, 1.25, 0.0, 0.0, 0.2);
    SchemeConfig cfg;
    cfg.delta = 0.1;
    cfg.estimator = CondExpEstimator::regression(2);
    StochasticReference ref = reference_stochastic(gen, coeff, 1.0, cfg, 100, 3, 64);
    CHECK(ref.consistency_gap >= 0.0);
    CHECK(ref.consistency_ratio < 0.05); // converged well below the value scale
    CHECK(ref.solution.n_steps == 64);
}

TEST_CASE("delta balancing picks the bound minimizer, ties to the larger delta") {
    GeneratorModel gen = GeneratorModel::power(3.0);
    CoefficientModel coeff = CoefficientModel::constant(1.0);
    std::vector<double> grid = {0.4, 0.2, 0.1, 0.05, 0.025, 0.0125};
    BalanceResult res = balance_delta(gen, coeff, 1.0, 1e-3, 0.5, grid);
    REQUIRE(res.totals.size() == grid.size());
    double best = res.totals[0];
    for (double v : res.totals) best = std::min(best, v);
    CHECK(res.best_total == Catch::Approx(best));
    // duplicate minimizer: the later (here equal) entry wins on ties
    BalanceResult tie = balance_delta(gen, coeff, 1.0, 1e-3, 0.5, {0.1, 0.1});
    CHECK(tie.best_delta == 0.1);
    CHECK_THROWS_AS(balance_delta(gen, coeff, 1.0, 1e-3, 0.5, {}), ConfigError);
}

TEST_CASE("constant eta with lambda = 0 has an exact terminal layer") {
    GeneratorModel gen = GeneratorModel::power(3.0);
    // xi = phi(Delta) = Y(T - Delta) exactly, so the cutoff error is zero up
    // to floating noise and no Delta-rate exists to measure
    CoefficientModel coeff = CoefficientModel::constant(1.0);
    SchemeConfig cfg;
    cfg.n_steps = 50;
    try {
        ConvergenceReport rep =
            convergence_sweep_delta(gen, coeff, 1.0, cfg, {0.2, 0.1, 0.05}, 1, 1);
        for (const auto& r : rep.rows) CHECK(r.error_cut < 1e-10);
    } catch (const DomainError&) {
        SUCCEED("all cutoff errors identically zero: nothing to fit");
    }
}
