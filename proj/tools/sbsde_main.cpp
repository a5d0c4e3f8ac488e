// Command-line front end: config-driven runs of the singular-BSDE solver,
// convergence sweeps, expansion checks, the liquidation application and the
// generator assumption audit.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sbsde/analysis.hpp"
#include "sbsde/config.hpp"
#include "sbsde/expansion.hpp"
#include "sbsde/liquidation.hpp"
#include "sbsde/scheme.hpp"

namespace {

constexpr const char* kVersion = "1.0.0";

using sbsde::json;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct CliOptions {
    std::string config_path;
    std::string output_dir; // overrides config / SBSDE_OUTPUT_DIR
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
    bool verbose = false;
};

sbsde::RunConfig load(const CliOptions& opt) {
    sbsde::RunConfig rc = sbsde::load_config(opt.config_path);
    if (!opt.output_dir.empty())
        rc.output_dir = opt.output_dir;
    else if (const char* env = std::getenv("SBSDE_OUTPUT_DIR"); env && rc.output_dir == ".")
        rc.output_dir = env;
    if (opt.seed_set) rc.seed = opt.seed;
    rc.resolved["seed"] = rc.seed;
    rc.resolved["output_dir"] = rc.output_dir;
    std::filesystem::create_directories(rc.output_dir);
    return rc;
}

void write_text(const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw sbsde::ConfigError("cannot write " + path);
    out << body;
}

void write_manifest(const sbsde::RunConfig& rc, const std::string& command,
                    double wall_s, const json& diagnostics) {
    json m;
    m["command"] = command;
    m["tool_version"] = kVersion;
    m["seed"] = rc.seed;
    m["wall_clock_s"] = wall_s;
    m["config"] = rc.resolved;
    m["diagnostics"] = diagnostics;
    write_text(rc.output_dir + "/manifest.json", m.dump(2) + "\n");
}

json diag_json(const sbsde::SchemeDiagnostics& d) {
    return {{"newton_iter_total", d.newton_iter_total},
            {"newton_iter_max", d.newton_iter_max},
            {"regression_fallbacks", d.regression_fallbacks},
            {"regression_cond", d.regression_cond}};
}

int run_solve(const CliOptions& opt) {
    auto t0 = std::chrono::steady_clock::now();
    sbsde::RunConfig rc = load(opt);
    sbsde::SchemeResult res = sbsde::solve_singular(rc.generator, rc.coefficients, rc.T,
                                                    rc.scheme, rc.n_paths, rc.seed,
                                                    rc.base_steps);
    std::string csv = "step,time,mean,q05,q50,q95\n";
    std::vector<double> col(res.n_paths);
    for (int i = 0; i <= res.n_steps; ++i) {
        double mean = 0.0;
        for (int p = 0; p < res.n_paths; ++p) {
            col[p] = res.y(p, i);
            mean += col[p];
        }
        mean /= res.n_paths;
        std::sort(col.begin(), col.end());
        auto q = [&](double u) {
            return col[std::min<std::size_t>(col.size() - 1,
                                             static_cast<std::size_t>(u * col.size()))];
        };
        csv += std::to_string(i) + "," + fmt(res.h * i) + "," + fmt(mean) + ","
               + fmt(q(0.05)) + "," + fmt(q(0.50)) + "," + fmt(q(0.95)) + "\n";
    }
    write_text(rc.output_dir + "/solve.csv", csv);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(rc, "solve", wall, diag_json(res.diagnostics));
    if (opt.verbose)
        std::cout << "Y0 mean written for " << res.n_paths << " paths, "
                  << res.n_steps + 1 << " time points\n";
    std::cout << "solve: wrote " << rc.output_dir << "/solve.csv\n";
    return 0;
}

int run_sweep(const CliOptions& opt) {
    auto t0 = std::chrono::steady_clock::now();
    sbsde::RunConfig rc = load(opt);
    const bool delta_sweep = !rc.deltas.empty();
    if (!delta_sweep && rc.step_counts.empty())
        throw sbsde::ConfigError("analysis: need a non-empty step_counts or deltas list");

    sbsde::ConvergenceReport rep =
        delta_sweep
            ? sbsde::convergence_sweep_delta(rc.generator, rc.coefficients, rc.T,
                                             rc.scheme, rc.deltas, rc.n_paths, rc.seed)
            : sbsde::convergence_sweep_h(rc.generator, rc.coefficients, rc.T, rc.scheme,
                                         rc.step_counts, rc.n_paths, rc.seed,
                                         rc.ref_steps);

    std::string csv = "n_steps,h,delta,error,error_sup,oracle_error,bound_total,"
                      "term_delta,term_h,term_psi1,term_psi2\n";
    json rows = json::array();
    for (const auto& r : rep.rows) {
        sbsde::TheoremBound b = sbsde::theorem_bound(rc.generator, rc.coefficients, rc.T,
                                                     r.delta, r.h, rc.beta, rc.bound_C,
                                                     rc.bound_C3);
        csv += std::to_string(r.n_steps) + "," + fmt(r.h) + "," + fmt(r.delta) + ","
               + fmt(r.error) + "," + fmt(r.error_sup) + "," + fmt(r.oracle_error) + ","
               + fmt(b.total) + "," + fmt(b.term_delta) + "," + fmt(b.term_h) + ","
               + fmt(b.term_psi1) + "," + fmt(b.term_psi2) + "\n";
        rows.push_back({{"n_steps", r.n_steps},
                        {"h", r.h},
                        {"delta", r.delta},
                        {"error", r.error},
                        {"error_sup", r.error_sup},
                        {"oracle_error", r.oracle_error},
                        {"bound", {{"total", b.total},
                                   {"K_bound", b.K_bound},
                                   {"psi1", b.psi1},
                                   {"psi2", b.psi2},
                                   {"term_delta", b.term_delta},
                                   {"term_h", b.term_h},
                                   {"term_psi1", b.term_psi1},
                                   {"term_psi2", b.term_psi2}}}});
    }
    json out = {{"mode", delta_sweep ? "delta" : "h"},
                {"slope", rep.slope},
                {"intercept", rep.intercept},
                {"oracle_valid", rep.oracle_valid},
                {"rows", rows}};
    write_text(rc.output_dir + "/sweep.csv", csv);
    write_text(rc.output_dir + "/sweep.json", out.dump(2) + "\n");
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(rc, "sweep", wall, {{"levels", rep.rows.size()}});
    std::cout << "sweep (" << (delta_sweep ? "delta" : "h") << "): fitted rate slope = "
              << fmt(rep.slope) << "\n";
    return 0;
}

int run_expansion_check(const CliOptions& opt) {
    auto t0 = std::chrono::steady_clock::now();
    sbsde::RunConfig rc = load(opt);
    sbsde::SchemeResult res = sbsde::solve_singular(rc.generator, rc.coefficients, rc.T,
                                                    rc.scheme, rc.n_paths, rc.seed,
                                                    rc.base_steps);
    sbsde::PathEnsemble ens = sbsde::simulate(rc.coefficients, rc.T - rc.scheme.delta,
                                              rc.scheme.n_steps, rc.n_paths, rc.seed,
                                              rc.base_steps);
    std::vector<double> H = sbsde::extract_H(res.y_bar, rc.generator, ens, rc.T);
    sbsde::ExpansionConstants consts =
        sbsde::expansion_constants(rc.generator, rc.coefficients, rc.T);
    sbsde::HBoundReport rep =
        sbsde::verify_H_bound(H, consts, rc.generator, ens, rc.T,
                              0.1 * rc.T, rc.coefficients.eta_min);
    double sup_H = 0.0;
    for (double v : H) sup_H = std::max(sup_H, std::abs(v));

    json out = {{"sup_abs_H", sup_H},
                {"sup_H_over_theta", rep.sup_H_over_theta},
                {"sup_residual_over_rate", rep.sup_residual_over_rate},
                {"envelope_2K_over_zeta", rep.envelope},
                {"slack", rep.slack},
                {"violated", rep.violated},
                {"est_discretization", rep.est_discretization},
                {"samples", rep.samples},
                {"constants",
                 {{"K", consts.K},
                  {"kappa_star", consts.kappa_star},
                  {"kappa2_star", consts.kappa2_star},
                  {"mu_star", consts.mu_star},
                  {"zeta_star", consts.zeta_star},
                  {"zeta_sup", consts.zeta_sup},
                  {"alpha", consts.alpha},
                  {"eta_sharp", consts.eta_sharp}}}};
    write_text(rc.output_dir + "/expansion_check.json", out.dump(2) + "\n");
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(rc, "expansion-check", wall, diag_json(res.diagnostics));
    std::cout << "expansion-check: sup|H| = " << fmt(sup_H)
              << (rep.violated ? " (envelope VIOLATED)" : " (within envelope)") << "\n";
    return 0;
}

int run_liquidate(const CliOptions& opt) {
    auto t0 = std::chrono::steady_clock::now();
    sbsde::RunConfig rc = load(opt);
    if (!rc.liquidation)
        throw sbsde::ConfigError("liquidation: section missing");
    sbsde::LiquidationResult res =
        sbsde::solve_liquidation(*rc.liquidation, rc.scheme, rc.n_paths, rc.seed);

    std::string csv = "t,X,rate,Y\n";
    for (std::size_t i = 0; i < res.t.size(); ++i)
        csv += fmt(res.t[i]) + "," + fmt(res.state[i]) + "," + fmt(res.rate[i]) + ","
               + fmt(res.y[i]) + "\n";
    write_text(rc.output_dir + "/trajectory.csv", csv);

    const double gap = (res.value != 0.0)
                           ? std::abs(res.cost - res.value) / std::abs(res.value)
                           : std::abs(res.cost);
    json out = {{"y0", res.y0},
                {"value", res.value},
                {"mc_cost", res.cost},
                {"cost_stderr", res.cost_stderr},
                {"relative_gap", gap},
                {"terminal_residual", res.terminal_residual}};
    write_text(rc.output_dir + "/liquidate.json", out.dump(2) + "\n");
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(rc, "liquidate", wall, diag_json(res.bsde.diagnostics));
    std::cout << "liquidate: value = " << fmt(res.value) << ", realized cost = "
              << fmt(res.cost) << " (gap " << fmt(gap) << ")\n";
    return 0;
}

int run_audit(const CliOptions& opt) {
    auto t0 = std::chrono::steady_clock::now();
    sbsde::RunConfig rc = load(opt);
    sbsde::AuditReport rep = rc.generator.audit_assumptions(
        rc.audit_eps, rc.audit_varsigma, rc.coefficients.eta_sharp(), rc.audit_grid);

    json out = {{"kappa2_sup", rep.kappa2_sup},
                {"a6_sup", rep.a6_sup},
                {"a6_envelope_slope", rep.a6_envelope_slope},
                {"a5_bounded", rep.a5_bounded},
                {"a6_bounded", rep.a6_bounded},
                {"blow_up", rep.blow_up},
                {"constant_psi", rep.constant_psi},
                {"grid", rep.grid},
                {"kappa2", rep.kappa2},
                {"a6_plus", rep.a6_plus},
                {"a6_minus", rep.a6_minus}};
    write_text(rc.output_dir + "/audit.json", out.dump(2) + "\n");
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(rc, "audit-assumptions", wall, {{"grid_size", rep.grid.size()}});

    if (rc.generator.kind() == sbsde::GeneratorKind::Power && rep.a5_bounded)
        std::cout << "A5: pass (constant kappa2 = p+1 = "
                  << fmt(rc.generator.power_p() + 1.0) << ")\n";
    else
        std::cout << "A5: " << (rep.a5_bounded ? "pass" : "FAIL") << " (sup kappa2 = "
                  << fmt(rep.kappa2_sup) << ")\n";
    std::cout << "A6: " << (rep.a6_bounded ? "pass" : "FAIL") << " (sup increment = "
              << fmt(rep.a6_sup) << ", small-x slope = " << fmt(rep.a6_envelope_slope)
              << ")\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Singular-terminal BSDE solver and error-analysis harness"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    CliOptions opt;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("config", opt.config_path, "JSON config file")->required();
        sub->add_option("-o,--output-dir", opt.output_dir, "output directory override");
        sub->add_option("--seed", opt.seed, "seed override")
            ->each([&](const std::string&) { opt.seed_set = true; });
        sub->add_option("--threads", opt.threads, "worker cap (modules run serially now)");
        sub->add_flag("-v,--verbose", opt.verbose, "chatty progress output");
    };

    auto* solve = app.add_subcommand("solve", "run the backward scheme");
    auto* sweep = app.add_subcommand("sweep", "convergence sweep with bound decomposition");
    auto* expc = app.add_subcommand("expansion-check", "remainder extraction and envelope");
    auto* liq = app.add_subcommand("liquidate", "optimal liquidation application");
    auto* audit = app.add_subcommand("audit-assumptions", "generator assumption audit");
    for (auto* s : {solve, sweep, expc, liq, audit}) add_common(s);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (solve->parsed()) return run_solve(opt);
        if (sweep->parsed()) return run_sweep(opt);
        if (expc->parsed()) return run_expansion_check(opt);
        if (liq->parsed()) return run_liquidate(opt);
        if (audit->parsed()) return run_audit(opt);
    } catch (const sbsde::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
