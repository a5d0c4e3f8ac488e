#pragma once

#include <fstream>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "sbsde/errors.hpp"
#include "sbsde/forward.hpp"
#include "sbsde/generator.hpp"
#include "sbsde/liquidation.hpp"
#include "sbsde/scheme.hpp"

namespace sbsde {

using json = nlohmann::json;

namespace cfg {

inline void require_keys(const json& j, const std::string& section,
                         const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError(section + ": expected an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k))
            throw ConfigError(section + ": unknown key '" + k + "'");
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

template <typename T>
T get_req(const json& j, const std::string& section, const std::string& key) {
    if (!j.contains(key)) throw ConfigError(section + "." + key + ": missing");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(section + "." + key + ": " + e.what());
    }
}

} // namespace cfg

/// Fully-resolved run configuration, built from the JSON file with unknown
/// keys rejected.  `resolved` echoes every value actually used (defaults
/// filled in) and goes into the run manifest verbatim.
struct RunConfig {
    GeneratorModel generator = GeneratorModel::power(2.0);
    CoefficientModel coefficients = CoefficientModel::constant(1.0);
    SchemeConfig scheme;
    double T = 1.0;
    int n_paths = 1;
    std::uint64_t seed = 1;
    int base_steps = 0;
    std::string output_dir = ".";

    // analysis section
    std::vector<int> step_counts;
    std::vector<double> deltas;
    double beta = 0.5;
    int ref_steps = 0;
    double bound_C = 1.0;
    double bound_C3 = 1.0;

    // audit section
    double audit_eps = 1.0;
    double audit_varsigma = 1.0;
    int audit_grid = 200;

    std::optional<LiquidationProblem> liquidation;

    json resolved;
};

inline GeneratorModel parse_generator(const json& j) {
    cfg::require_keys(j, "generator", {"kind", "q", "a", "scale"});
    const auto kind = cfg::get_req<std::string>(j, "generator", "kind");
    if (kind == "power")
        return GeneratorModel::power(cfg::get_req<double>(j, "generator", "q"),
                                     cfg::get_or<double>(j, "scale", 1.0));
    if (kind == "exponential")
        return GeneratorModel::exponential(cfg::get_req<double>(j, "generator", "a"));
    throw ConfigError("generator.kind: expected 'power' or 'exponential', got '" + kind
                      + "' (custom drivers are library-only)");
}

inline CoefficientModel parse_coefficients(const json& j, double T) {
    cfg::require_keys(j, "coefficients",
                      {"kind", "eta", "lambda", "eta0", "eta_slope", "eta_min", "eta_max",
                       "x0", "drift", "vol"});
    const auto kind = cfg::get_req<std::string>(j, "coefficients", "kind");
    const double lambda = cfg::get_or<double>(j, "lambda", 0.0);
    if (kind == "constant")
        return CoefficientModel::constant(cfg::get_req<double>(j, "coefficients", "eta"),
                                          lambda);
    if (kind == "affine") {
        const double e0 = cfg::get_req<double>(j, "coefficients", "eta0");
        const double s = cfg::get_req<double>(j, "coefficients", "eta_slope");
        const double lo = std::min(e0, e0 + s * T), hi = std::max(e0, e0 + s * T);
        return CoefficientModel::deterministic(
            [e0, s](double t) { return e0 + s * t; }, lo, hi,
            [lambda](double) { return lambda; }, lambda, std::abs(s));
    }
    if (kind == "arctan")
        return CoefficientModel::arctan(
            cfg::get_req<double>(j, "coefficients", "eta_min"),
            cfg::get_req<double>(j, "coefficients", "eta_max"),
            cfg::get_or<double>(j, "x0", 0.0), cfg::get_or<double>(j, "drift", 0.0),
            cfg::get_req<double>(j, "coefficients", "vol"),
            [lambda](double) { return lambda; }, lambda);
    throw ConfigError("coefficients.kind: expected 'constant', 'affine' or 'arctan'");
}

inline SchemeConfig parse_scheme(const json& j) {
    cfg::require_keys(j, "scheme",
                      {"delta", "n_steps", "estimator", "degree", "inner_paths",
                       "newton_tol", "newton_max_iter", "expansion_order"});
    SchemeConfig s;
    s.delta = cfg::get_req<double>(j, "scheme", "delta");
    s.n_steps = cfg::get_req<int>(j, "scheme", "n_steps");
    s.newton_tol = cfg::get_or<double>(j, "newton_tol", 1e-12);
    s.newton_max_iter = cfg::get_or<int>(j, "newton_max_iter", 100);
    s.expansion_order = cfg::get_or<int>(j, "expansion_order", 0);
    const auto est = cfg::get_or<std::string>(j, "estimator", "passthrough");
    if (est == "passthrough")
        s.estimator = CondExpEstimator::passthrough();
    else if (est == "regression")
        s.estimator = CondExpEstimator::regression(cfg::get_or<int>(j, "degree", 3));
    else if (est == "nested")
        s.estimator = CondExpEstimator::nested(cfg::get_or<int>(j, "inner_paths", 64));
    else
        throw ConfigError("scheme.estimator: expected 'passthrough', 'regression' "
                          "or 'nested'");
    return s;
}

inline LiquidationProblem parse_liquidation(const json& j, double T) {
    cfg::require_keys(j, "liquidation", {"x0", "p", "zeta", "lambda"});
    LiquidationProblem prob;
    prob.x0 = cfg::get_req<double>(j, "liquidation", "x0");
    prob.p = cfg::get_req<double>(j, "liquidation", "p");
    prob.T = T;
    const double z = cfg::get_or<double>(j, "zeta", 1.0);
    prob.zeta = [z](double) { return z; };
    prob.zeta_min = prob.zeta_max = z;
    const double lam = cfg::get_or<double>(j, "lambda", 0.0);
    prob.lambda = [lam](double) { return lam; };
    prob.lambda_max = lam;
    prob.validate();
    return prob;
}

inline RunConfig parse_config(const json& j) {
    cfg::require_keys(j, "config",
                      {"T", "seed", "n_paths", "base_steps", "output_dir", "generator",
                       "coefficients", "scheme", "analysis", "audit", "liquidation"});
    RunConfig rc;
    rc.T = cfg::get_or<double>(j, "T", 1.0);
    rc.seed = cfg::get_or<std::uint64_t>(j, "seed", 1);
    rc.n_paths = cfg::get_or<int>(j, "n_paths", 1);
    rc.base_steps = cfg::get_or<int>(j, "base_steps", 0);
    rc.output_dir = cfg::get_or<std::string>(j, "output_dir", ".");

    if (!j.contains("generator")) throw ConfigError("generator: section missing");
    rc.generator = parse_generator(j.at("generator"));
    if (!j.contains("coefficients")) throw ConfigError("coefficients: section missing");
    rc.coefficients = parse_coefficients(j.at("coefficients"), rc.T);
    if (!j.contains("scheme")) throw ConfigError("scheme: section missing");
    rc.scheme = parse_scheme(j.at("scheme"));

    if (j.contains("analysis")) {
        const json& a = j.at("analysis");
        cfg::require_keys(a, "analysis",
                          {"step_counts", "deltas", "beta", "ref_steps", "C", "C3"});
        rc.step_counts = cfg::get_or<std::vector<int>>(a, "step_counts", {});
        rc.deltas = cfg::get_or<std::vector<double>>(a, "deltas", {});
        rc.beta = cfg::get_or<double>(a, "beta", 0.5);
        rc.ref_steps = cfg::get_or<int>(a, "ref_steps", 0);
        rc.bound_C = cfg::get_or<double>(a, "C", 1.0);
        rc.bound_C3 = cfg::get_or<double>(a, "C3", 1.0);
    }
    if (j.contains("audit")) {
        const json& a = j.at("audit");
        cfg::require_keys(a, "audit", {"eps", "varsigma", "grid_size"});
        rc.audit_eps = cfg::get_or<double>(a, "eps", 1.0);
        rc.audit_varsigma = cfg::get_or<double>(a, "varsigma", 1.0);
        rc.audit_grid = cfg::get_or<int>(a, "grid_size", 200);
    }
    if (j.contains("liquidation"))
        rc.liquidation = parse_liquidation(j.at("liquidation"), rc.T);

    // echo back the fully-resolved values
    rc.resolved = j;
    rc.resolved["T"] = rc.T;
    rc.resolved["seed"] = rc.seed;
    rc.resolved["n_paths"] = rc.n_paths;
    rc.resolved["base_steps"] = rc.base_steps;
    rc.resolved["output_dir"] = rc.output_dir;
    return rc;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse: ") + e.what());
    }
    return parse_config(j);
}

} // namespace sbsde
