#pragma once

#include <stdexcept>
#include <string>

namespace sbsde {

struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

struct DivergentIntegral : std::runtime_error {
    explicit DivergentIntegral(const std::string& what) : std::runtime_error(what) {}
};

struct OutOfRange : std::runtime_error {
    explicit OutOfRange(const std::string& what) : std::runtime_error(what) {}
};

struct NoConvergence : std::runtime_error {
    explicit NoConvergence(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct SingularRegression : std::runtime_error {
    explicit SingularRegression(const std::string& what) : std::runtime_error(what) {}
};

struct UnsupportedExpansion : std::runtime_error {
    explicit UnsupportedExpansion(const std::string& what) : std::runtime_error(what) {}
};

struct UnboundedKappa : std::runtime_error {
    explicit UnboundedKappa(const std::string& what) : std::runtime_error(what) {}
};

struct StiffnessError : std::runtime_error {
    explicit StiffnessError(const std::string& what) : std::runtime_error(what) {}
};

struct InnerEstimatorError : std::runtime_error {
    explicit InnerEstimatorError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace sbsde
