#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace kmfg {

inline constexpr double two_pi = 6.283185307179586476925286766559;

// Invalid inputs and out-of-domain arguments.
class domain_error : public std::runtime_error {
public:
    explicit domain_error(const std::string& what) : std::runtime_error(what) {}
};

// Quadrature blow-ups, singular systems, inconsistent fields.
class numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

// Iterative solver gave up; carries the last residual seen.
class convergence_error : public numerical_error {
public:
    convergence_error(const std::string& what, double last_residual)
        : numerical_error(what), last_residual_(last_residual) {}
    double last_residual() const { return last_residual_; }

private:
    double last_residual_;
};

}  // namespace kmfg
