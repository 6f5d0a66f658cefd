#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace ntkspec {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

// thrown when a requested computation would exceed the declared memory budget
struct budget_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// thrown when an iteration fails to converge or intermediate values escape
// their admissible range
struct numerical_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// wrap an angle into [-pi, pi)
inline double wrap_angle(double x) {
    double y = std::fmod(x + kPi, kTwoPi);
    if (y < 0.0) y += kTwoPi;
    return y - kPi;
}

// clamp a correlation to [-1,1]; values further than `slack` outside are a
// caller bug, not round-off
inline double clamp_unit(double rho, double slack = 1e-12) {
    if (rho > 1.0 + slack || rho < -1.0 - slack)
        throw std::invalid_argument("correlation outside [-1,1]: " + std::to_string(rho));
    return rho > 1.0 ? 1.0 : (rho < -1.0 ? -1.0 : rho);
}

inline bool nearly_equal(double a, double b, double tol) {
    return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace ntkspec
