#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ntkspec/common.hpp"
#include "ntkspec/fft.hpp"

namespace ntkspec {

// Both NTK kernels are functions of the inner product rho = x_i . x_j alone.

struct KernelSpec {
    enum class Kind { TwoLayerBias, DeepFC };
    Kind kind = Kind::TwoLayerBias;
    int depth = 1;  // DeepFC only

    static KernelSpec two_layer() { return {Kind::TwoLayerBias, 1}; }
    static KernelSpec deep(int L) {
        if (L < 1 || L > 64) throw std::invalid_argument("KernelSpec: need 1 <= depth <= 64");
        return {Kind::DeepFC, L};
    }
};

// two-layer-with-bias NTK: k(rho) = (1/4pi)(rho+1)(pi - arccos rho)
inline double ntk2_eval(double rho) {
    rho = clamp_unit(rho);
    return (rho + 1.0) * (kPi - std::acos(rho)) / (4.0 * kPi);
}

// angle form of the same kernel: k(delta) = (1/4pi)(cos delta + 1)(pi - |delta|)
inline double ntk2_angle(double delta) {
    double d = std::abs(wrap_angle(delta));
    return (std::cos(d) + 1.0) * (kPi - d) / (4.0 * kPi);
}

// Deep fully-connected NTK via the arc-cosine recursion.  Correlations are
// propagated with
//   Sigma^(h)    = [rho_h (pi - arccos rho_h) + sqrt(1-rho_h^2)] / pi
//   Sigma-dot(h) = [pi - arccos rho_h] / pi
// where rho_h = Sigma^(h-1).  The second closed form keeps
// E[step*step] = 1/4 at rho = 0 (the printed version with a leading rho
// factor would make independent pre-activations vanish there).
inline double ntk_deep_eval(double rho, int depth) {
    if (depth < 1 || depth > 64) throw std::invalid_argument("ntk_deep_eval: need 1 <= depth <= 64");
    double sig = clamp_unit(rho);
    double theta = sig;
    for (int h = 1; h <= depth; ++h) {
        if (std::abs(sig) > 1.0 + 1e-10)
            throw numerical_error("ntk_deep_eval: correlation escaped [-1,1] at layer " +
                                  std::to_string(h) + ": " + std::to_string(sig));
        double c = std::clamp(sig, -1.0, 1.0);
        double acs = std::acos(c);
        double sdot = (kPi - acs) / kPi;
        double s = (c * (kPi - acs) + std::sqrt(std::max(0.0, 1.0 - c * c))) / kPi;
        theta = theta * sdot + s;
        sig = s;
    }
    return theta;
}

inline double kernel_eval(const KernelSpec& spec, double rho) {
    return spec.kind == KernelSpec::Kind::TwoLayerBias ? ntk2_eval(rho)
                                                       : ntk_deep_eval(rho, spec.depth);
}

// k(cos theta) sampled on theta_j = 2pi j / n - pi, j = 0..n-1
inline std::vector<double> kernel_profile(const KernelSpec& spec, std::size_t grid_size) {
    if (!is_power_of_two(grid_size) || grid_size < 256)
        throw std::invalid_argument("kernel_profile: grid must be a power of two >= 256");
    std::vector<double> out(grid_size);
    for (std::size_t j = 0; j < grid_size; ++j) {
        double theta = kTwoPi * static_cast<double>(j) / static_cast<double>(grid_size) - kPi;
        out[j] = kernel_eval(spec, std::cos(theta));
    }
    return out;
}

}  // namespace ntkspec
