#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "ntkspec/common.hpp"
#include "ntkspec/nets.hpp"
#include "ntkspec/spectral.hpp"

namespace ntkspec {

// Spectral convergence law: after t GD steps on the linearized dynamics,
//   |y - u(t)| = sqrt( sum_i (1 - eta lambda_i)^{2t} (v_i' y)^2 ).
// Eigenvalues are Gram-matrix eigenvalues (not operator-normalized); eta is
// whatever step size multiplies that matrix in the update.

inline bool spectral_law_stable(const GramSpectrum& s, double eta) {
    return s.eigenvalues.empty() || eta * s.eigenvalues.front() <= 1.0;
}

inline double predict_residual(const GramSpectrum& s, std::span<const double> y, double eta,
                               long t) {
    if (s.k != s.n)
        throw std::invalid_argument("predict_residual: full spectrum required (k = n)");
    if (y.size() != s.n) throw std::invalid_argument("predict_residual: dimension mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < s.k; ++i) {
        double proj = 0.0;
        for (std::size_t r = 0; r < s.n; ++r) proj += s.vec(r, i) * y[r];
        double f = 1.0 - eta * s.eigenvalues[i];
        acc += std::pow(f * f, static_cast<double>(t)) * proj * proj;
    }
    return std::sqrt(acc);
}

// smallest t with predict_residual < delta, by doubling then bisection;
// returns -1 if the cap is reached first
inline long predicted_time(const GramSpectrum& s, std::span<const double> y, double eta,
                           double delta, long cap = 100'000'000L) {
    if (predict_residual(s, y, eta, 0) < delta) return 0;
    long hi = 1;
    while (hi < cap && predict_residual(s, y, eta, hi) >= delta) hi *= 2;
    if (hi >= cap && predict_residual(s, y, eta, hi) >= delta) return -1;
    long lo = hi / 2;  // resid(lo) >= delta > resid(hi)
    while (hi - lo > 1) {
        long mid = lo + (hi - lo) / 2;
        if (predict_residual(s, y, eta, mid) < delta) hi = mid;
        else lo = mid;
    }
    return hi;
}

struct CompareReport {
    double max_rel_dev = 0.0;      // max |measured - predicted| / predicted over the horizon
    long horizon = 0;              // last iteration compared
    long measured_time = -1;       // first recorded iteration with residual < delta
    long predicted_time = -1;
    bool truncated = false;        // horizon exceeded the trace
    std::vector<long> iters;
    std::vector<double> measured;
    std::vector<double> predicted;
};

// Pointwise comparison of a recorded training residual curve against the
// spectral law, over recorded iterations up to `horizon`.
inline CompareReport compare(const TrainingTrace& trace, const GramSpectrum& s,
                             std::span<const double> y, double eta, long horizon,
                             double delta_resid = 0.0) {
    if (trace.residual_norm.empty())
        throw std::invalid_argument("compare: trace has no recorded residual norms");
    CompareReport rep;
    if (!trace.iters.empty() && horizon > trace.iters.back()) {
        rep.truncated = true;
        horizon = trace.iters.back();
    }
    rep.horizon = horizon;
    for (std::size_t r = 0; r < trace.iters.size(); ++r) {
        long t = trace.iters[r];
        if (t > horizon) break;
        double meas = trace.residual_norm[r];
        double pred = predict_residual(s, y, eta, t);
        rep.iters.push_back(t);
        rep.measured.push_back(meas);
        rep.predicted.push_back(pred);
        if (pred > 0.0) rep.max_rel_dev = std::max(rep.max_rel_dev, std::abs(meas - pred) / pred);
        if (delta_resid > 0.0 && rep.measured_time < 0 && meas < delta_resid)
            rep.measured_time = t;
    }
    if (delta_resid > 0.0) rep.predicted_time = predicted_time(s, y, eta, delta_resid);
    return rep;
}

// Exact linearized dynamics u(t+1) = u(t) + eta H (y - u(t)) from u(0) = 0;
// returns |y - u(t)| for t = 0..T.  Internal consistency oracle for the
// closed-form law.
inline std::vector<double> linear_dynamics_residuals(const GramMatrix& h,
                                                     std::span<const double> y, double eta,
                                                     long T) {
    const std::size_t n = h.n;
    if (y.size() != n) throw std::invalid_argument("linear_dynamics_residuals: dim mismatch");
    std::vector<double> u(n, 0.0), r(n), hu(n);
    std::vector<double> out;
    out.reserve(T + 1);
    for (long t = 0; t <= T; ++t) {
        double nrm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            r[i] = y[i] - u[i];
            nrm += r[i] * r[i];
        }
        out.push_back(std::sqrt(nrm));
        if (t == T) break;
        sym_matvec(h.a, n, r, hu);
        for (std::size_t i = 0; i < n; ++i) u[i] += eta * hu[i];
    }
    return out;
}

}  // namespace ntkspec
