#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ntkspec/common.hpp"
#include "ntkspec/geometry.hpp"
#include "ntkspec/spectral.hpp"

namespace ntkspec {

// Closed-form eigensystem of the two-layer NTK on S^1 for piecewise-constant
// densities: cumulative root-density Psi and its average Z, the eigenvalue
// formula in q, eigenfunctions built by propagating (f, f') across regions,
// and the tail bound for target projections.

// Psi(x) = integral of sqrt(p) from -pi to x
inline double psi(double x, const PiecewiseDensity1D& d) {
    x = wrap_angle(x);
    double acc = 0.0;
    if (d.boundaries()[0] > -kPi) {
        double covered = std::min(x, d.boundaries()[0]) - (-kPi);
        acc += std::sqrt(d.values().back()) * std::max(0.0, covered);
        if (x <= d.boundaries()[0]) return acc;
    }
    for (std::size_t j = 0; j < d.regions(); ++j) {
        double lo = d.region_left(j);
        double hi = std::min(d.region_right(j), kPi);
        if (x <= lo) break;
        acc += std::sqrt(d.values()[j]) * (std::min(x, hi) - lo);
        if (x <= hi) break;
    }
    return acc;
}

// Z = Psi(pi) / 2pi
inline double z_const(const PiecewiseDensity1D& d) {
    double s = 0.0;
    for (std::size_t j = 0; j < d.regions(); ++j)
        s += std::sqrt(d.values()[j]) * d.region_length(j);
    return s / kTwoPi;
}

// Eigenvalue of mode q.  The four-case formula is pinned to the exactly
// solvable uniform density (where the spectrum equals the Fourier transform
// of the kernel profile): q=0 carries 2pi*Z^2 and q>=1 carries pi*Z^2, which
// reproduces those Fourier coefficients exactly.  For odd q this is also the
// unique value consistent with the mode ODE f'' = -(p/(pi lambda)) f at
// local frequency q sqrt(p)/Z.
inline double analytic_eigenvalue(int q, double Z) {
    if (q < 0) throw std::invalid_argument("analytic_eigenvalue: q must be >= 0");
    const double Z2 = Z * Z;
    if (q == 0) return Z2 * (1.0 / kPi + kPi / 4.0);
    if (q == 1) return Z2 * (1.0 / kPi + kPi / 8.0);
    const double qq = static_cast<double>(q) * static_cast<double>(q);
    if (q % 2 == 0) return Z2 * (qq + 1.0) / (kPi * (qq - 1.0) * (qq - 1.0));
    return Z2 / (kPi * qq);
}

// --------------------------------------------------------------------------
// eigenfunctions
// --------------------------------------------------------------------------

// Piecewise sinusoid f(x) = a_j cos(w_j x + b_j) on region j, with
// w_j = q sqrt(p_j) / Z.  Phases refer to the unwrapped coordinate of the
// region (the wrap region continues past pi).
struct EigenMode1D {
    int q = 0;
    double lambda = 0.0;
    double Z = 0.0;
    std::vector<double> amplitude;  // a_j >= 0
    std::vector<double> phase;      // b_j in [-pi, pi)
    std::vector<double> omega;      // local frequency q sqrt(p_j) / Z
    std::vector<double> left;       // region left edges (unwrapped)
    std::vector<double> right;

    double unwrap(double x) const {
        x = wrap_angle(x);
        return x < left.front() ? x + kTwoPi : x;
    }
    std::size_t region_of(double x) const {
        double u = unwrap(x);
        for (std::size_t j = 0; j + 1 < left.size(); ++j)
            if (u < right[j]) return j;
        return left.size() - 1;
    }
    double eval(double x) const {
        std::size_t j = region_of(x);
        return amplitude[j] * std::cos(omega[j] * unwrap(x) + phase[j]);
    }
    double deriv(double x) const {
        std::size_t j = region_of(x);
        return -amplitude[j] * omega[j] * std::sin(omega[j] * unwrap(x) + phase[j]);
    }
    double second_deriv(double x) const {
        std::size_t j = region_of(x);
        return -amplitude[j] * omega[j] * omega[j] *
               std::cos(omega[j] * unwrap(x) + phase[j]);
    }
};

struct ModeBuildResult {
    std::vector<EigenMode1D> modes;   // zero, one, or two
    double monodromy_trace = 0.0;     // reported when quantization fails
    bool quantized = false;
};

namespace detail {

using Mat2 = std::array<double, 4>;  // row-major [[a,b],[c,d]]

inline Mat2 mul(const Mat2& m, const Mat2& n) {
    return {m[0] * n[0] + m[1] * n[2], m[0] * n[1] + m[1] * n[3],
            m[2] * n[0] + m[3] * n[2], m[2] * n[1] + m[3] * n[3]};
}

// harmonic-oscillator transfer over an arc of length len at frequency w
inline Mat2 oscillator_transfer(double w, double len) {
    if (w == 0.0) return {1.0, len, 0.0, 1.0};
    double c = std::cos(w * len), s = std::sin(w * len);
    return {c, s / w, -w * s, c};
}

// integral of (a cos(w x + b))^2 over [lo, hi]
inline double cos_sq_integral(double a, double w, double b, double lo, double hi) {
    if (w == 0.0) return a * a * std::cos(b) * std::cos(b) * (hi - lo);
    double t = (hi - lo) / 2.0 +
               (std::sin(2.0 * (w * hi + b)) - std::sin(2.0 * (w * lo + b))) / (4.0 * w);
    return a * a * t;
}

inline EigenMode1D mode_from_state(const PiecewiseDensity1D& d, int q, double Z, double f0,
                                   double df0) {
    const std::size_t l = d.regions();
    EigenMode1D m;
    m.q = q;
    m.Z = Z;
    m.lambda = analytic_eigenvalue(q, Z);
    m.amplitude.resize(l);
    m.phase.resize(l);
    m.omega.resize(l);
    m.left.resize(l);
    m.right.resize(l);
    double f = f0, df = df0;
    for (std::size_t j = 0; j < l; ++j) {
        double w = q * std::sqrt(d.values()[j]) / Z;
        double lo = d.region_left(j);
        double hi = d.region_right(j);
        m.omega[j] = w;
        m.left[j] = lo;
        m.right[j] = hi;
        if (w == 0.0) {
            m.amplitude[j] = std::abs(f);
            m.phase[j] = f >= 0.0 ? 0.0 : -kPi;
        } else {
            double a = std::hypot(f, df / w);
            m.amplitude[j] = a;
            // f = a cos(w lo + b), f' = -a w sin(w lo + b)
            m.phase[j] = wrap_angle(std::atan2(-df / w, f) - w * lo);
        }
        Mat2 t = oscillator_transfer(w, hi - lo);
        double fn = t[0] * f + t[1] * df;
        double dfn = t[2] * f + t[3] * df;
        f = fn;
        df = dfn;
    }
    // unit L2(dx) norm
    double s = 0.0;
    for (std::size_t j = 0; j < l; ++j)
        s += cos_sq_integral(m.amplitude[j], m.omega[j], m.phase[j], m.left[j], m.right[j]);
    double scale = 1.0 / std::sqrt(s);
    for (auto& a : m.amplitude) a *= scale;
    // sign gauge: f(-pi) >= 0, or f'(-pi) > 0 when f(-pi) vanishes
    double fa = m.eval(-kPi), da = m.deriv(-kPi);
    if (fa < -1e-12 || (std::abs(fa) <= 1e-12 && da < 0.0)) {
        for (auto& b : m.phase) b = wrap_angle(b + kPi);
    }
    return m;
}

}  // namespace detail

// Propagate the (f, f') state with the oscillator transfer map of each
// region; periodic eigenfunctions exist exactly when the full-circle
// monodromy has a unit eigenvalue.  An identity monodromy yields a
// degenerate pair, a single unit eigendirection yields one mode, anything
// else reports the trace and returns no modes.
inline ModeBuildResult build_eigenfunctions(const PiecewiseDensity1D& d, int q,
                                            double trace_tol = 1e-6) {
    if (q < 0) throw std::invalid_argument("build_eigenfunctions: q must be >= 0");
    for (double p : d.values())
        if (p <= 0.0) throw std::invalid_argument("build_eigenfunctions: regions must have p > 0");
    const double Z = z_const(d);
    ModeBuildResult out;

    if (q == 0) {
        // w = 0 everywhere: the constant function is always periodic
        out.quantized = true;
        out.monodromy_trace = 2.0;
        out.modes.push_back(detail::mode_from_state(d, 0, Z, 1.0, 0.0));
        return out;
    }

    detail::Mat2 M{1.0, 0.0, 0.0, 1.0};
    for (std::size_t j = 0; j < d.regions(); ++j) {
        double w = q * std::sqrt(d.values()[j]) / Z;
        M = detail::mul(detail::oscillator_transfer(w, d.region_length(j)), M);
    }
    double trace = M[0] + M[3];
    out.monodromy_trace = trace;
    if (std::abs(trace - 2.0) > trace_tol) return out;  // quantization mismatch

    out.quantized = true;
    double off = std::max({std::abs(M[0] - 1.0), std::abs(M[1]), std::abs(M[2]),
                           std::abs(M[3] - 1.0)});
    if (off < 1e-8) {
        // identity monodromy: every start state closes up; build an
        // orthogonal pair from two canonical states
        EigenMode1D m1 = detail::mode_from_state(d, q, Z, 1.0, 0.0);
        double w0 = q * std::sqrt(d.values()[0]) / Z;
        EigenMode1D m2 = detail::mode_from_state(d, q, Z, 0.0, w0);
        out.modes.push_back(std::move(m1));
        out.modes.push_back(std::move(m2));
    } else {
        // single unit eigendirection: null vector of M - I from its larger row
        double r1n = std::hypot(M[0] - 1.0, M[1]);
        double r2n = std::hypot(M[2], M[3] - 1.0);
        double vf, vdf;
        if (r1n >= r2n) {
            vf = -M[1];
            vdf = M[0] - 1.0;
        } else {
            vf = -(M[3] - 1.0);
            vdf = M[2];
        }
        double nrm = std::hypot(vf, vdf);
        if (nrm == 0.0) {
            vf = 1.0;
            vdf = 0.0;
        } else {
            vf /= nrm;
            vdf /= nrm;
        }
        out.modes.push_back(detail::mode_from_state(d, q, Z, vf, vdf));
    }
    return out;
}

// max |f'' + (p / (pi lambda)) f| over an interior grid, boundaries excluded.
// Exact for odd-q modes, whose eigenvalue satisfies the mode ODE identically.
inline double ode_residual(const EigenMode1D& m, const PiecewiseDensity1D& d,
                           std::size_t grid = 4096, double boundary_gap = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < grid; ++i) {
        double x = -kPi + kTwoPi * (static_cast<double>(i) + 0.5) / static_cast<double>(grid);
        bool near = false;
        for (std::size_t j = 0; j < d.regions(); ++j) {
            double b = d.region_left(j);
            if (std::abs(wrap_angle(x - b)) < boundary_gap) near = true;
        }
        if (near) continue;
        double r = m.second_deriv(x) + d.value_at(x) / (kPi * m.lambda) * m.eval(x);
        worst = std::max(worst, std::abs(r));
    }
    return worst;
}

struct BoundaryRatio {
    std::size_t boundary = 0;  // between region j and j+1 (cyclic)
    double ratio = 0.0;        // a_sparse / a_dense with p_sparse <= p_dense
    double lower = 1.0;
    double upper = 1.0;        // sqrt(p_dense / p_sparse)
    bool ok = true;
};

// Check the amplitude-ratio bound 1 <= a_j/a_{j+1} <= sqrt(p_{j+1}/p_j)
// (for p_j <= p_{j+1}) at every boundary, with multiplicative slack.
inline std::vector<BoundaryRatio> amplitude_ratio_check(const EigenMode1D& m,
                                                        const PiecewiseDensity1D& d,
                                                        double slack = 0.02) {
    const std::size_t l = d.regions();
    std::vector<BoundaryRatio> out;
    if (l < 2) return out;
    for (std::size_t j = 0; j < l; ++j) {
        std::size_t jn = (j + 1) % l;
        double pj = d.values()[j], pn = d.values()[jn];
        double aj = m.amplitude[j], an = m.amplitude[jn];
        if (pj == pn) continue;
        BoundaryRatio r;
        r.boundary = j;
        // orient so the first region is the sparse one
        double asp = pj <= pn ? aj : an;
        double ade = pj <= pn ? an : aj;
        r.upper = std::sqrt(std::max(pj, pn) / std::min(pj, pn));
        r.ratio = ade > 0.0 ? asp / ade : std::numeric_limits<double>::infinity();
        r.ok = r.ratio >= r.lower * (1.0 - slack) && r.ratio <= r.upper * (1.0 + slack);
        out.push_back(r);
    }
    return out;
}

// --------------------------------------------------------------------------
// projections and the tail bound
// --------------------------------------------------------------------------

namespace detail {

// integral of cos(w x + c) over [lo, hi]
inline double cos_integral(double w, double c, double lo, double hi) {
    if (w == 0.0) return std::cos(c) * (hi - lo);
    return (std::sin(w * hi + c) - std::sin(w * lo + c)) / w;
}

}  // namespace detail

// g_i = int f_i(x) g(x) p(x) dx by exact per-region quadrature of sinusoid
// products (no sampling error).
inline double project_target(const TargetSpec& target, const EigenMode1D& m,
                             const PiecewiseDensity1D& d) {
    if (target.is_zonal()) throw std::invalid_argument("project_target: 1d targets only");
    double total = 0.0;
    for (std::size_t j = 0; j < d.regions(); ++j) {
        double pj = d.values()[j];
        double lo = m.left[j], hi = m.right[j];
        double w = m.omega[j], b = m.phase[j], a = m.amplitude[j];
        for (const auto& h : target.harmonics) {
            // a cos(wx+b) * A cos(kx+phi) = aA/2 [cos((w-k)x + b-phi) + cos((w+k)x + b+phi)]
            double s = 0.5 * (detail::cos_integral(w - h.freq, b - h.phase, lo, hi) +
                              detail::cos_integral(w + h.freq, b + h.phase, lo, hi));
            total += pj * a * h.amplitude * s;
        }
    }
    return total;
}

inline std::vector<double> project_target(const TargetSpec& target,
                                          std::span<const EigenMode1D> modes,
                                          const PiecewiseDensity1D& d) {
    std::vector<double> out;
    out.reserve(modes.size());
    for (const auto& m : modes) out.push_back(project_target(target, m, d));
    return out;
}

struct TailBoundReport {
    double kappa = 0.0;
    double eps = 0.0;
    std::size_t n_k = 0;          // index from the bound formula
    double freq_branch = 0.0;     // 4 Z kappa / sqrt(p*)
    double eps_branch = 0.0;      // 128 B^2 Z^2 / (9 eps^2 p*)
    double B = 0.0;               // max over basis modes of sum_j a_j p_j
    double tail_mass = 0.0;       // sum of g_i^2 beyond n_k
    double total_mass = 0.0;      // |g|^2 under the p-weighted norm
};

// Tail bound n_k > max{ 4 Z kappa / sqrt(p*), 128 B^2 Z^2 / (9 eps^2 p*) },
// evaluated against the quadrature eigenbasis of the density-weighted
// operator.  B is measured as the largest density-weighted amplitude sum
// over the leading modes of the basis.
inline TailBoundReport tail_index(double kappa, double eps, const PiecewiseDensity1D& d,
                                  const QuadratureEigensystem& basis,
                                  const TargetSpec& target) {
    if (eps <= 0.0) throw std::invalid_argument("tail_index: eps must be > 0");
    const double Z = z_const(d);
    const double pstar = d.min_density();
    TailBoundReport rep;
    rep.kappa = kappa;
    rep.eps = eps;
    rep.freq_branch = 4.0 * Z * kappa / std::sqrt(pstar);

    // amplitude estimate per region: sqrt(2) * rms of the eigenfunction there
    const std::size_t window = std::min<std::size_t>(basis.k, 512);
    double B = 0.0;
    for (std::size_t i = 0; i < window; ++i) {
        std::vector<double> f = basis.eigenfunction(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < d.regions(); ++j) {
            double lo = d.region_left(j), hi = d.region_right(j);
            double ms = 0.0;
            std::size_t cnt = 0;
            for (std::size_t gidx = 0; gidx < basis.n; ++gidx) {
                double x = basis.grid[gidx];
                double u = x < lo ? x + kTwoPi : x;
                if (u >= lo && u < hi) {
                    ms += f[gidx] * f[gidx];
                    ++cnt;
                }
            }
            double amp = cnt > 0 ? std::sqrt(2.0 * ms / static_cast<double>(cnt)) : 0.0;
            acc += amp * d.values()[j];
        }
        B = std::max(B, acc);
    }
    rep.B = B;
    rep.eps_branch = 128.0 * B * B * Z * Z / (9.0 * eps * eps * pstar);
    rep.n_k = static_cast<std::size_t>(std::ceil(std::max(rep.freq_branch, rep.eps_branch)));

    if (basis.k <= rep.n_k)
        throw std::invalid_argument("tail_index: basis holds " + std::to_string(basis.k) +
                                    " modes but the bound needs index " + std::to_string(rep.n_k) +
                                    "; request a larger mode budget");

    std::vector<double> g(basis.n);
    for (std::size_t j = 0; j < basis.n; ++j) g[j] = target.eval(basis.grid[j]);
    rep.total_mass = basis.total_mass(g);
    double head = 0.0;
    for (std::size_t i = 0; i < rep.n_k; ++i) {
        double gi = basis.project(i, g);
        head += gi * gi;
    }
    rep.tail_mass = std::max(0.0, rep.total_mass - head);
    return rep;
}

// total accumulated phase of mode q around the circle; equals 2 pi q
inline double total_phase(const EigenMode1D& m) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m.omega.size(); ++j)
        acc += m.omega[j] * (m.right[j] - m.left[j]);
    return acc;
}

// p-weighted inner product of two modes by exact per-region quadrature
inline double mode_inner_p(const EigenMode1D& f, const EigenMode1D& g,
                           const PiecewiseDensity1D& d) {
    double total = 0.0;
    for (std::size_t j = 0; j < d.regions(); ++j) {
        double pj = d.values()[j];
        double lo = f.left[j], hi = f.right[j];
        double s = 0.5 * (detail::cos_integral(f.omega[j] - g.omega[j], f.phase[j] - g.phase[j],
                                               lo, hi) +
                          detail::cos_integral(f.omega[j] + g.omega[j], f.phase[j] + g.phase[j],
                                               lo, hi));
        total += pj * f.amplitude[j] * g.amplitude[j] * s;
    }
    return total;
}

}  // namespace ntkspec
