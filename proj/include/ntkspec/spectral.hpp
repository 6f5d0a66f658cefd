#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "ntkspec/common.hpp"
#include "ntkspec/eig.hpp"
#include "ntkspec/fft.hpp"
#include "ntkspec/geometry.hpp"
#include "ntkspec/kernels.hpp"

namespace ntkspec {

// --------------------------------------------------------------------------
// Gram matrices
// --------------------------------------------------------------------------

struct GramMatrix {
    std::size_t n = 0;
    std::vector<double> a;  // row-major n x n, symmetric

    double at(std::size_t i, std::size_t j) const { return a[i * n + j]; }
};

inline constexpr std::size_t kDefaultGramBudgetBytes = 3'200'000'000;  // fits desk memory

inline void check_gram_budget(std::size_t n, std::size_t budget_bytes) {
    if (n > 50'000) throw budget_error("assemble_gram: n > 50000 unsupported");
    std::size_t required = 8 * n * n;
    if (required > budget_bytes)
        throw budget_error("assemble_gram: requires " + std::to_string(required) +
                           " bytes (budget " + std::to_string(budget_bytes) + ")");
}

namespace detail {

template <class RhoFn>
GramMatrix assemble_gram_impl(std::size_t n, const KernelSpec& spec, RhoFn&& rho,
                              std::size_t budget_bytes, unsigned threads) {
    check_gram_budget(n, budget_bytes);
    GramMatrix g;
    g.n = n;
    g.a.resize(n * n);
    auto fill_rows = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            for (std::size_t j = 0; j <= i; ++j) g.a[i * n + j] = kernel_eval(spec, rho(i, j));
        }
    };
    if (threads <= 1 || n < 512) {
        fill_rows(0, n);
    } else {
        // disjoint row blocks; every entry written exactly once, so the result
        // is identical to the serial fill
        std::vector<std::thread> pool;
        std::size_t chunk = (n + threads - 1) / threads;
        for (unsigned t = 0; t < threads; ++t) {
            std::size_t lo = std::min<std::size_t>(t * chunk, n);
            std::size_t hi = std::min<std::size_t>(lo + chunk, n);
            if (lo < hi) pool.emplace_back(fill_rows, lo, hi);
        }
        for (auto& th : pool) th.join();
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) g.a[i * n + j] = g.a[j * n + i];
    return g;
}

}  // namespace detail

inline GramMatrix assemble_gram(std::span<const double> angles, const KernelSpec& spec,
                                std::size_t budget_bytes = kDefaultGramBudgetBytes,
                                unsigned threads = 1) {
    const std::size_t n = angles.size();
    std::vector<double> c(n), s(n);
    for (std::size_t i = 0; i < n; ++i) {
        c[i] = std::cos(angles[i]);
        s[i] = std::sin(angles[i]);
    }
    return detail::assemble_gram_impl(
        n, spec, [&](std::size_t i, std::size_t j) { return c[i] * c[j] + s[i] * s[j]; },
        budget_bytes, threads);
}

inline GramMatrix assemble_gram(std::span<const Vec<3>> pts, const KernelSpec& spec,
                                std::size_t budget_bytes = kDefaultGramBudgetBytes,
                                unsigned threads = 1) {
    return detail::assemble_gram_impl(
        pts.size(), spec, [&](std::size_t i, std::size_t j) { return dot<3>(pts[i], pts[j]); },
        budget_bytes, threads);
}

// --------------------------------------------------------------------------
// spectra
// --------------------------------------------------------------------------

struct GramSpectrum {
    std::size_t n = 0;  // matrix dimension
    std::size_t k = 0;  // number of eigenpairs held
    std::vector<double> eigenvalues;           // descending
    std::vector<double> vectors;               // row-major n x k
    std::vector<double> operator_eigenvalues;  // eigenvalues / n

    double vec(std::size_t i, std::size_t j) const { return vectors[i * k + j]; }
    std::vector<double> eigenvector(std::size_t j) const {
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = vec(i, j);
        return v;
    }
};

inline std::vector<double> operator_eigenvalues(std::span<const double> eigenvalues,
                                                std::size_t n) {
    std::vector<double> out(eigenvalues.begin(), eigenvalues.end());
    for (auto& x : out) x /= static_cast<double>(n);
    return out;
}

inline GramSpectrum eig_sym(const GramMatrix& g) {
    EigResult r = eig_sym_full(g.a, g.n, true);
    GramSpectrum s;
    s.n = g.n;
    s.k = r.k;
    s.eigenvalues = std::move(r.values);
    s.vectors = std::move(r.vectors);
    s.operator_eigenvalues = operator_eigenvalues(s.eigenvalues, s.n);
    return s;
}

inline GramSpectrum eig_top(const GramMatrix& g, std::size_t k, std::uint64_t seed = 12345) {
    EigResult r = lanczos_topk(g.a, g.n, k, seed);
    GramSpectrum s;
    s.n = g.n;
    s.k = r.k;
    s.eigenvalues = std::move(r.values);
    s.vectors = std::move(r.vectors);
    s.operator_eigenvalues = operator_eigenvalues(s.eigenvalues, s.n);
    return s;
}

// --------------------------------------------------------------------------
// eigenvector frequency analysis
// --------------------------------------------------------------------------

struct LocalFrequency {
    double cycles_per_circle = 0.0;
    double bin_width = 0.0;  // one periodogram bin, in cycles per circle
    bool confident = false;
};

// Dominant frequency of eigenvector values restricted to the arc [lo, hi):
// values are interpolated onto a uniform angular grid, Hann-windowed, and the
// zero-padded periodogram peak is refined by parabolic interpolation of
// log-power, then rescaled from arc length to cycles per full circle.
inline LocalFrequency local_frequency(std::span<const double> values,
                                      std::span<const double> angles, double lo, double hi) {
    if (values.size() != angles.size()) throw std::invalid_argument("local_frequency: size mismatch");
    std::vector<std::pair<double, double>> pts;
    pts.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        double a = angles[i];
        if (a >= lo && a < hi) pts.emplace_back(a, values[i]);
    }
    if (pts.size() < 32)
        throw std::invalid_argument("local_frequency: region holds " + std::to_string(pts.size()) +
                                    " points, need >= 32");
    std::sort(pts.begin(), pts.end());

    const std::size_t grid = 256;
    const std::size_t padded = 4096;
    const double len = hi - lo;
    std::vector<double> u(padded, 0.0);
    double mean = 0.0;
    {
        std::size_t seg = 0;
        std::vector<double> raw(grid);
        for (std::size_t gidx = 0; gidx < grid; ++gidx) {
            double t = lo + len * (static_cast<double>(gidx) + 0.5) / static_cast<double>(grid);
            while (seg + 1 < pts.size() && pts[seg + 1].first < t) ++seg;
            double v;
            if (t <= pts.front().first) v = pts.front().second;
            else if (t >= pts.back().first) v = pts.back().second;
            else {
                auto [x0, y0] = pts[seg];
                auto [x1, y1] = pts[seg + 1];
                v = x1 > x0 ? y0 + (y1 - y0) * (t - x0) / (x1 - x0) : y0;
            }
            raw[gidx] = v;
            mean += v;
        }
        mean /= static_cast<double>(grid);
        for (std::size_t gidx = 0; gidx < grid; ++gidx) {
            double w = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(gidx) /
                                            static_cast<double>(grid - 1));
            u[gidx] = (raw[gidx] - mean) * w;
        }
    }

    std::vector<double> power = periodogram(u);
    std::size_t peak = 1;
    for (std::size_t b = 1; b < power.size(); ++b)
        if (power[b] > power[peak]) peak = b;

    // peak-to-noise gate: compare against the median of the nonzero bins
    std::vector<double> sorted(power.begin() + 1, power.end());
    std::sort(sorted.begin(), sorted.end());
    double noise = sorted[sorted.size() / 2];

    LocalFrequency out;
    out.bin_width = kTwoPi / len;  // natural resolution of the window
    if (noise <= 0.0) noise = 1e-300;
    if (power[peak] / noise < 3.0 || power[peak] == 0.0) {
        out.cycles_per_circle = 0.0;
        out.confident = false;
        return out;
    }

    double b = static_cast<double>(peak);
    if (peak > 0 && peak + 1 < power.size() && power[peak - 1] > 0 && power[peak + 1] > 0) {
        double l0 = std::log(power[peak - 1]);
        double l1 = std::log(power[peak]);
        double l2 = std::log(power[peak + 1]);
        double denom = l0 - 2.0 * l1 + l2;
        if (denom < 0.0) b += 0.5 * (l0 - l2) / denom;
    }
    // padded bin b <-> b * grid / (padded * len) cycles per radian
    double cycles_per_rad = b * static_cast<double>(grid) / (static_cast<double>(padded) * len);
    out.cycles_per_circle = kTwoPi * cycles_per_rad;
    out.confident = true;
    return out;
}

// --------------------------------------------------------------------------
// profile eigenvalues, grouping, slopes
// --------------------------------------------------------------------------

// Operator eigenvalues of the kernel under the uniform density on S^1:
// lambda_q = (1/2pi) * int k(u) cos(qu) du, computed from the FFT of the
// kernel profile.
inline std::vector<double> fourier_eigenvalues(const KernelSpec& spec, std::size_t grid_size) {
    if (!is_power_of_two(grid_size) || grid_size < 1024)
        throw std::invalid_argument("fourier_eigenvalues: grid must be a power of two >= 1024");
    std::vector<double> prof = kernel_profile(spec, grid_size);
    // profile starts at theta = -pi; rotate so samples start at theta = 0
    std::rotate(prof.begin(), prof.begin() + static_cast<std::ptrdiff_t>(grid_size / 2), prof.end());
    return real_dft_coeffs(prof);
}

struct FreqGroup {
    int freq = 0;
    double mean_eigenvalue = 0.0;
    std::size_t block_size = 0;
};

// Consecutive descending eigenvalues grouped into harmonic-multiplicity
// blocks: sizes 1,2,2,... on S^1 and 1,3,5,... on S^2.  A trailing partial
// block is dropped.
inline std::vector<FreqGroup> group_by_multiplicity(std::span<const double> eigenvalues, int d) {
    if (d != 2 && d != 3) throw std::invalid_argument("group_by_multiplicity: d must be 2 or 3");
    std::vector<FreqGroup> out;
    std::size_t idx = 0;
    for (int freq = 0;; ++freq) {
        std::size_t mult = d == 2 ? (freq == 0 ? 1 : 2) : static_cast<std::size_t>(2 * freq + 1);
        if (idx + mult > eigenvalues.size()) break;
        double s = 0.0;
        for (std::size_t i = 0; i < mult; ++i) s += eigenvalues[idx + i];
        out.push_back({freq, s / static_cast<double>(mult), mult});
        idx += mult;
    }
    return out;
}

// least-squares slope of log(eigenvalue) against log(freq) for freq >= kmin;
// nonpositive eigenvalues are dropped
inline double slope_fit(std::span<const double> freqs, std::span<const double> eigenvalues,
                        double kmin) {
    if (freqs.size() != eigenvalues.size()) throw std::invalid_argument("slope_fit: size mismatch");
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        if (freqs[i] >= kmin && freqs[i] > 0.0 && eigenvalues[i] > 0.0) {
            lx.push_back(std::log(freqs[i]));
            ly.push_back(std::log(eigenvalues[i]));
        }
    }
    if (lx.size() < 10)
        throw std::invalid_argument("slope_fit: only " + std::to_string(lx.size()) +
                                    " usable points, need >= 10");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= static_cast<double>(lx.size());
    my /= static_cast<double>(lx.size());
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    return sxy / sxx;
}

// --------------------------------------------------------------------------
// quadrature eigensystem (symmetrized kernel on a uniform grid)
// --------------------------------------------------------------------------

// Discretization of the density-weighted kernel operator: eigensystem of
// B_ij = (2pi/N) sqrt(p_i) k(x_i - x_j) sqrt(p_j) on a uniform angular grid.
// Eigenvalues approximate the integral-operator eigenvalues directly;
// eigenfunction values are recovered with unit L2(p dx) norm.
struct QuadratureEigensystem {
    std::vector<double> grid;     // angles x_j
    std::vector<double> sqrtp;    // sqrt(p(x_j))
    std::vector<double> values;   // operator eigenvalues, descending (k of them)
    std::vector<double> vectors;  // row-major N x k, orthonormal discrete vectors u
    std::size_t n = 0, k = 0;
    double weight = 0.0;  // quadrature weight 2pi/N

    // eigenfunction i evaluated on the grid, unit L2(p dx) norm
    std::vector<double> eigenfunction(std::size_t i) const {
        std::vector<double> f(n);
        for (std::size_t j = 0; j < n; ++j) {
            double denom = sqrtp[j] * std::sqrt(weight);
            f[j] = denom > 0.0 ? vectors[j * k + i] / denom : 0.0;
        }
        return f;
    }

    // projection <f_i, g>_p for a target sampled on the grid
    double project(std::size_t i, std::span<const double> g) const {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += vectors[j * k + i] * sqrtp[j] * g[j];
        return s * std::sqrt(weight);
    }

    // total L2(p dx) mass of a grid-sampled target
    double total_mass(std::span<const double> g) const {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += g[j] * g[j] * sqrtp[j] * sqrtp[j];
        return s * weight;
    }
};

template <class DensityFn>
QuadratureEigensystem quadrature_eigensystem(DensityFn&& density, const KernelSpec& spec,
                                             std::size_t grid_n, std::size_t top_k = 0) {
    QuadratureEigensystem q;
    q.n = grid_n;
    q.weight = kTwoPi / static_cast<double>(grid_n);
    q.grid.resize(grid_n);
    q.sqrtp.resize(grid_n);
    for (std::size_t j = 0; j < grid_n; ++j) {
        q.grid[j] = -kPi + kTwoPi * (static_cast<double>(j) + 0.5) / static_cast<double>(grid_n);
        q.sqrtp[j] = std::sqrt(density(q.grid[j]));
    }
    // kernel values depend on the angle difference only; precompute one row
    std::vector<double> krow(grid_n);
    for (std::size_t d = 0; d < grid_n; ++d)
        krow[d] = kernel_eval(spec, std::cos(q.weight * static_cast<double>(d)));
    std::vector<double> B(grid_n * grid_n);
    for (std::size_t i = 0; i < grid_n; ++i)
        for (std::size_t j = 0; j < grid_n; ++j) {
            std::size_t d = i > j ? i - j : j - i;
            B[i * grid_n + j] = q.weight * q.sqrtp[i] * krow[d] * q.sqrtp[j];
        }
    if (top_k == 0 || top_k >= grid_n / 2) {
        EigResult r = eig_sym_full(std::move(B), grid_n, true);
        std::size_t keep = top_k == 0 ? grid_n : std::min(top_k, grid_n);
        q.k = keep;
        q.values.assign(r.values.begin(), r.values.begin() + static_cast<std::ptrdiff_t>(keep));
        q.vectors.resize(grid_n * keep);
        for (std::size_t i = 0; i < grid_n; ++i)
            for (std::size_t j = 0; j < keep; ++j) q.vectors[i * keep + j] = r.vectors[i * grid_n + j];
    } else {
        EigResult r = lanczos_topk(B, grid_n, top_k);
        q.k = r.k;
        q.values = std::move(r.values);
        q.vectors = std::move(r.vectors);
    }
    return q;
}

}  // namespace ntkspec
