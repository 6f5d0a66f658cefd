#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "ntkspec/common.hpp"
#include "ntkspec/rng.hpp"

namespace ntkspec {

// Dense symmetric eigensolvers.
//
// eig_sym_full:  Householder reduction to tridiagonal form followed by
//                implicit-shift QL, optionally accumulating eigenvectors.
// lanczos_topk:  Lanczos with full reorthogonalization and deflated restarts
//                for the leading part of the spectrum of a large matrix.

namespace detail {

inline double pythag(double a, double b) { return std::hypot(a, b); }

// reduce symmetric a (n x n, row-major, destroyed) to tridiagonal d/e.
// If accumulate, a is overwritten with the orthogonal transform Q such that
// Q^T A Q = T;  otherwise a's contents are scratch afterwards.
inline void householder_tridiag(std::vector<double>& a, std::size_t n,
                                std::vector<double>& d, std::vector<double>& e,
                                bool accumulate) {
    d.assign(n, 0.0);
    e.assign(n, 0.0);
    auto A = [&](std::size_t i, std::size_t j) -> double& { return a[i * n + j]; };

    for (std::size_t i = n - 1; i >= 1; --i) {
        std::size_t l = i - 1;
        double h = 0.0, scale = 0.0;
        if (l > 0) {
            for (std::size_t k = 0; k <= l; ++k) scale += std::abs(A(i, k));
            if (scale == 0.0) {
                e[i] = A(i, l);
            } else {
                for (std::size_t k = 0; k <= l; ++k) {
                    A(i, k) /= scale;
                    h += A(i, k) * A(i, k);
                }
                double f = A(i, l);
                double g = (f >= 0.0) ? -std::sqrt(h) : std::sqrt(h);
                e[i] = scale * g;
                h -= f * g;
                A(i, l) = f - g;
                f = 0.0;
                for (std::size_t j = 0; j <= l; ++j) {
                    if (accumulate) A(j, i) = A(i, j) / h;
                    g = 0.0;
                    for (std::size_t k = 0; k <= j; ++k) g += A(j, k) * A(i, k);
                    for (std::size_t k = j + 1; k <= l; ++k) g += A(k, j) * A(i, k);
                    e[j] = g / h;
                    f += e[j] * A(i, j);
                }
                double hh = f / (h + h);
                for (std::size_t j = 0; j <= l; ++j) {
                    f = A(i, j);
                    e[j] = g = e[j] - hh * f;
                    for (std::size_t k = 0; k <= j; ++k)
                        A(j, k) -= f * e[k] + g * A(i, k);
                }
            }
        } else {
            e[i] = A(i, l);
        }
        d[i] = h;
    }
    if (accumulate) d[0] = 0.0;
    e[0] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (accumulate) {
            if (d[i] != 0.0) {
                for (std::size_t j = 0; j < i; ++j) {
                    double g = 0.0;
                    for (std::size_t k = 0; k < i; ++k) g += A(i, k) * A(k, j);
                    for (std::size_t k = 0; k < i; ++k) A(k, j) -= g * A(k, i);
                }
            }
            d[i] = A(i, i);
            A(i, i) = 1.0;
            for (std::size_t j = 0; j < i; ++j) A(j, i) = A(i, j) = 0.0;
        } else {
            d[i] = A(i, i);
        }
    }
}

// implicit-shift QL on a tridiagonal matrix (d diagonal, e subdiagonal with
// e[0] unused).  If z is non-null (n x n row-major), plane rotations are
// accumulated into its columns.
inline void tridiag_ql(std::vector<double>& d, std::vector<double>& e, std::size_t n,
                       std::vector<double>* z, int max_sweeps = 50) {
    if (n == 0) return;
    for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
    e[n - 1] = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
        int iter = 0;
        std::size_t m;
        do {
            for (m = l; m + 1 < n; ++m) {
                double dd = std::abs(d[m]) + std::abs(d[m + 1]);
                if (std::abs(e[m]) <= std::numeric_limits<double>::epsilon() * dd) break;
            }
            if (m != l) {
                if (iter++ == max_sweeps)
                    throw numerical_error("tridiag_ql: no convergence after " +
                                          std::to_string(max_sweeps) + " sweeps, residual " +
                                          std::to_string(std::abs(e[l])));
                double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                double r = pythag(g, 1.0);
                g = d[m] - d[l] + e[l] / (g + (g >= 0.0 ? std::abs(r) : -std::abs(r)));
                double s = 1.0, c = 1.0, p = 0.0;
                for (std::size_t i = m; i-- > l;) {
                    double f = s * e[i];
                    double b = c * e[i];
                    r = pythag(f, g);
                    e[i + 1] = r;
                    if (r == 0.0) {
                        d[i + 1] -= p;
                        e[m] = 0.0;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = d[i + 1] - p;
                    r = (d[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    d[i + 1] = g + p;
                    g = c * r - b;
                    if (z) {
                        double* zi = z->data();
                        for (std::size_t k = 0; k < n; ++k) {
                            double f2 = zi[k * n + i + 1];
                            zi[k * n + i + 1] = s * zi[k * n + i] + c * f2;
                            zi[k * n + i] = c * zi[k * n + i] - s * f2;
                        }
                    }
                }
                if (r == 0.0 && m - l > 1) continue;
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        } while (m != l);
    }
}

}  // namespace detail

struct EigResult {
    std::vector<double> values;   // descending
    std::vector<double> vectors;  // row-major n x k; column j is eigenvector j (empty if not requested)
    std::size_t n = 0;
    std::size_t k = 0;
};

// full spectrum of a symmetric matrix (row-major, n x n); `a` is consumed
inline EigResult eig_sym_full(std::vector<double> a, std::size_t n, bool want_vectors = true) {
    std::vector<double> d, e;
    detail::householder_tridiag(a, n, d, e, want_vectors);
    detail::tridiag_ql(d, e, n, want_vectors ? &a : nullptr);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return d[i] > d[j]; });

    EigResult r;
    r.n = n;
    r.k = n;
    r.values.resize(n);
    for (std::size_t j = 0; j < n; ++j) r.values[j] = d[order[j]];
    if (want_vectors) {
        r.vectors.resize(n * n);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < n; ++i) r.vectors[i * n + j] = a[i * n + order[j]];
    }
    return r;
}

// y = A x for full symmetric row-major storage
inline void sym_matvec(std::span<const double> a, std::size_t n, std::span<const double> x,
                       std::span<double> y) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = a.data() + i * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
}

// Leading k eigenpairs of a symmetric PSD-ish matrix by Lanczos with full
// reorthogonalization.  Degenerate and clustered eigenvalues are recovered by
// deflated restarts: each restart draws a fresh start vector orthogonal to
// everything already converged.
inline EigResult lanczos_topk(std::span<const double> a, std::size_t n, std::size_t k,
                              std::uint64_t seed = 12345, double tol = 1e-10,
                              std::size_t max_restarts = 8) {
    k = std::min(k, n);
    if (k == 0) return {};
    if (n <= 96 || k > n / 2) {
        EigResult full = eig_sym_full(std::vector<double>(a.begin(), a.end()), n, true);
        full.values.resize(k);
        std::vector<double> vecs(n * k);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < k; ++j) vecs[i * k + j] = full.vectors[i * n + j];
        full.vectors = std::move(vecs);
        full.k = k;
        return full;
    }

    std::vector<std::vector<double>> conv_vecs;  // each length n
    std::vector<double> conv_vals;
    CounterRng rng(seed, 0xeebee5);

    auto dot = [n](const double* x, const double* y) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
        return s;
    };

    for (std::size_t restart = 0; restart < max_restarts && conv_vals.size() < k; ++restart) {
        const std::size_t want = k - conv_vals.size();
        const std::size_t m = std::min(n - conv_vals.size(), std::max<std::size_t>(2 * want + 30, 40));
        std::vector<std::vector<double>> basis;
        basis.reserve(m);
        std::vector<double> alpha, beta;

        std::vector<double> v(n), w(n);
        for (auto& x : v) x = rng.next_gaussian();
        // orthogonalize against converged directions, normalize
        auto orth_all = [&](std::vector<double>& u) {
            for (int pass = 0; pass < 2; ++pass) {
                for (const auto& c : conv_vecs) {
                    double p = dot(u.data(), c.data());
                    for (std::size_t i = 0; i < n; ++i) u[i] -= p * c[i];
                }
                for (const auto& b : basis) {
                    double p = dot(u.data(), b.data());
                    for (std::size_t i = 0; i < n; ++i) u[i] -= p * b[i];
                }
            }
        };
        orth_all(v);
        double nv = std::sqrt(dot(v.data(), v.data()));
        if (nv < 1e-300) continue;
        for (auto& x : v) x /= nv;

        for (std::size_t j = 0; j < m; ++j) {
            basis.push_back(v);
            sym_matvec(a, n, basis.back(), w);
            double aj = dot(w.data(), basis.back().data());
            alpha.push_back(aj);
            for (std::size_t i = 0; i < n; ++i) w[i] -= aj * basis.back()[i];
            if (j > 0) {
                const auto& prev = basis[j - 1];
                for (std::size_t i = 0; i < n; ++i) w[i] -= beta.back() * prev[i];
            }
            orth_all(w);
            double bj = std::sqrt(dot(w.data(), w.data()));
            if (j + 1 < m) {
                if (bj < 1e-13) break;  // invariant subspace exhausted
                beta.push_back(bj);
                v = w;
                for (auto& x : v) x /= bj;
            } else {
                beta.push_back(bj);
            }
        }

        const std::size_t mm = basis.size();
        if (mm == 0) continue;
        std::vector<double> d(alpha.begin(), alpha.begin() + mm);
        std::vector<double> e(mm, 0.0);
        for (std::size_t i = 1; i < mm; ++i) e[i] = beta[i - 1];
        std::vector<double> s(mm * mm, 0.0);
        for (std::size_t i = 0; i < mm; ++i) s[i * mm + i] = 1.0;
        detail::tridiag_ql(d, e, mm, &s);

        std::vector<std::size_t> order(mm);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return d[i] > d[j]; });

        const double last_beta = beta.empty() ? 0.0 : std::abs(beta.back());
        const double scale = std::max(1.0, std::abs(d[order[0]]));
        for (std::size_t jj = 0; jj < mm && conv_vals.size() < k; ++jj) {
            std::size_t col = order[jj];
            double resid = last_beta * std::abs(s[(mm - 1) * mm + col]);
            if (resid > tol * scale && mm < n - conv_vals.size()) continue;  // unconverged Ritz pair
            std::vector<double> y(n, 0.0);
            for (std::size_t b = 0; b < mm; ++b) {
                double c = s[b * mm + col];
                if (c == 0.0) continue;
                const auto& vb = basis[b];
                for (std::size_t i = 0; i < n; ++i) y[i] += c * vb[i];
            }
            // re-orthogonalize against accepted vectors (guards clustered pairs)
            for (const auto& c : conv_vecs) {
                double p = dot(y.data(), c.data());
                for (std::size_t i = 0; i < n; ++i) y[i] -= p * c[i];
            }
            double ny = std::sqrt(dot(y.data(), y.data()));
            if (ny < 1e-8) continue;
            for (auto& x : y) x /= ny;
            conv_vecs.push_back(std::move(y));
            conv_vals.push_back(d[col]);
        }
    }

    if (conv_vals.size() < k)
        throw numerical_error("lanczos_topk: only " + std::to_string(conv_vals.size()) + " of " +
                              std::to_string(k) + " eigenpairs converged");

    std::vector<std::size_t> order(conv_vals.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return conv_vals[i] > conv_vals[j]; });

    EigResult r;
    r.n = n;
    r.k = k;
    r.values.resize(k);
    r.vectors.resize(n * k);
    for (std::size_t j = 0; j < k; ++j) {
        r.values[j] = conv_vals[order[j]];
        const auto& vj = conv_vecs[order[j]];
        for (std::size_t i = 0; i < n; ++i) r.vectors[i * k + j] = vj[i];
    }
    return r;
}

}  // namespace ntkspec
