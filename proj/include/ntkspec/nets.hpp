#pragma once

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ntkspec/common.hpp"
#include "ntkspec/geometry.hpp"
#include "ntkspec/rng.hpp"

namespace ntkspec {

// Finite-width networks under gradient descent: a two-layer ReLU net with
// bias (first layer trained, output signs fixed) and a deep fully-connected
// ReLU net without bias (all layers trained unless the first/last are
// pinned).  ReLU derivative at 0 is taken as 0.

struct Dataset {
    int dim = 0;                       // input dimension (2 on S^1, 3 on S^2)
    std::size_t n = 0;
    std::vector<double> coords;        // dim x n, coordinate-major: coords[c*n + i]
    std::vector<double> y;
    std::vector<std::size_t> region;   // label per point
    std::size_t nregions = 1;

    static Dataset from_angles(std::span<const AngleSample> pts, const TargetSpec& target,
                               std::size_t nregions) {
        Dataset ds;
        ds.dim = 2;
        ds.n = pts.size();
        ds.nregions = nregions;
        ds.coords.resize(2 * ds.n);
        ds.y.resize(ds.n);
        ds.region.resize(ds.n);
        for (std::size_t i = 0; i < ds.n; ++i) {
            ds.coords[i] = std::cos(pts[i].angle);
            ds.coords[ds.n + i] = std::sin(pts[i].angle);
            ds.y[i] = target.eval(pts[i].angle);
            ds.region[i] = pts[i].region;
        }
        return ds;
    }

    static Dataset from_surface(std::span<const SurfaceSample> pts, const TargetSpec& target,
                                std::size_t nregions) {
        Dataset ds;
        ds.dim = 3;
        ds.n = pts.size();
        ds.nregions = nregions;
        ds.coords.resize(3 * ds.n);
        ds.y.resize(ds.n);
        ds.region.resize(ds.n);
        for (std::size_t i = 0; i < ds.n; ++i) {
            for (int c = 0; c < 3; ++c) ds.coords[c * ds.n + i] = pts[i].x[c];
            ds.y[i] = target.eval(pts[i].x);
            ds.region[i] = pts[i].region;
        }
        return ds;
    }
};

// --------------------------------------------------------------------------
// two-layer network with bias
// --------------------------------------------------------------------------

struct TwoLayerNet {
    std::size_t m = 0;
    int d = 0;                 // input dimension; unit r has weights W[r*(d+1) .. r*(d+1)+d-1] and bias at +d
    std::vector<double> W;     // m x (d+1)
    std::vector<double> a;     // fixed output signs in {-1, +1}
    double tau = 0.0;

    int cols() const { return d + 1; }
};

// w ~ N(0, tau^2); bias either 0 (the experimental setup) or N(0, tau^2)
inline TwoLayerNet init_two_layer(std::size_t m, int d, double tau, std::uint64_t seed,
                                  bool zero_bias = true) {
    if (m < 1) throw std::invalid_argument("init_two_layer: m >= 1 required");
    TwoLayerNet net;
    net.m = m;
    net.d = d;
    net.tau = tau;
    net.W.resize(m * static_cast<std::size_t>(d + 1));
    net.a.resize(m);
    CounterRng rng(seed, 0x2fee7);
    for (std::size_t r = 0; r < m; ++r) {
        for (int c = 0; c < d; ++c) net.W[r * (d + 1) + c] = tau * rng.next_gaussian();
        net.W[r * (d + 1) + d] = zero_bias ? 0.0 : tau * rng.next_gaussian();
        net.a[r] = rng.next_sign();
    }
    return net;
}

inline double forward(const TwoLayerNet& net, std::span<const double> x) {
    if (static_cast<int>(x.size()) != net.d) throw std::invalid_argument("forward: dim mismatch");
    const double sq = 1.0 / std::sqrt(static_cast<double>(net.m));
    double out = 0.0;
    for (std::size_t r = 0; r < net.m; ++r) {
        const double* w = net.W.data() + r * net.cols();
        double z = w[net.d];
        for (int c = 0; c < net.d; ++c) z += w[c] * x[c];
        if (z > 0.0) out += net.a[r] * z;
    }
    return out * sq;
}

// batched forward over a dataset
inline void forward_batch(const TwoLayerNet& net, const Dataset& ds, std::span<double> u) {
    const std::size_t n = ds.n;
    const double sq = 1.0 / std::sqrt(static_cast<double>(net.m));
    std::fill(u.begin(), u.end(), 0.0);
    std::vector<double> z(n);
    for (std::size_t r = 0; r < net.m; ++r) {
        const double* w = net.W.data() + r * net.cols();
        const double b = w[net.d];
        for (std::size_t i = 0; i < n; ++i) z[i] = b;
        for (int c = 0; c < net.d; ++c) {
            const double wc = w[c];
            const double* xc = ds.coords.data() + static_cast<std::size_t>(c) * n;
            for (std::size_t i = 0; i < n; ++i) z[i] += wc * xc[i];
        }
        const double ar = net.a[r] * sq;
        for (std::size_t i = 0; i < n; ++i)
            if (z[i] > 0.0) u[i] += ar * z[i];
    }
}

// gradient of Phi = 1/2 sum (y - u)^2 with respect to (W, b), flattened like W
inline std::vector<double> grad(const TwoLayerNet& net, const Dataset& ds) {
    const std::size_t n = ds.n;
    std::vector<double> u(n);
    forward_batch(net, ds, u);
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = u[i] - ds.y[i];
    const double sq = 1.0 / std::sqrt(static_cast<double>(net.m));
    std::vector<double> g(net.W.size(), 0.0);
    for (std::size_t unit = 0; unit < net.m; ++unit) {
        const double* w = net.W.data() + unit * net.cols();
        double* gu = g.data() + unit * net.cols();
        const double scale = net.a[unit] * sq;
        for (std::size_t i = 0; i < n; ++i) {
            double z = w[net.d];
            for (int c = 0; c < net.d; ++c) z += w[c] * ds.coords[c * n + i];
            if (z > 0.0) {
                const double f = scale * r[i];
                for (int c = 0; c < net.d; ++c) gu[c] += f * ds.coords[c * n + i];
                gu[net.d] += f;
            }
        }
    }
    return g;
}

// --------------------------------------------------------------------------
// deep fully-connected network (no bias)
// --------------------------------------------------------------------------

struct DeepNet {
    int L = 1;                  // hidden layers; L+1 weight matrices in total
    std::vector<int> dims;      // d_0 (input), d_1..d_L, then 1
    std::vector<std::vector<double>> W;  // W[l]: dims[l+1] x dims[l], row-major
    double tau = 1.0;
    bool fix_first_last = false;

    static constexpr double c_sigma = 2.0;
};

inline DeepNet init_deep(int L, int width, int d, double tau, std::uint64_t seed,
                         bool fix_first_last = false) {
    if (L < 1 || width < 1) throw std::invalid_argument("init_deep: L >= 1, width >= 1 required");
    DeepNet net;
    net.L = L;
    net.tau = tau;
    net.fix_first_last = fix_first_last;
    net.dims.resize(L + 2);
    net.dims[0] = d;
    for (int l = 1; l <= L; ++l) net.dims[l] = width;
    net.dims[L + 1] = 1;
    CounterRng rng(seed, 0xdeeb);
    net.W.resize(L + 1);
    for (int l = 0; l <= L; ++l) {
        net.W[l].resize(static_cast<std::size_t>(net.dims[l + 1]) * net.dims[l]);
        for (auto& w : net.W[l]) w = tau * rng.next_gaussian();
    }
    return net;
}

namespace detail {

// forward pass over a batch; activations[l] holds sqrt(c/d_l) * relu(z_l)
// (size dims[l+1] x B) for l = 0..L-1 plus the raw input at index -1 handled
// separately; masks[l] stores the relu gates.
struct DeepBatch {
    std::vector<std::vector<double>> acts;   // L entries, dims[l+1] x B
    std::vector<std::vector<std::uint8_t>> masks;
    std::vector<double> out;                 // B
};

inline void deep_forward(const DeepNet& net, const double* X, std::size_t B, DeepBatch& fb) {
    const int L = net.L;
    fb.acts.resize(L);
    fb.masks.resize(L);
    const double* cur = X;
    std::size_t cur_rows = static_cast<std::size_t>(net.dims[0]);
    for (int l = 0; l < L; ++l) {
        const std::size_t rows = static_cast<std::size_t>(net.dims[l + 1]);
        fb.acts[l].assign(rows * B, 0.0);
        fb.masks[l].assign(rows * B, 0);
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(rows),
                    static_cast<int>(B), static_cast<int>(cur_rows), 1.0, net.W[l].data(),
                    static_cast<int>(cur_rows), cur, static_cast<int>(B), 0.0, fb.acts[l].data(),
                    static_cast<int>(B));
        const double scale = std::sqrt(DeepNet::c_sigma / static_cast<double>(net.dims[l + 1]));
        double* act = fb.acts[l].data();
        std::uint8_t* msk = fb.masks[l].data();
        for (std::size_t i = 0; i < rows * B; ++i) {
            if (act[i] > 0.0) {
                if (!std::isfinite(act[i]))
                    throw numerical_error("deep_forward: non-finite activation at layer " +
                                          std::to_string(l + 1));
                act[i] *= scale;
                msk[i] = 1;
            } else {
                act[i] = 0.0;
            }
        }
        cur = fb.acts[l].data();
        cur_rows = rows;
    }
    fb.out.assign(B, 0.0);
    const double* wout = net.W[L].data();
    const double* hL = fb.acts[L - 1].data();
    const std::size_t rows = static_cast<std::size_t>(net.dims[L]);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < B; ++i) fb.out[i] += wout[r] * hL[r * B + i];
}

}  // namespace detail

inline double forward(const DeepNet& net, std::span<const double> x) {
    if (static_cast<int>(x.size()) != net.dims[0])
        throw std::invalid_argument("forward: dim mismatch");
    detail::DeepBatch fb;
    detail::deep_forward(net, x.data(), 1, fb);
    return fb.out[0];
}

inline void forward_batch(const DeepNet& net, const Dataset& ds, std::span<double> u) {
    detail::DeepBatch fb;
    detail::deep_forward(net, ds.coords.data(), ds.n, fb);
    std::copy(fb.out.begin(), fb.out.end(), u.begin());
}

// gradient of Phi with respect to every weight matrix (flattened in layer order)
inline std::vector<std::vector<double>> grad(const DeepNet& net, const Dataset& ds) {
    const int L = net.L;
    const std::size_t B = ds.n;
    detail::DeepBatch fb;
    detail::deep_forward(net, ds.coords.data(), B, fb);
    std::vector<double> delta(B);
    for (std::size_t i = 0; i < B; ++i) delta[i] = fb.out[i] - ds.y[i];

    std::vector<std::vector<double>> g(L + 1);
    // output layer: dPhi/dW_out = delta . h_L^T
    g[L].assign(net.W[L].size(), 0.0);
    {
        const std::size_t rows = static_cast<std::size_t>(net.dims[L]);
        const double* hL = fb.acts[L - 1].data();
        for (std::size_t r = 0; r < rows; ++r) {
            double s = 0.0;
            for (std::size_t i = 0; i < B; ++i) s += delta[i] * hL[r * B + i];
            g[L][r] = s;
        }
    }
    // back-propagate: D = gradient with respect to h_l (dims[l+1] x B)
    std::vector<double> D(static_cast<std::size_t>(net.dims[L]) * B);
    for (std::size_t r = 0; r < static_cast<std::size_t>(net.dims[L]); ++r)
        for (std::size_t i = 0; i < B; ++i) D[r * B + i] = net.W[L][r] * delta[i];
    for (int l = L - 1; l >= 0; --l) {
        const std::size_t rows = static_cast<std::size_t>(net.dims[l + 1]);
        const double scale = std::sqrt(DeepNet::c_sigma / static_cast<double>(net.dims[l + 1]));
        // gradient with respect to pre-activation z_l
        for (std::size_t i = 0; i < rows * B; ++i)
            D[i] = fb.masks[l][i] ? D[i] * scale : 0.0;
        const double* prev = l > 0 ? fb.acts[l - 1].data() : ds.coords.data();
        const std::size_t prev_rows = static_cast<std::size_t>(net.dims[l]);
        g[l].assign(net.W[l].size(), 0.0);
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(rows),
                    static_cast<int>(prev_rows), static_cast<int>(B), 1.0, D.data(),
                    static_cast<int>(B), prev, static_cast<int>(B), 0.0, g[l].data(),
                    static_cast<int>(prev_rows));
        if (l > 0) {
            std::vector<double> Dprev(prev_rows * B, 0.0);
            cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(prev_rows),
                        static_cast<int>(B), static_cast<int>(rows), 1.0, net.W[l].data(),
                        static_cast<int>(prev_rows), D.data(), static_cast<int>(B), 0.0,
                        Dprev.data(), static_cast<int>(B));
            D = std::move(Dprev);
        }
    }
    return g;
}

// --------------------------------------------------------------------------
// training
// --------------------------------------------------------------------------

struct TrainConfig {
    double eta = 1e-3;
    std::size_t batch = 0;        // 0 = full-batch GD
    long max_iters = 10000;
    std::uint64_t seed = 1;       // minibatch shuffling
    double delta = 0.05;          // convergence threshold parameter
    long record_every = 10;
    bool mean_loss = false;       // scale gradients by 1/n (or 1/batch)
    bool record_residual = false; // store |y - u| per record
    bool stop_on_convergence = true;  // halt once every region satisfies the criterion
    double divergence_factor = 1e6;
};

struct TrainingTrace {
    std::vector<long> iters;
    std::vector<double> loss;                     // 1/2 sum (y-u)^2 (full set)
    std::vector<std::vector<double>> region_err;  // per region: (1/2|R|) sum (u-y)^2
    std::vector<double> residual_norm;            // |y - u|
    bool diverged = false;
    long total_iters = 0;
};

namespace detail {

struct RegionIndex {
    std::vector<std::vector<std::size_t>> members;
    explicit RegionIndex(const Dataset& ds) : members(ds.nregions) {
        for (std::size_t i = 0; i < ds.n; ++i) members[ds.region[i]].push_back(i);
    }
};

inline bool record_state(const Dataset& ds, const RegionIndex& reg, std::span<const double> u,
                         long iter, const TrainConfig& cfg, TrainingTrace& trace,
                         double& initial_loss) {
    double loss = 0.0;
    for (std::size_t i = 0; i < ds.n; ++i) {
        double r = u[i] - ds.y[i];
        loss += r * r;
    }
    loss *= 0.5;
    trace.iters.push_back(iter);
    trace.loss.push_back(loss);
    std::vector<double> errs(ds.nregions, 0.0);
    bool all_below = true;
    for (std::size_t j = 0; j < ds.nregions; ++j) {
        double e = 0.0;
        for (std::size_t i : reg.members[j]) {
            double r = u[i] - ds.y[i];
            e += r * r;
        }
        e = reg.members[j].empty() ? 0.0 : 0.5 * e / static_cast<double>(reg.members[j].size());
        errs[j] = e;
        if (e >= cfg.delta / static_cast<double>(ds.n)) all_below = false;
    }
    trace.region_err.push_back(std::move(errs));
    if (cfg.record_residual) trace.residual_norm.push_back(std::sqrt(2.0 * loss));
    if (initial_loss < 0.0) initial_loss = loss;
    if (loss > cfg.divergence_factor * std::max(initial_loss, 1e-12)) {
        trace.diverged = true;
        return true;
    }
    return cfg.stop_on_convergence && all_below;
}

}  // namespace detail

// full-batch GD or seeded-shuffle minibatch SGD on the two-layer net;
// only W (weights + bias) moves, the output signs stay fixed
inline TrainingTrace train(TwoLayerNet& net, const Dataset& ds, const TrainConfig& cfg) {
    if (ds.n == 0) throw std::invalid_argument("train: empty dataset");
    for (double v : ds.y)
        if (!std::isfinite(v)) throw std::invalid_argument("train: non-finite target");
    const std::size_t n = ds.n;
    const int d = net.d;
    const double sq = 1.0 / std::sqrt(static_cast<double>(net.m));
    detail::RegionIndex reg(ds);
    TrainingTrace trace;
    double initial_loss = -1.0;

    std::vector<double> u(n), z(n), r(n);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    CounterRng shuffle_rng(cfg.seed, 0x5f55);

    const std::size_t batch = cfg.batch == 0 ? n : std::min(cfg.batch, n);
    std::size_t cursor = 0;

    for (long t = 0; t <= cfg.max_iters; ++t) {
        if (t % cfg.record_every == 0 || t == cfg.max_iters) {
            forward_batch(net, ds, u);
            bool stop = detail::record_state(ds, reg, u, t, cfg, trace, initial_loss);
            trace.total_iters = t;
            if (stop || t == cfg.max_iters) break;
        }
        // choose the step's sample set
        const std::size_t* idx = nullptr;
        std::size_t bsz = n;
        if (batch < n) {
            if (cursor + batch > n) cursor = 0;
            if (cursor == 0) {  // fresh epoch: seeded Fisher-Yates
                for (std::size_t i = n - 1; i > 0; --i) {
                    std::size_t j = static_cast<std::size_t>(shuffle_rng.next_double() * (i + 1));
                    std::swap(order[i], order[std::min(j, i)]);
                }
            }
            idx = order.data() + cursor;
            bsz = batch;
            cursor += batch;
        }
        const double step = cfg.eta * (cfg.mean_loss ? 1.0 / static_cast<double>(bsz) : 1.0);

        // residuals on the step's samples
        if (idx) {
            for (std::size_t b = 0; b < bsz; ++b) {
                std::size_t i = idx[b];
                double acc = 0.0;
                for (std::size_t unit = 0; unit < net.m; ++unit) {
                    const double* w = net.W.data() + unit * net.cols();
                    double zz = w[d];
                    for (int c = 0; c < d; ++c) zz += w[c] * ds.coords[c * n + i];
                    if (zz > 0.0) acc += net.a[unit] * zz;
                }
                r[b] = acc * sq - ds.y[i];
            }
        } else {
            forward_batch(net, ds, u);
            for (std::size_t i = 0; i < n; ++i) r[i] = u[i] - ds.y[i];
        }

        // per-unit gradient step
        for (std::size_t unit = 0; unit < net.m; ++unit) {
            double* w = net.W.data() + unit * net.cols();
            const double scale = net.a[unit] * sq * step;
            if (idx) {
                double g0 = 0.0, g1 = 0.0, gb = 0.0;
                for (std::size_t b = 0; b < bsz; ++b) {
                    std::size_t i = idx[b];
                    double zz = w[d];
                    for (int c = 0; c < d; ++c) zz += w[c] * ds.coords[c * n + i];
                    if (zz > 0.0) {
                        g0 += r[b] * ds.coords[i];
                        if (d > 1) g1 += r[b] * ds.coords[n + i];
                        gb += r[b];
                    }
                }
                w[0] -= scale * g0;
                if (d > 1) w[1] -= scale * g1;
                w[d] -= scale * gb;
            } else {
                // full batch: recompute activations for this unit
                const double b0 = w[d];
                if (d == 2) {
                    const double w0 = w[0], w1 = w[1];
                    const double* x0 = ds.coords.data();
                    const double* x1 = ds.coords.data() + n;
                    double g0 = 0.0, g1 = 0.0, gb = 0.0;
                    for (std::size_t i = 0; i < n; ++i) {
                        double zz = w0 * x0[i] + w1 * x1[i] + b0;
                        if (zz > 0.0) {
                            g0 += r[i] * x0[i];
                            g1 += r[i] * x1[i];
                            gb += r[i];
                        }
                    }
                    w[0] -= scale * g0;
                    w[1] -= scale * g1;
                    w[2] -= scale * gb;
                } else {
                    std::vector<double> gacc(d + 1, 0.0);
                    for (std::size_t i = 0; i < n; ++i) {
                        double zz = b0;
                        for (int c = 0; c < d; ++c) zz += w[c] * ds.coords[c * n + i];
                        if (zz > 0.0) {
                            for (int c = 0; c < d; ++c) gacc[c] += r[i] * ds.coords[c * n + i];
                            gacc[d] += r[i];
                        }
                    }
                    for (int c = 0; c <= d; ++c) w[c] -= scale * gacc[c];
                }
            }
        }
    }
    return trace;
}

inline TrainingTrace train(DeepNet& net, const Dataset& ds, const TrainConfig& cfg) {
    if (ds.n == 0) throw std::invalid_argument("train: empty dataset");
    const std::size_t n = ds.n;
    detail::RegionIndex reg(ds);
    TrainingTrace trace;
    double initial_loss = -1.0;
    std::vector<double> u(n);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    CounterRng shuffle_rng(cfg.seed, 0x5f55);
    const std::size_t batch = cfg.batch == 0 ? n : std::min(cfg.batch, n);
    std::size_t cursor = 0;

    Dataset sub;  // scratch for minibatches
    sub.dim = ds.dim;
    sub.nregions = ds.nregions;

    for (long t = 0; t <= cfg.max_iters; ++t) {
        if (t % cfg.record_every == 0 || t == cfg.max_iters) {
            forward_batch(net, ds, u);
            bool stop = detail::record_state(ds, reg, u, t, cfg, trace, initial_loss);
            trace.total_iters = t;
            if (stop || t == cfg.max_iters) break;
        }
        const Dataset* cur = &ds;
        std::size_t bsz = n;
        if (batch < n) {
            if (cursor + batch > n) cursor = 0;
            if (cursor == 0) {
                for (std::size_t i = n - 1; i > 0; --i) {
                    std::size_t j = static_cast<std::size_t>(shuffle_rng.next_double() * (i + 1));
                    std::swap(order[i], order[std::min(j, i)]);
                }
            }
            bsz = batch;
            sub.n = bsz;
            sub.coords.resize(static_cast<std::size_t>(ds.dim) * bsz);
            sub.y.resize(bsz);
            sub.region.resize(bsz);
            for (std::size_t b = 0; b < bsz; ++b) {
                std::size_t i = order[cursor + b];
                for (int c = 0; c < ds.dim; ++c)
                    sub.coords[static_cast<std::size_t>(c) * bsz + b] = ds.coords[c * n + i];
                sub.y[b] = ds.y[i];
                sub.region[b] = ds.region[i];
            }
            cursor += batch;
            cur = &sub;
        }
        const double step = cfg.eta * (cfg.mean_loss ? 1.0 / static_cast<double>(bsz) : 1.0);
        auto g = grad(net, *cur);
        const int lo = net.fix_first_last ? 1 : 0;
        const int hi = net.fix_first_last ? net.L - 1 : net.L;
        for (int l = lo; l <= hi; ++l)
            for (std::size_t i = 0; i < net.W[l].size(); ++i) net.W[l][i] -= step * g[l][i];
    }
    return trace;
}

// first recorded iteration at which each region's error is below delta/n;
// -1 marks a region that never got there
inline std::vector<long> region_convergence_time(const TrainingTrace& trace,
                                                 std::size_t nregions, double delta,
                                                 std::size_t n) {
    std::vector<long> times(nregions, -1);
    const double thresh = delta / static_cast<double>(n);
    for (std::size_t rec = 0; rec < trace.iters.size(); ++rec) {
        for (std::size_t j = 0; j < nregions; ++j)
            if (times[j] < 0 && trace.region_err[rec][j] < thresh) times[j] = trace.iters[rec];
    }
    return times;
}

// relative first-layer drift |W(t)-W(0)|_F / |W(0)|_F (lazy-training gauge)
inline double weight_drift(const TwoLayerNet& before, const TwoLayerNet& after) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < before.W.size(); ++i) {
        double dw = after.W[i] - before.W[i];
        num += dw * dw;
        den += before.W[i] * before.W[i];
    }
    return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

}  // namespace ntkspec
