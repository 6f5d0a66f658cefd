#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "ntkspec/common.hpp"
#include "ntkspec/rng.hpp"

namespace ntkspec {

template <int D>
using Vec = std::array<double, D>;

template <int D>
double dot(const Vec<D>& a, const Vec<D>& b) {
    double s = 0.0;
    for (int i = 0; i < D; ++i) s += a[i] * b[i];
    return s;
}

template <int D>
double norm(const Vec<D>& a) {
    return std::sqrt(dot<D>(a, a));
}

// Point on S^{d-1}; construction enforces the unit-norm invariant.
template <int D>
struct SpherePoint {
    Vec<D> x{};

    static SpherePoint make(const Vec<D>& v, double tol = 1e-12) {
        double n = norm<D>(v);
        if (std::abs(n - 1.0) > tol)
            throw std::invalid_argument("SpherePoint: |x| = " + std::to_string(n) + " != 1");
        return SpherePoint{v};
    }
    static SpherePoint normalized(const Vec<D>& v) {
        double n = norm<D>(v);
        if (n == 0.0) throw std::invalid_argument("SpherePoint: zero vector");
        Vec<D> u = v;
        for (auto& c : u) c /= n;
        return SpherePoint{u};
    }
};

inline SpherePoint<2> point_from_angle(double theta) {
    return SpherePoint<2>{{std::cos(theta), std::sin(theta)}};
}

// --------------------------------------------------------------------------
// densities
// --------------------------------------------------------------------------

// Piecewise-constant density on S^1.  Region j is the half-open arc
// [boundaries[j], boundaries[j+1]) with the last region wrapping to
// boundaries[0] + 2pi.  values[j] is probability per radian.
class PiecewiseDensity1D {
  public:
    PiecewiseDensity1D(std::vector<double> boundaries, std::vector<double> values)
        : b_(std::move(boundaries)), p_(std::move(values)) {
        if (b_.empty() || b_.size() != p_.size())
            throw std::invalid_argument("PiecewiseDensity1D: need one boundary per region");
        for (std::size_t i = 0; i < b_.size(); ++i) {
            if (b_[i] < -kPi || b_[i] >= kPi)
                throw std::invalid_argument("PiecewiseDensity1D: boundaries must lie in [-pi,pi)");
            if (i > 0 && b_[i] <= b_[i - 1])
                throw std::invalid_argument("PiecewiseDensity1D: boundaries must be strictly increasing");
        }
        double mass = 0.0, support = 0.0;
        for (std::size_t j = 0; j < p_.size(); ++j) {
            if (p_[j] < 0.0) throw std::invalid_argument("PiecewiseDensity1D: negative density");
            mass += p_[j] * region_length(j);
            if (p_[j] > 0.0) support += region_length(j);
        }
        if (support == 0.0) throw std::invalid_argument("PiecewiseDensity1D: zero-measure support");
        if (std::abs(mass - 1.0) > 1e-10)
            throw std::invalid_argument("PiecewiseDensity1D: total mass " + std::to_string(mass) +
                                        " != 1");
    }

    static PiecewiseDensity1D uniform() { return {{-kPi}, {1.0 / kTwoPi}}; }

    // equal arcs with densities proportional to `weights`
    static PiecewiseDensity1D equal_regions(std::span<const double> weights) {
        std::size_t l = weights.size();
        double len = kTwoPi / static_cast<double>(l);
        double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
        std::vector<double> b(l), p(l);
        for (std::size_t j = 0; j < l; ++j) {
            b[j] = -kPi + len * static_cast<double>(j);
            p[j] = weights[j] / (wsum * len);
        }
        return {std::move(b), std::move(p)};
    }

    std::size_t regions() const { return p_.size(); }
    const std::vector<double>& boundaries() const { return b_; }
    const std::vector<double>& values() const { return p_; }

    double region_left(std::size_t j) const { return b_[j]; }
    double region_right(std::size_t j) const { return j + 1 < b_.size() ? b_[j + 1] : b_[0] + kTwoPi; }
    double region_length(std::size_t j) const { return region_right(j) - region_left(j); }

    // regions are half-open [left, right); the wrap interval before b_[0]
    // belongs to the last region
    std::size_t region_of(double angle) const {
        double x = wrap_angle(angle);
        if (x < b_[0]) return p_.size() - 1;
        auto it = std::upper_bound(b_.begin(), b_.end(), x);
        return static_cast<std::size_t>(it - b_.begin()) - 1;
    }

    double value_at(double angle) const { return p_[region_of(angle)]; }

    double min_density() const { return *std::min_element(p_.begin(), p_.end()); }
    double max_density() const { return *std::max_element(p_.begin(), p_.end()); }

    // cumulative mass from -pi up to `angle`
    double cdf(double x) const {
        x = wrap_angle(x);
        double acc = 0.0;
        // portion of the wrapped tail of the last region that precedes b_[0]
        if (b_[0] > -kPi) {
            double covered = std::min(x, b_[0]) - (-kPi);
            acc += p_.back() * std::max(0.0, covered);
            if (x <= b_[0]) return acc;
        }
        for (std::size_t j = 0; j < p_.size(); ++j) {
            double lo = b_[j];
            double hi = std::min(region_right(j), kPi);
            if (x <= lo) break;
            acc += p_[j] * (std::min(x, hi) - lo);
            if (x <= hi) break;
        }
        return acc;
    }

    // The analysis in the eigenfunction construction assumes densities with
    // period pi; this transform squeezes the circle twice onto itself
    // (x -> 2x), producing an equivalent density with that symmetry.
    PiecewiseDensity1D halve_period() const {
        std::vector<double> b2, p2;
        for (int copy = 0; copy < 2; ++copy) {
            double off = -kPi + copy * kPi;
            for (std::size_t j = 0; j < p_.size(); ++j) {
                b2.push_back(off + (b_[j] + kPi) / 2.0);
                p2.push_back(p_[j]);
            }
        }
        return {std::move(b2), std::move(p2)};
    }

  private:
    std::vector<double> b_;
    std::vector<double> p_;
};

// Density on S^2 that is constant on each of two hemispheres about `axis`.
// p_neg applies where axis.x < 0, p_pos where axis.x >= 0 (per steradian).
struct HemisphereDensity2Sphere {
    Vec<3> axis{0.0, 0.0, 1.0};
    double p_neg = 0.0;
    double p_pos = 0.0;

    HemisphereDensity2Sphere(const Vec<3>& ax, double pn, double pp)
        : axis(SpherePoint<3>::normalized(ax).x), p_neg(pn), p_pos(pp) {
        if (pn < 0.0 || pp < 0.0) throw std::invalid_argument("hemisphere densities must be >= 0");
        if (std::abs(kTwoPi * (pn + pp) - 1.0) > 1e-10)
            throw std::invalid_argument("hemisphere densities must satisfy 2pi(p1+p2)=1");
        if (pn == 0.0 && pp == 0.0) throw std::invalid_argument("zero-measure density");
    }

    // hemispheres with probability mass ratio 1:ratio (sparse:dense)
    static HemisphereDensity2Sphere with_ratio(const Vec<3>& ax, double ratio) {
        double p1 = 1.0 / (kTwoPi * (1.0 + ratio));
        return {ax, p1, ratio * p1};
    }

    int region_of(const Vec<3>& x) const { return dot<3>(axis, x) >= 0.0 ? 1 : 0; }
};

// Continuous density on S^1 given by an unnormalized profile; sampling goes
// through a tabulated inverse CDF.
class ContinuousDensity1D {
  public:
    static constexpr std::size_t kTableSize = 1u << 16;

    explicit ContinuousDensity1D(std::function<double(double)> profile)
        : profile_(std::move(profile)) {
        cdf_.resize(kTableSize + 1);
        cdf_[0] = 0.0;
        const double h = kTwoPi / kTableSize;
        double prev = profile_at(-kPi);
        for (std::size_t i = 1; i <= kTableSize; ++i) {
            double cur = profile_at(-kPi + h * static_cast<double>(i));
            cdf_[i] = cdf_[i - 1] + 0.5 * h * (prev + cur);
            prev = cur;
        }
        normalization_ = cdf_.back();
        if (normalization_ <= 0.0) throw std::invalid_argument("ContinuousDensity1D: zero mass");
        for (auto& c : cdf_) c /= normalization_;
    }

    double value_at(double x) const { return profile_at(wrap_angle(x)) / normalization_; }
    double normalization() const { return normalization_; }

    double inverse_cdf(double u) const {
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        std::size_t i = std::min<std::size_t>(std::max<std::ptrdiff_t>(it - cdf_.begin() - 1, 0),
                                              kTableSize - 1);
        double span = cdf_[i + 1] - cdf_[i];
        double frac = span > 0.0 ? (u - cdf_[i]) / span : 0.0;
        double h = kTwoPi / kTableSize;
        return -kPi + h * (static_cast<double>(i) + frac);
    }

    // the paper's continuous example: p(x) = (3 cos(2x+pi) + 4.5) / (9 pi)
    static ContinuousDensity1D cosine_profile() {
        return ContinuousDensity1D([](double x) { return 3.0 * std::cos(2.0 * x + kPi) + 4.5; });
    }

  private:
    double profile_at(double x) const {
        double v = profile_(x);
        if (v < 0.0) throw std::invalid_argument("ContinuousDensity1D: negative profile");
        return v;
    }

    std::function<double(double)> profile_;
    std::vector<double> cdf_;
    double normalization_ = 1.0;
};

// --------------------------------------------------------------------------
// sampling
// --------------------------------------------------------------------------

struct AngleSample {
    double angle;       // in [-pi, pi)
    std::size_t region;
};

struct SurfaceSample {
    Vec<3> x;
    std::size_t region;  // 0 = negative hemisphere, 1 = positive
};

// inverse-CDF draw; deterministic in (seed, i) so the sequence is the same no
// matter how calls are batched
inline std::vector<AngleSample> sample(const PiecewiseDensity1D& d, std::size_t n,
                                       std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("sample: n must be >= 1");
    const std::size_t l = d.regions();
    std::vector<double> mass(l), cum(l + 1, 0.0);
    for (std::size_t j = 0; j < l; ++j) {
        mass[j] = d.values()[j] * d.region_length(j);
        cum[j + 1] = cum[j] + mass[j];
    }
    std::vector<AngleSample> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double u = CounterRng::double_at(seed, 0, i);
        auto it = std::upper_bound(cum.begin(), cum.end(), u * cum.back());
        std::size_t j = std::min<std::size_t>(static_cast<std::size_t>(it - cum.begin()) - 1, l - 1);
        while (mass[j] == 0.0 && j > 0) --j;
        double frac = mass[j] > 0.0 ? (u * cum.back() - cum[j]) / mass[j] : 0.0;
        double ang = wrap_angle(d.region_left(j) + frac * d.region_length(j));
        out[i] = {ang, d.region_of(ang)};
    }
    return out;
}

inline std::vector<AngleSample> sample(const ContinuousDensity1D& d, std::size_t n,
                                       std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("sample: n must be >= 1");
    std::vector<AngleSample> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double u = CounterRng::double_at(seed, 0, i);
        out[i] = {d.inverse_cdf(u), 0};
    }
    return out;
}

// two-stage draw: hemisphere by mass, then uniform within it
inline std::vector<SurfaceSample> sample(const HemisphereDensity2Sphere& d, std::size_t n,
                                         std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("sample: n must be >= 1");
    const double mass_pos = kTwoPi * d.p_pos;
    std::vector<SurfaceSample> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        // three decorrelated uniforms per point
        double u0 = CounterRng::double_at(seed, 1, 3 * i);
        double u1 = CounterRng::double_at(seed, 1, 3 * i + 1);
        double u2 = CounterRng::double_at(seed, 1, 3 * i + 2);
        bool pos = u0 < mass_pos;
        // uniform on the sphere, then reflect onto the chosen hemisphere
        double z = 1.0 - 2.0 * u1;
        double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        double phi = kTwoPi * u2;
        Vec<3> v{r * std::cos(phi), r * std::sin(phi), z};
        double c = dot<3>(d.axis, v);
        if ((c >= 0.0) != pos)
            for (int k = 0; k < 3; ++k) v[k] -= 2.0 * c * d.axis[k];
        out[i] = {v, pos ? 1u : 0u};
    }
    return out;
}

// --------------------------------------------------------------------------
// targets
// --------------------------------------------------------------------------

// Legendre polynomial P_l(t), three-term recurrence
inline double legendre(int l, double t) {
    if (l < 0 || l > 64) throw std::invalid_argument("legendre: need 0 <= l <= 64");
    if (std::abs(t) > 1.0 + 1e-12)
        throw std::invalid_argument("legendre: |t| > 1: " + std::to_string(t));
    t = std::clamp(t, -1.0, 1.0);
    if (l == 0) return 1.0;
    double pm1 = 1.0, p = t;
    for (int k = 1; k < l; ++k) {
        double pn = ((2.0 * k + 1.0) * t * p - k * pm1) / (k + 1.0);
        pm1 = p;
        p = pn;
    }
    return p;
}

// Target function: sinusoids on S^1, or a zonal harmonic about an axis on S^2.
struct TargetSpec {
    struct Harmonic {
        double amplitude;
        double freq;
        double phase;  // evaluated as amplitude * cos(freq * x + phase)
    };

    std::vector<Harmonic> harmonics;  // empty for zonal targets
    int zonal_ell = -1;
    Vec<3> zonal_axis{0.0, 0.0, 1.0};

    static TargetSpec cosine(double kappa) { return {{{1.0, kappa, 0.0}}, -1, {}}; }
    static TargetSpec sine(double kappa) { return {{{1.0, kappa, -kPi / 2.0}}, -1, {}}; }
    static TargetSpec composite(std::vector<Harmonic> hs) { return {std::move(hs), -1, {}}; }
    static TargetSpec zonal(int ell, const Vec<3>& axis) {
        TargetSpec t;
        t.zonal_ell = ell;
        t.zonal_axis = SpherePoint<3>::normalized(axis).x;
        return t;
    }

    bool is_zonal() const { return zonal_ell >= 0; }

    double eval(double angle) const {
        if (is_zonal()) throw std::invalid_argument("zonal target needs a 3d point");
        double s = 0.0;
        for (const auto& h : harmonics) s += h.amplitude * std::cos(h.freq * angle + h.phase);
        return s;
    }

    double eval(const Vec<3>& x) const {
        if (!is_zonal()) throw std::invalid_argument("sinusoid target needs an angle");
        return legendre(zonal_ell, clamp_unit(dot<3>(zonal_axis, x)));
    }
};

}  // namespace ntkspec
