#pragma once

#include <complex>
#include <span>
#include <stdexcept>
#include <vector>

#include "ntkspec/common.hpp"

namespace ntkspec {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// in-place iterative radix-2 Cooley-Tukey; n must be a power of two
inline void fft(std::vector<std::complex<double>>& a, bool inverse = false) {
    const std::size_t n = a.size();
    if (!is_power_of_two(n)) throw std::invalid_argument("fft: size must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 1.0 : -1.0) * kTwoPi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = a[i + k];
                std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse)
        for (auto& x : a) x /= static_cast<double>(n);
}

// real part of (1/n) * DFT of a real sequence, for harmonics 0..n/2.
// For samples of a continuous 2pi-periodic profile this converges to
// (1/2pi) * int f(t) cos(q t) dt.
inline std::vector<double> real_dft_coeffs(std::span<const double> samples) {
    const std::size_t n = samples.size();
    std::vector<std::complex<double>> a(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = samples[i];
    fft(a);
    std::vector<double> out(n / 2 + 1);
    for (std::size_t q = 0; q <= n / 2; ++q) out[q] = a[q].real() / static_cast<double>(n);
    return out;
}

// power spectrum |DFT|^2 of a real sequence (bins 0..n/2)
inline std::vector<double> periodogram(std::span<const double> samples) {
    const std::size_t n = samples.size();
    std::vector<std::complex<double>> a(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = samples[i];
    fft(a);
    std::vector<double> out(n / 2 + 1);
    for (std::size_t q = 0; q <= n / 2; ++q) out[q] = std::norm(a[q]);
    return out;
}

}  // namespace ntkspec
