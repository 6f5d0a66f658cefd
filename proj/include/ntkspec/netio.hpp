#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "ntkspec/nets.hpp"

namespace ntkspec {

// Flat binary network checkpoints: magic, format version, kind, dims, tau,
// seed, then raw weights.

namespace detail {

inline constexpr std::uint32_t kNetMagic = 0x4e4b544eu;  // "NTKN"
inline constexpr std::uint32_t kNetVersion = 1;

template <class T>
void put(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
void get(std::ifstream& f, T& v) {
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw std::runtime_error("net checkpoint: truncated file");
}

}  // namespace detail

inline void save_net(const TwoLayerNet& net, const std::filesystem::path& path,
                     std::uint64_t seed) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_net: cannot open " + path.string());
    detail::put(f, detail::kNetMagic);
    detail::put(f, detail::kNetVersion);
    detail::put(f, std::uint32_t{1});  // kind 1 = two-layer
    detail::put(f, std::uint64_t{net.m});
    detail::put(f, std::int32_t{net.d});
    detail::put(f, net.tau);
    detail::put(f, seed);
    f.write(reinterpret_cast<const char*>(net.W.data()),
            static_cast<std::streamsize>(net.W.size() * sizeof(double)));
    f.write(reinterpret_cast<const char*>(net.a.data()),
            static_cast<std::streamsize>(net.a.size() * sizeof(double)));
}

inline TwoLayerNet load_two_layer(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_two_layer: cannot open " + path.string());
    std::uint32_t magic, version, kind;
    detail::get(f, magic);
    detail::get(f, version);
    detail::get(f, kind);
    if (magic != detail::kNetMagic || version != detail::kNetVersion || kind != 1)
        throw std::runtime_error("load_two_layer: bad header");
    std::uint64_t m, seed;
    std::int32_t d;
    double tau;
    detail::get(f, m);
    detail::get(f, d);
    detail::get(f, tau);
    detail::get(f, seed);
    TwoLayerNet net;
    net.m = m;
    net.d = d;
    net.tau = tau;
    net.W.resize(m * static_cast<std::size_t>(d + 1));
    net.a.resize(m);
    f.read(reinterpret_cast<char*>(net.W.data()),
           static_cast<std::streamsize>(net.W.size() * sizeof(double)));
    f.read(reinterpret_cast<char*>(net.a.data()),
           static_cast<std::streamsize>(net.a.size() * sizeof(double)));
    if (!f) throw std::runtime_error("load_two_layer: truncated file");
    return net;
}

inline void save_net(const DeepNet& net, const std::filesystem::path& path, std::uint64_t seed) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_net: cannot open " + path.string());
    detail::put(f, detail::kNetMagic);
    detail::put(f, detail::kNetVersion);
    detail::put(f, std::uint32_t{2});  // kind 2 = deep FC
    detail::put(f, std::int32_t{net.L});
    for (int v : net.dims) detail::put(f, std::int32_t{v});
    detail::put(f, net.tau);
    detail::put(f, seed);
    detail::put(f, std::uint8_t{net.fix_first_last ? 1u : 0u});
    for (const auto& w : net.W)
        f.write(reinterpret_cast<const char*>(w.data()),
                static_cast<std::streamsize>(w.size() * sizeof(double)));
}

inline DeepNet load_deep(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_deep: cannot open " + path.string());
    std::uint32_t magic, version, kind;
    detail::get(f, magic);
    detail::get(f, version);
    detail::get(f, kind);
    if (magic != detail::kNetMagic || version != detail::kNetVersion || kind != 2)
        throw std::runtime_error("load_deep: bad header");
    DeepNet net;
    std::int32_t L;
    detail::get(f, L);
    net.L = L;
    net.dims.resize(L + 2);
    for (auto& v : net.dims) {
        std::int32_t d;
        detail::get(f, d);
        v = d;
    }
    std::uint64_t seed;
    detail::get(f, net.tau);
    detail::get(f, seed);
    std::uint8_t fix;
    detail::get(f, fix);
    net.fix_first_last = fix != 0;
    net.W.resize(L + 1);
    for (int l = 0; l <= L; ++l) {
        net.W[l].resize(static_cast<std::size_t>(net.dims[l + 1]) * net.dims[l]);
        f.read(reinterpret_cast<char*>(net.W[l].data()),
               static_cast<std::streamsize>(net.W[l].size() * sizeof(double)));
    }
    if (!f) throw std::runtime_error("load_deep: truncated file");
    return net;
}

}  // namespace ntkspec
