#pragma once

#include <cstdint>
#include <cmath>

#include "ntkspec/common.hpp"

namespace ntkspec {

// Counter-based generator: every draw is a pure function of
// (seed, stream, counter), so parallel consumers can pull disjoint counter
// ranges and still reproduce the serial sequence bit-for-bit.
class CounterRng {
  public:
    CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream), counter_(0) {}

    // stateless access for parallel callers
    static std::uint64_t at(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (counter + 1);
        z ^= stream * 0xbf58476d1ce4e5b9ULL + 0x94d049bb133111ebULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t next_u64() { return at(seed_, stream_, counter_++); }

    // uniform in [0,1), 53-bit resolution
    double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

    static double double_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
        return (at(seed, stream, counter) >> 11) * 0x1.0p-53;
    }

    // standard normal via Box-Muller; consumes two counters per pair
    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = next_double();
        } while (u1 <= 0.0);
        u2 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(kTwoPi * u2);
        have_spare_ = true;
        return r * std::cos(kTwoPi * u2);
    }

    // +1 or -1 with equal probability
    double next_sign() { return (next_u64() & 1u) ? 1.0 : -1.0; }

    std::uint64_t counter() const { return counter_; }
    void skip_to(std::uint64_t counter) { counter_ = counter; have_spare_ = false; }

  private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t counter_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace ntkspec
