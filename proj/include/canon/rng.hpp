#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace canon {

// Deterministic splitmix64 generator. One Rng is seeded per run; components
// derive their own substreams with fork() so insertion of a new draw site
// does not shift every stream after it.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // unbiased integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        std::uint64_t mask = ~0ULL;
        if (n == 0) return 0;
        std::uint64_t lim = (~0ULL) - (~0ULL) % n;
        (void)mask;
        std::uint64_t v = next_u64();
        while (v >= lim) v = next_u64();
        return v % n;
    }

    // inclusive range
    long uniform_int(long lo, long hi) {
        return lo + long(below(std::uint64_t(hi - lo + 1)));
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Derive an independent substream keyed by a label.
    Rng fork(std::string_view label) const {
        std::uint64_t h = 1469598103934665603ULL;  // FNV-1a 64
        for (char c : label) {
            h ^= std::uint64_t(static_cast<unsigned char>(c));
            h *= 1099511628211ULL;
        }
        return Rng(state_ ^ h ^ 0xd1b54a32d192ed03ULL);
    }

    Rng fork(std::uint64_t stream) const {
        return Rng(state_ ^ (stream * 0x9e3779b97f4a7c15ULL) ^ 0xd1b54a32d192ed03ULL);
    }

  private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace canon
