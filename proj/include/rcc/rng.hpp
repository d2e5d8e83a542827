#pragma once

#include <complex>
#include <cstdint>

namespace rcc {

// Stateless 64-bit mixer (splitmix64 finalizer). Used both to expand seeds
// into engine state and to derive independent substream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256++ with splitmix64 seeding. Self-contained so that draws are
// bit-identical across platforms and standard libraries. Substreams are
// derived from (seed, tag) pairs, so adding a new consumer tag never
// perturbs the draws of existing ones.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
        has_spare_ = false;
        spare_ = 0.0;
    }

    // Independent generator for a named substream.
    Rng substream(std::uint64_t tag) const {
        std::uint64_t sm = seed_ ^ (0x8b72e1e2u + tag * 0xd6e8feb86659fd93ULL);
        std::uint64_t child = splitmix64(sm);
        return Rng(child);
    }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 random mantissa bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; pairs are cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // Circularly symmetric complex Gaussian with unit variance per entry.
    std::complex<double> cnormal() {
        const double re = normal();
        const double im = normal();
        return {re * 0.70710678118654752440, im * 0.70710678118654752440};
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4];
    std::uint64_t seed_;
    bool has_spare_;
    double spare_;
};

} // namespace rcc
