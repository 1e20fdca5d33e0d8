#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "sigg/errors.hpp"

namespace sigg {

// Deterministic, serializable PRNG (xoshiro256++ seeded via splitmix64).
// We avoid <random> distributions because their output sequences are
// implementation-defined; checkpoint resume requires the exact stream.
class Rng {
  public:
    Rng() : Rng(0) {}

    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& w : s_) w = splitmix64(x);
        have_spare_ = false;
        spare_ = 0.0;
    }

    // Independent substream: hash the label into the seed so that streams
    // with the same seed but different roles never overlap.
    static Rng substream(uint64_t seed, const std::string& label) {
        uint64_t h = 1469598103934665603ull; // FNV-1a
        for (unsigned char c : label) {
            h ^= c;
            h *= 1099511628211ull;
        }
        return Rng(seed ^ h);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0,1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0,n). Rejection sampling keeps it unbiased.
    int uniform_int(int n) {
        if (n <= 0) throw UsageError("uniform_int: n must be positive, got " + std::to_string(n));
        const uint64_t un = static_cast<uint64_t>(n);
        const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return static_cast<int>(v % un);
    }

    // Standard normal via Box-Muller with a cached spare.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform(); // (0,1], keeps log finite
        const double u2 = uniform();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        const double ang = 2.0 * M_PI * u2;
        spare_ = mag * std::sin(ang);
        have_spare_ = true;
        return mag * std::cos(ang);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Full state for checkpointing: 4 engine words + Box-Muller cache.
    struct State {
        std::array<uint64_t, 4> words;
        bool have_spare;
        double spare;
    };

    State state() const { return {s_, have_spare_, spare_}; }

    void set_state(const State& st) {
        s_ = st.words;
        have_spare_ = st.have_spare;
        spare_ = st.spare;
    }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static uint64_t splitmix64(uint64_t& x) {
        uint64_t z = (x += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::array<uint64_t, 4> s_{};
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace sigg
