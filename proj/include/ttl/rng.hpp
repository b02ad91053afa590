// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

namespace ttl {

// Counter-based PRNG (splitmix64). The full state is two u64 words, so
// checkpoints can serialize it exactly and resumed runs continue the
// identical stream.
class Rng {
  public:
    explicit Rng(uint64_t seed = 0) : seed_(seed), counter_(0) {}
    Rng(uint64_t seed, uint64_t counter) : seed_(seed), counter_(counter) {}

    uint64_t next_u64() {
        uint64_t z = seed_ + 0x9e3779b97f4a7c15ULL * ++counter_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [0, n).
    uint64_t next_below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    // Standard normal via Box-Muller.
    double next_normal() {
        double u1 = next_double();
        double u2 = next_double();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    uint64_t seed() const { return seed_; }
    uint64_t counter() const { return counter_; }

    // Independent stream for a named purpose (epoch shuffles, init, ...).
    static Rng derive(uint64_t seed, uint64_t stream) {
        uint64_t z = seed ^ (0x9e3779b97f4a7c15ULL + stream * 0xd1b54a32d192ed03ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        return Rng(z ^ (z >> 31));
    }

  private:
    uint64_t seed_;
    uint64_t counter_;
};

} // namespace ttl
