#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "drq/errors.hpp"

namespace drq {

// Deterministic, serializable RNG. xoshiro256++ core seeded through
// splitmix64, plus a cached-spare Box-Muller normal. All stochastic behavior
// in the library goes through this type so that runs are reproducible across
// platforms and resumable from checkpoints.
class Rng {
  public:
    Rng() : Rng(0) {}
    explicit Rng(uint64_t seed) { reseed(seed); }

    void reseed(uint64_t seed) {
        uint64_t x = seed;
        for (auto& word : s_) word = splitmix64(x);
        has_spare_ = false;
        spare_ = 0.0;
    }

    // Independent child stream; stable under the name, order-free.
    Rng substream(const std::string& name) const {
        uint64_t h = 0xcbf29ce484222325ull; // FNV-1a
        for (unsigned char c : name) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        uint64_t x = s_[0] ^ mix(h);
        return Rng(mix(x));
    }
    Rng substream(uint64_t salt) const { return Rng(mix(s_[0] ^ mix(salt))); }

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

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n), n > 0.
    uint64_t below(uint64_t n) {
        if (n == 0) throw input_error("Rng::below(0)");
        // Rejection sampling keeps the draw exactly uniform.
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return x % n;
    }

    // Standard normal, Box-Muller with cached spare.
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

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // State round-trips bit-exactly through checkpoints.
    std::vector<uint64_t> save() const {
        std::vector<uint64_t> out(s_.begin(), s_.end());
        out.push_back(has_spare_ ? 1 : 0);
        uint64_t bits;
        static_assert(sizeof(bits) == sizeof(spare_));
        std::memcpy(&bits, &spare_, sizeof(bits));
        out.push_back(bits);
        return out;
    }

    void load(const std::vector<uint64_t>& state) {
        if (state.size() != 6) throw input_error("Rng state must have 6 words");
        for (int i = 0; i < 4; ++i) s_[i] = state[i];
        has_spare_ = state[4] != 0;
        std::memcpy(&spare_, &state[5], sizeof(spare_));
    }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    static uint64_t splitmix64(uint64_t& x) {
        uint64_t z = (x += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    static uint64_t mix(uint64_t x) {
        uint64_t y = x;
        return splitmix64(y);
    }

    std::array<uint64_t, 4> s_{};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace drq
