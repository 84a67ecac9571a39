#pragma once

#include <cmath>
#include <cstdint>

namespace cavfb {

inline std::uint64_t splitmix64(std::uint64_t& s) {
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// xoshiro256++ with splitmix64 seeding. Independent streams are derived from a
// single master seed so ensembles are reproducible shot by shot regardless of
// how the work is divided among threads.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& w : state_) w = splitmix64(s);
    }

    static std::uint64_t derive_stream_seed(std::uint64_t master, std::uint64_t index) {
        // Distinct odd stride keeps distinct indices on distinct splitmix orbits.
        return master + 0x9e3779b97f4a7c15ull * (index + 1);
    }

    static Rng stream(std::uint64_t master, std::uint64_t index) {
        return Rng(derive_stream_seed(master, index));
    }

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

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Exponential holding time with the given rate; uses log1p so tiny uniforms
    // are handled gracefully. rate must be > 0.
    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

    bool bernoulli(double p) { return uniform() < p; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::uint64_t state_[4];
};

} // namespace cavfb
