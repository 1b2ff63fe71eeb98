#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <vector>

namespace tribyol {

// splitmix64 step; used for seeding and for deriving child streams.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// xoshiro256++ with portable, hand-rolled real/int mappings so that seeded
// draws are bit-identical across platforms and standard libraries.
class Rng {
public:
    Rng() : Rng(0) {}

    explicit Rng(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& word : s) word = splitmix64(sm);
    }

    // Deterministic child stream from a seed plus stream coordinates
    // (e.g. purpose tag, epoch, iteration, sample, view). Order matters.
    static Rng derive(uint64_t seed, std::initializer_list<uint64_t> coords) {
        uint64_t h = seed;
        for (uint64_t c : coords) {
            h ^= c + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
            (void)splitmix64(h);
        }
        return Rng(h);
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s[0] + s[3], 23) + s[0];
        const uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Uniform integer in [0, n). Lemire multiply-shift; the modulo bias is
    // below 2^-64 * n and irrelevant for shuffling/subsampling.
    uint64_t uniform_int(uint64_t n) {
        return (uint64_t)(((__uint128_t)next_u64() * n) >> 64);
    }

    // Standard normal via Box-Muller (cached second deviate).
    double normal() {
        if (has_cached) {
            has_cached = false;
            return cached;
        }
        double u1, u2;
        do { u1 = uniform(); } while (u1 <= 0.0);
        u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached = r * std::sin(a);
        has_cached = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = (size_t)uniform_int(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s[4];
    double cached = 0.0;
    bool has_cached = false;
};

// Stream purpose tags, so independent consumers of the same run seed never
// overlap even when their other coordinates coincide.
namespace rng_stream {
constexpr uint64_t kWeightInit = 0x01;
constexpr uint64_t kAugment = 0x02;
constexpr uint64_t kShuffle = 0x03;
constexpr uint64_t kSynthData = 0x04;
constexpr uint64_t kSubsample = 0x05;
constexpr uint64_t kProbe = 0x06;
} // namespace rng_stream

} // namespace tribyol
