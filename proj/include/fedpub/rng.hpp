#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace fedpub {

// All stochastic steps draw from this wrapper instead of std distributions,
// which are implementation-defined; the raw bit streams below are not, so a
// run replays byte-identically on any conforming toolchain.
struct Rng {
    std::mt19937_64 gen;
    bool has_spare = false;
    double spare = 0.0;

    explicit Rng(uint64_t seed) : gen(seed) {}

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller.
    double normal() {
        if (has_spare) {
            has_spare = false;
            return spare;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * 3.14159265358979323846 * u2;
        spare = r * std::sin(t);
        has_spare = true;
        return r * std::cos(t);
    }

    /// Uniform integer in [0, n), rejection-sampled for exact uniformity.
    uint64_t integer(uint64_t n) {
        if (n == 0) return 0;
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = gen();
        } while (x >= limit);
        return x % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[integer(i)]);
    }

    /// Sample k distinct values from [0, n) in sorted order.
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> pool(n);
        for (int i = 0; i < n; ++i) pool[i] = i;
        shuffle(pool);
        pool.resize(k);
        std::sort(pool.begin(), pool.end());
        return pool;
    }
};

inline uint64_t mix64(uint64_t h, uint64_t v) {
    h += 0x9e3779b97f4a7c15ULL + v;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
    return h ^ (h >> 31);
}

/// Stable seed derivation: distinct (tag, client, round) tuples yield
/// independent streams from one run-level seed.
inline uint64_t derive_seed(uint64_t run_seed, std::string_view domain_tag, int64_t client_id = 0,
                            int64_t round = 0) {
    uint64_t h = mix64(0x8f1bbcdcbfa53e0bULL, run_seed);
    for (char c : domain_tag) h = mix64(h, static_cast<uint8_t>(c));
    h = mix64(h, static_cast<uint64_t>(client_id));
    h = mix64(h, static_cast<uint64_t>(round));
    return h;
}

}  // namespace fedpub
