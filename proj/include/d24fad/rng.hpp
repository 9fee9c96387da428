#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace d24fad {

// splitmix64 — used to derive independent, reproducible RNG streams from a
// base seed plus context keys. Every random draw in the project flows through
// a stream keyed by (seed, purpose, indices), never through shared engine
// state, so resumed runs see exactly the streams an uninterrupted run would.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t hash_str(const std::string& s) {
    // FNV-1a
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline uint64_t mix_keys(uint64_t a) { return splitmix64(a); }
inline uint64_t mix_keys(uint64_t a, uint64_t b) { return splitmix64(splitmix64(a) ^ b); }
inline uint64_t mix_keys(uint64_t a, uint64_t b, uint64_t c) {
    return splitmix64(mix_keys(a, b) ^ c);
}
inline uint64_t mix_keys(uint64_t a, const std::string& s) { return mix_keys(a, hash_str(s)); }
inline uint64_t mix_keys(uint64_t a, const std::string& s, uint64_t c) {
    return mix_keys(mix_keys(a, hash_str(s)), c);
}

inline std::mt19937_64 make_rng(uint64_t key) { return std::mt19937_64(key); }

// Gaussian via explicit Box-Muller so draws are identical across standard
// library implementations (std::normal_distribution is not portable).
class GaussianStream {
public:
    explicit GaussianStream(uint64_t key) : rng_(key) {}

    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 1e-300);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double uniform() {  // [0,1)
        return static_cast<double>(rng_() >> 11) * (1.0 / 9007199254740992.0);
    }

    uint64_t raw() { return rng_(); }

    // uniform integer in [0, n)
    uint64_t below(uint64_t n) { return n ? rng_() % n : 0; }

private:
    std::mt19937_64 rng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// FNV-1a over raw bytes; used for parameter and file checksums.
inline uint64_t fnv1a(const void* bytes, size_t n, uint64_t h = 1469598103934665603ULL) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::string checksum_hex(uint64_t h);

}  // namespace d24fad
