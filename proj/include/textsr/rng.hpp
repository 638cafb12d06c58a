#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace textsr {

// splitmix64 step; also used as the project-wide integer hash.
inline uint64_t hash_u64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
    return hash_u64(a ^ (hash_u64(b) + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2)));
}

// xoshiro256** seeded through splitmix64. All sampling routines are spelled
// out explicitly so streams are bit-identical across platforms and compilers.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) {
        uint64_t x = seed;
        for (auto& si : s_) {
            x = hash_u64(x);
            si = x;
        }
        has_cached_ = false;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform double in [0,1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive bounds
    int64_t uniform_int(int64_t lo, int64_t hi) {
        return lo + int64_t(next_u64() % uint64_t(hi - lo + 1));
    }

    // Box-Muller, second sample cached
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return r * std::cos(theta);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // independent child stream
    Rng fork(uint64_t stream) const {
        return Rng(hash_combine(s_[0] ^ s_[2], hash_combine(s_[1] ^ s_[3], stream)));
    }

    std::array<uint64_t, 4> state() const { return s_; }
    bool cache_flag() const { return has_cached_; }
    double cache_value() const { return cached_; }
    void restore(const std::array<uint64_t, 4>& s, bool has_cached, double cached) {
        s_ = s;
        has_cached_ = has_cached;
        cached_ = cached;
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<uint64_t, 4> s_{};
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace textsr
