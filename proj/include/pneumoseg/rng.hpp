#pragma once

#include <cmath>
#include <cstdint>

namespace pneumoseg {

// Counter-free splitmix64 step; also used to mix seed components.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Small deterministic PRNG. All randomness in the project flows through
// this type so results are bit-reproducible across platforms and stdlib
// versions (std:: distributions are implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // Decorrelate nearby seeds.
        splitmix64(state_);
    }

    // Derive an independent stream from (base, a, b), e.g. (seed, epoch, index).
    static Rng stream(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
        std::uint64_t s = base;
        splitmix64(s);
        s ^= 0x9e3779b97f4a7c15ULL * (a + 1);
        splitmix64(s);
        s ^= 0xc2b2ae3d27d4eb4fULL * (b + 1);
        splitmix64(s);
        return Rng(s);
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller (one value per call; cached pair).
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return r * std::cos(theta);
    }

private:
    std::uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace pneumoseg
