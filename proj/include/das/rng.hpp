#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace das {

// splitmix64 step; used to derive independent substream seeds from a base
// seed so that parallel and serial evaluation orders see identical streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Seed for substream `index` of stream `base`.
inline std::uint64_t substream_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t s = base ^ (0x9e3779b97f4a7c15ULL * (index + 1));
    return splitmix64(s);
}

inline std::uint64_t substream_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
    return substream_seed(substream_seed(base, a), b);
}

// Deterministic RNG with explicit transforms. std::mt19937_64 is fully
// specified by the standard; the distribution transforms are written out
// here instead of using std:: distributions, whose sequences are
// implementation-defined.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform on [0,1), 53-bit resolution.
    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; the second value of each pair is cached.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log1p(-u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    // Unit-mean exponential by inversion.
    double exponential() { return -std::log1p(-uniform01()); }

  private:
    std::mt19937_64 eng_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace das
