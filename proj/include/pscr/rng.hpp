#pragma once

#include <cstdint>
#include <vector>

namespace pscr {

// splitmix64; deterministic across platforms, unlike std:: distributions.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Combines a base seed with a salt (epoch index, image index, ...).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    return mix64(seed + 0x9e3779b97f4a7c15ULL * (salt + 1));
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        return mix64(z);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform index in [0, n). Modulo bias is ~n/2^64, irrelevant here.
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next() % n); }

    // Fisher-Yates shuffle of 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        for (std::size_t i = n; i > 1; --i) {
            std::size_t j = index(i);
            std::swap(p[i - 1], p[j]);
        }
        return p;
    }

  private:
    std::uint64_t state_;
};

}  // namespace pscr
