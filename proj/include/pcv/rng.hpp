#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace pcv {

// Seeded RNG stream. mt19937_64 output is fully specified by the standard;
// the uniform/normal transforms below are plain arithmetic, so a given seed
// yields the same sequence everywhere (std::*_distribution would not).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // [0, 1)
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    std::uint64_t below(std::uint64_t n) {
        // Lemire-style rejection-free enough for test-scale n; modulo bias is
        // negligible for n << 2^64 and keeps the sequence simple.
        return gen_() % n;
    }

    // Box-Muller, one value per call (the cosine branch only).
    double normal(double mean = 0.0, double stddev = 1.0) {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(2.0 * M_PI * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace pcv
