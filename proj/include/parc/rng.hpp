#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace parc {

// Seeded RNG with fully specified derivations on top of mt19937_64, so that
// identical seeds give identical streams regardless of standard-library
// implementation details (std::uniform_real_distribution and std::shuffle
// are not pinned down by the standard).
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) using the top 53 bits.
    double uniform01() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Unbiased integer in [0, n) via rejection sampling.
    uint64_t bounded(uint64_t n) {
        if (n == 0) return 0;
        uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
        for (;;) {
            uint64_t r = gen_();
            if (r >= threshold) return r % n;
        }
    }

    // Fisher-Yates shuffle using bounded().
    template <class T>
    void shuffle(std::vector<T>& xs) {
        for (size_t i = xs.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(bounded(i));
            std::swap(xs[i - 1], xs[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace parc
