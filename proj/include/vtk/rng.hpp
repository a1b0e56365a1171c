#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace vtk {

// Seeded RNG with hand-rolled distributions so a given seed produces the
// same stream regardless of standard library implementation.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    // [0, 1)
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller (single value per call).
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        // guard log(0)
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    // Unbiased integer in [0, n)
    uint64_t below(uint64_t n) {
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = gen_();
            if (r >= threshold) return r % n;
        }
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    // k distinct indices from [0, n), in draw order (requires k <= n).
    std::vector<size_t> sample_without_replacement(size_t n, size_t k) {
        std::vector<size_t> idx(n);
        std::iota(idx.begin(), idx.end(), size_t{0});
        for (size_t i = 0; i < k; ++i) {
            std::swap(idx[i], idx[i + below(n - i)]);
        }
        idx.resize(k);
        return idx;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace vtk
