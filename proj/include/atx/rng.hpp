#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace atx {

/// The project-wide PRNG: std::mt19937_64, whose output stream is fixed by the
/// C++ standard. Distributions are drawn through the helpers below so the
/// transforms are ours rather than the standard library's.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Box-Muller, one value per call.
    double normal(double mean = 0.0, double stddev = 1.0);
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace atx
