#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace pdwols {

// mt19937_64 with hand-rolled transforms. The standard specifies the engine's
// output stream but not the distributions, so draws here stay identical
// across standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // Box-Muller, cosine branch only (two uniforms per draw, no cached state).
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    int bernoulli(double p) { return uniform() < p ? 1 : 0; }

    // unbiased integer in [0, n)
    std::uint64_t bounded(std::uint64_t n) {
        std::uint64_t t = (0 - n) % n;  // 2^64 mod n
        std::uint64_t x = gen_();
        while (x < t) x = gen_();
        return x % n;
    }

    // Fisher-Yates; std::shuffle's draw pattern is implementation-defined.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(bounded(i));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace pdwols
