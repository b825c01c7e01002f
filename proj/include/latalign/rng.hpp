#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "latalign/tensor.hpp"

namespace latalign {

/// Seeded random stream with fully specified output mapping: mt19937_64 for
/// raw bits, explicit 53-bit uniforms, Box-Muller normals. No
/// std::*_distribution anywhere, so sequences are identical across standard
/// library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; consumes two uniforms per call.
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

    Tensor normal_tensor(Shape shape, double stddev = 1.0) {
        Tensor t = Tensor::zeros(std::move(shape));
        for (double& v : t.data) v = stddev * normal();
        return t;
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[index(i)]);
        }
    }

private:
    std::mt19937_64 gen_;
};

/// Stable stream derivation: per-run and per-component seeds come from the
/// master seed through this one function (two rounds of splitmix64 over the
/// master/index pair). Part of the artifact contract; do not change.
std::uint64_t derive_stream(std::uint64_t master, std::uint64_t index);

}  // namespace latalign
