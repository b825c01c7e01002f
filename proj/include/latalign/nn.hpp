#pragma once

#include <span>
#include <vector>

#include "latalign/rng.hpp"
#include "latalign/tape.hpp"
#include "latalign/tensor.hpp"

namespace latalign {

struct DenseLayer {
    Tensor w;  // (out, in)
    Tensor b;  // (out)
};

/// Small fully connected network: tanh on every layer except the last.
struct Mlp {
    std::vector<DenseLayer> layers;

    Tensor forward(Tape* tape, const Tensor& x) const;
    std::size_t input_dim() const;
    std::size_t output_dim() const;

    std::vector<Tensor*> params();
    std::vector<const Tensor*> params() const;

    /// dims = {in, hidden..., out}; weights ~ N(0, 1/sqrt(fan_in)), zero bias.
    static Mlp init(std::span<const std::size_t> dims, Rng& rng);
};

}  // namespace latalign
