#pragma once

#include <vector>

#include "latalign/tensor.hpp"

namespace latalign {

/// Adam moment accumulators; one slot per parameter, shape-matched.
struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    long step = 0;
};

AdamState make_adam_state(const std::vector<Tensor*>& params);

/// One Adam update with bias correction. `grads` must align with `params`
/// by index and shape.
void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

}  // namespace latalign
