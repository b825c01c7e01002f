#include "latalign/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace latalign {

AdamState make_adam_state(const std::vector<Tensor*>& params) {
    AdamState state;
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const Tensor* p : params) {
        state.m.push_back(Tensor::zeros(p->shape));
        state.v.push_back(Tensor::zeros(p->shape));
    }
    return state;
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
    if (!(lr > 0.0)) throw std::invalid_argument("adam_step: lr must be positive");
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = grads[i];
        if (!p.same_shape(g) || !p.same_shape(state.m[i])) {
            throw std::invalid_argument("adam_step: shape mismatch at parameter " + std::to_string(i));
        }
        for (std::size_t j = 0; j < p.numel(); ++j) {
            double& m = state.m[i].data[j];
            double& v = state.v[i].data[j];
            m = beta1 * m + (1.0 - beta1) * g.data[j];
            v = beta2 * v + (1.0 - beta2) * g.data[j] * g.data[j];
            const double mhat = m / bc1;
            const double vhat = v / bc2;
            p.data[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

}  // namespace latalign
