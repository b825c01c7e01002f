#include "latalign/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace latalign {

Tensor Mlp::forward(Tape* tape, const Tensor& x) const {
    if (layers.empty()) throw std::invalid_argument("mlp: no layers");
    if (!x.is_vector() || x.numel() != input_dim()) {
        throw std::invalid_argument("mlp: input width " + shape_str(x.shape) + " does not match " +
                                    std::to_string(input_dim()));
    }
    Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = add(tape, matmul(tape, layers[i].w, h), layers[i].b);
        if (i + 1 < layers.size()) h = tanh(tape, h);
    }
    return h;
}

std::size_t Mlp::input_dim() const { return layers.front().w.cols(); }

std::size_t Mlp::output_dim() const { return layers.back().w.rows(); }

std::vector<Tensor*> Mlp::params() {
    std::vector<Tensor*> out;
    out.reserve(layers.size() * 2);
    for (DenseLayer& l : layers) {
        out.push_back(&l.w);
        out.push_back(&l.b);
    }
    return out;
}

std::vector<const Tensor*> Mlp::params() const {
    std::vector<const Tensor*> out;
    out.reserve(layers.size() * 2);
    for (const DenseLayer& l : layers) {
        out.push_back(&l.w);
        out.push_back(&l.b);
    }
    return out;
}

Mlp Mlp::init(std::span<const std::size_t> dims, Rng& rng) {
    if (dims.size() < 2) throw std::invalid_argument("mlp: need at least input and output dims");
    Mlp net;
    net.layers.reserve(dims.size() - 1);
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const std::size_t in = dims[i], out = dims[i + 1];
        DenseLayer layer;
        layer.w = rng.normal_tensor({out, in}, 1.0 / std::sqrt(static_cast<double>(in)));
        layer.b = Tensor::zeros({out});
        net.layers.push_back(std::move(layer));
    }
    return net;
}

}  // namespace latalign
