#include "latalign/autoencoder.hpp"

#include <cmath>
#include <stdexcept>

#include "latalign/optim.hpp"

namespace latalign {

void TrainConfig::validate() const {
    if (epochs == 0 || batch_size == 0) throw std::invalid_argument("train config: epochs and batch_size must be positive");
    if (!(lr > 0.0)) throw std::invalid_argument("train config: lr must be positive");
}

Tensor Autoencoder::encode(Tape* tape, const Tensor& x) const {
    if (kind == AutoencoderKind::Identity) {
        if (x.numel() != data_dim) {
            throw std::invalid_argument("autoencoder: encode width " + shape_str(x.shape));
        }
        return x;
    }
    if (!x.is_vector() || x.numel() != data_dim) {
        throw std::invalid_argument("autoencoder: encode width " + shape_str(x.shape) + " expected " +
                                    std::to_string(data_dim));
    }
    return add(tape, matmul(tape, enc.w, x), enc.b);
}

Tensor Autoencoder::decode(Tape* tape, const Tensor& z) const {
    if (kind == AutoencoderKind::Identity) {
        if (z.numel() != latent_dim) {
            throw std::invalid_argument("autoencoder: decode width " + shape_str(z.shape));
        }
        return z;
    }
    if (!z.is_vector() || z.numel() != latent_dim) {
        throw std::invalid_argument("autoencoder: decode width " + shape_str(z.shape) + " expected " +
                                    std::to_string(latent_dim));
    }
    return add(tape, matmul(tape, dec.w, z), dec.b);
}

std::vector<Tensor*> Autoencoder::params() {
    if (kind == AutoencoderKind::Identity) return {};
    return {&enc.w, &enc.b, &dec.w, &dec.b};
}

Autoencoder Autoencoder::identity(std::size_t dim) {
    Autoencoder ae;
    ae.kind = AutoencoderKind::Identity;
    ae.data_dim = dim;
    ae.latent_dim = dim;
    return ae;
}

Autoencoder Autoencoder::affine(std::size_t data_dim, std::size_t latent_dim, Rng& rng) {
    Autoencoder ae;
    ae.kind = AutoencoderKind::Affine;
    ae.data_dim = data_dim;
    ae.latent_dim = latent_dim;
    ae.enc.w = rng.normal_tensor({latent_dim, data_dim}, 1.0 / std::sqrt(static_cast<double>(data_dim)));
    ae.enc.b = Tensor::zeros({latent_dim});
    ae.dec.w = rng.normal_tensor({data_dim, latent_dim}, 1.0 / std::sqrt(static_cast<double>(latent_dim)));
    ae.dec.b = Tensor::zeros({data_dim});
    return ae;
}

Tensor autoencode(Tape* tape, const Autoencoder& ae, const Tensor& x, CodecDirection direction) {
    return direction == CodecDirection::Encode ? ae.encode(tape, x) : ae.decode(tape, x);
}

TrainStats train_autoencoder(Autoencoder& ae, const std::vector<Tensor>& data, const TrainConfig& cfg) {
    cfg.validate();
    if (ae.kind == AutoencoderKind::Identity) return {};
    if (data.empty()) throw std::invalid_argument("train_autoencoder: empty dataset");

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<Tensor*> params = ae.params();
    AdamState state = make_adam_state(params);
    TrainStats stats;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            Tape tape;
            std::vector<Tensor> watched;
            watched.reserve(params.size());
            for (Tensor* p : params) watched.push_back(tape.watch(*p));
            Autoencoder live = ae;
            live.enc.w = watched[0];
            live.enc.b = watched[1];
            live.dec.w = watched[2];
            live.dec.b = watched[3];

            Tensor batch_loss = Tensor::scalar(0.0);
            for (std::size_t i = start; i < end; ++i) {
                const Tensor& x = data[order[i]];
                Tensor rec = live.decode(&tape, live.encode(&tape, x));
                batch_loss = add(&tape, batch_loss, squared_error(&tape, rec, x));
            }
            batch_loss = scale(&tape, batch_loss, 1.0 / static_cast<double>(end - start));
            epoch_loss += batch_loss.scalar_value() * static_cast<double>(end - start);
            seen += end - start;

            GradientMap grads = tape.backward(batch_loss);
            std::vector<Tensor> grad_list;
            grad_list.reserve(params.size());
            for (const Tensor& w : watched) grad_list.push_back(grads.at(w.node));
            adam_step(params, grad_list, state, cfg.lr);
        }
        stats.epoch_loss.push_back(epoch_loss / static_cast<double>(seen));
    }
    stats.final_loss = stats.epoch_loss.back();
    return stats;
}

}  // namespace latalign
