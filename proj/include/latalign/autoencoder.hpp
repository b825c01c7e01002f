#pragma once

#include <vector>

#include "latalign/nn.hpp"
#include "latalign/rng.hpp"
#include "latalign/tape.hpp"
#include "latalign/tensor.hpp"

namespace latalign {

enum class AutoencoderKind { Identity, Affine };
enum class CodecDirection { Encode, Decode };

/// Data-space <-> latent-space codec. Identity mode is the default and is a
/// strict no-op; affine mode is a trainable pair of dense maps.
struct Autoencoder {
    AutoencoderKind kind = AutoencoderKind::Identity;
    std::size_t data_dim = 0;
    std::size_t latent_dim = 0;
    DenseLayer enc;  // (latent, data)
    DenseLayer dec;  // (data, latent)

    Tensor encode(Tape* tape, const Tensor& x) const;
    Tensor decode(Tape* tape, const Tensor& z) const;
    std::vector<Tensor*> params();

    static Autoencoder identity(std::size_t dim);
    static Autoencoder affine(std::size_t data_dim, std::size_t latent_dim, Rng& rng);
};

Tensor autoencode(Tape* tape, const Autoencoder& ae, const Tensor& x, CodecDirection direction);

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    std::uint64_t seed = 33;

    void validate() const;
};

struct TrainStats {
    std::vector<double> epoch_loss;
    double final_loss = 0.0;
};

/// Minimize reconstruction squared error over the dataset (affine mode only;
/// identity needs no training).
TrainStats train_autoencoder(Autoencoder& ae, const std::vector<Tensor>& data, const TrainConfig& cfg);

}  // namespace latalign
