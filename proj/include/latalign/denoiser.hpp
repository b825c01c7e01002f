#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "latalign/autoencoder.hpp"
#include "latalign/nn.hpp"
#include "latalign/rng.hpp"
#include "latalign/schedule.hpp"
#include "latalign/tensor.hpp"

namespace latalign {

/// Sinusoidal features of the (1-based) diffusion step index.
Tensor time_features(std::size_t t, std::size_t dim);

/// Per-class conditioning embeddings shared by every component that consumes
/// a prompt: both denoisers condition on rows of this table and the binder's
/// prompt encoder takes them as its input modality.
struct PromptTable {
    Tensor table;  // (classes, width)

    std::size_t classes() const { return table.shape[0]; }
    std::size_t width() const { return table.shape[1]; }
    Tensor row(std::size_t class_id) const;
    Tensor mean_row() const;  // neutral conditioning when no prompt is given

    static PromptTable init(std::size_t classes, std::size_t width, Rng& rng);
};

/// Conditional noise-prediction network eps(z_t, t, y): a small MLP over the
/// concatenation of the latent, sinusoidal time features, and the prompt
/// embedding.
struct DenoiserModel {
    std::size_t latent_dim = 0;
    std::size_t time_dim = 16;
    std::size_t cond_dim = 8;
    Mlp net;

    Tensor forward(Tape* tape, const Tensor& z_t, std::size_t t, const Tensor& y) const;
    std::vector<Tensor*> params() { return net.params(); }

    static DenoiserModel init(std::size_t latent_dim, std::size_t cond_dim, Rng& rng,
                              std::size_t hidden = 64, std::size_t time_dim = 16);
};

Tensor denoiser_forward(const DenoiserModel& model, Tape* tape, const Tensor& z_t, std::size_t t,
                        const Tensor& y);

/// Noise-estimation training: for each sample draw t uniformly and a fresh
/// Gaussian eps, noise the encoded latent, and regress the predicted noise
/// onto eps. When train_prompt_table is set the table rows receive gradient
/// updates alongside the network.
TrainStats train_denoiser(DenoiserModel& model, PromptTable& prompts, bool train_prompt_table,
                          const std::vector<std::pair<Tensor, std::size_t>>& data, const Autoencoder& ae,
                          const NoiseSchedule& schedule, const TrainConfig& cfg);

}  // namespace latalign
