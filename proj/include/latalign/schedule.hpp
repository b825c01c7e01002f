#pragma once

#include <cstddef>
#include <vector>

#include "latalign/tape.hpp"
#include "latalign/tensor.hpp"

namespace latalign {

/// Forward-diffusion variance tables. Index convention: step t is 1-based,
/// t in [1, T]; alpha_bar(0) == 1 denotes the clean end of the chain.
struct NoiseSchedule {
    std::size_t T = 0;
    std::vector<double> betas;       // beta_t, entry t-1
    std::vector<double> alphas;      // 1 - beta_t
    std::vector<double> alpha_bars;  // prod_{i<=t} alpha_i

    double beta(std::size_t t) const;
    double alpha(std::size_t t) const;
    double alpha_bar(std::size_t t) const;  // alpha_bar(0) == 1.0
};

/// Betas linearly interpolated from beta_start to beta_end inclusive.
NoiseSchedule make_linear_schedule(std::size_t T, double beta_start, double beta_end);

/// Closed-form noisy latent: sqrt(abar_t) z0 + sqrt(1 - abar_t) eps.
Tensor q_sample(const Tensor& z0, std::size_t t, const Tensor& eps, const NoiseSchedule& schedule);

/// Clean-latent estimate from the noisy latent and a noise prediction:
/// z0 = z_t / sqrt(abar_t) - sqrt((1 - abar_t)/abar_t) eps_hat.
Tensor predict_z0(const Tensor& z_t, const Tensor& eps_hat, std::size_t t, const NoiseSchedule& schedule);

/// Same estimate built from recorded primitives, parameterized directly by
/// the alpha_bar value so it also covers the virtual t=0 point (abar == 1,
/// where the eps term vanishes and eps_hat may be null).
Tensor predict_z0_on_tape(Tape* tape, const Tensor& z_t, const Tensor* eps_hat, double alpha_bar);

}  // namespace latalign
