#include "latalign/sampler.hpp"

#include <cmath>
#include <stdexcept>

namespace latalign {

std::vector<std::size_t> inference_grid(std::size_t T, std::size_t n_steps) {
    if (n_steps == 0) throw std::invalid_argument("inference_grid: n_steps must be positive");
    if (n_steps > T) {
        throw std::invalid_argument("inference_grid: n_steps " + std::to_string(n_steps) + " exceeds T " +
                                    std::to_string(T));
    }
    std::vector<std::size_t> grid(n_steps);
    for (std::size_t j = 1; j <= n_steps; ++j) {
        const double pos = static_cast<double>(j) * static_cast<double>(T) / static_cast<double>(n_steps);
        grid[j - 1] = static_cast<std::size_t>(std::llround(pos));
    }
    grid.back() = T;
    return grid;
}

Tensor denoise_step(const DenoiserModel& model, const Tensor& y, const NoiseSchedule& schedule,
                    std::size_t t, std::size_t t_prev, SamplerKind kind, Rng& rng, const Tensor& z) {
    const double ab = schedule.alpha_bar(t);
    const double ab_prev = schedule.alpha_bar(t_prev);

    Tensor eps_hat = model.forward(nullptr, z, t, y);
    Tensor z0 = predict_z0(z, eps_hat, t, schedule);

    Tensor next = Tensor::zeros({model.latent_dim});
    if (kind == SamplerKind::Ddim) {
        const double c0 = std::sqrt(ab_prev);
        const double ce = std::sqrt(1.0 - ab_prev);
        for (std::size_t i = 0; i < next.numel(); ++i) {
            next.data[i] = c0 * z0.data[i] + ce * eps_hat.data[i];
        }
    } else {
        // Posterior over the subsampled grid: consecutive grid points act as
        // adjacent steps with effective beta = 1 - abar_t / abar_prev. The
        // variance term is beta-tilde, zero when t_prev == 0.
        const double beta_eff = 1.0 - ab / ab_prev;
        const double c0 = std::sqrt(ab_prev) * beta_eff / (1.0 - ab);
        const double cz = std::sqrt(ab / ab_prev) * (1.0 - ab_prev) / (1.0 - ab);
        const double var = (1.0 - ab_prev) / (1.0 - ab) * beta_eff;
        for (std::size_t i = 0; i < next.numel(); ++i) {
            next.data[i] = c0 * z0.data[i] + cz * z.data[i];
        }
        if (var > 0.0) {
            const double sd = std::sqrt(var);
            for (std::size_t i = 0; i < next.numel(); ++i) next.data[i] += sd * rng.normal();
        }
    }
    return next;
}

LatentTrajectory sample_loop(const DenoiserModel& model, const Tensor& y, const NoiseSchedule& schedule,
                             std::size_t n_steps, SamplerKind kind, Rng& rng, const GuideHook* hook) {
    const std::vector<std::size_t> grid = inference_grid(schedule.T, n_steps);

    LatentTrajectory traj;
    traj.latents.reserve(n_steps + 1);
    traj.times.reserve(n_steps + 1);

    Tensor z = rng.normal_tensor({model.latent_dim});
    traj.latents.push_back(z);
    traj.times.push_back(grid.back());

    for (std::size_t k = 0; k < n_steps; ++k) {
        const std::size_t t = grid[n_steps - 1 - k];
        const std::size_t t_prev = (k + 1 < n_steps) ? grid[n_steps - 2 - k] : 0;
        z = denoise_step(model, y, schedule, t, t_prev, kind, rng, z);
        if (hook) z = (*hook)(k, t_prev, schedule.alpha_bar(t_prev), std::move(z));
        traj.latents.push_back(z);
        traj.times.push_back(t_prev);
    }
    return traj;
}

LatentTrajectory sample_vanilla(const DenoiserModel& model, const Tensor& y, const NoiseSchedule& schedule,
                                std::size_t n_steps, SamplerKind kind, std::uint64_t seed) {
    Rng rng(seed);
    return sample_loop(model, y, schedule, n_steps, kind, rng, nullptr);
}

}  // namespace latalign
