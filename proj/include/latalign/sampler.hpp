#pragma once

#include <functional>
#include <vector>

#include "latalign/denoiser.hpp"
#include "latalign/rng.hpp"
#include "latalign/schedule.hpp"
#include "latalign/tensor.hpp"

namespace latalign {

enum class SamplerKind { Ddpm, Ddim };

struct LatentTrajectory {
    std::vector<Tensor> latents;     // z at times[0] .. times.back(), length n_steps + 1
    std::vector<std::size_t> times;  // schedule steps, descending, last entry 0
};

/// Evenly spaced schedule steps used at inference: n ascending indices in
/// [1, T] ending exactly at T (rounded linspace).
std::vector<std::size_t> inference_grid(std::size_t T, std::size_t n_steps);

/// Called after each denoising step with the fresh latent. step_index counts
/// denoising steps from the start of sampling; t_next/alpha_bar_next describe
/// the time the latent now sits at (t_next == 0, alpha_bar == 1 after the
/// final step). Returns the (possibly updated) latent.
using GuideHook =
    std::function<Tensor(std::size_t step_index, std::size_t t_next, double alpha_bar_next, Tensor z)>;

/// One reverse step from time t to t_prev (t_prev == 0 finishes the chain).
/// DDPM draws posterior noise from `rng` (variance beta-tilde over the
/// subsampled grid, which vanishes at the final step); DDIM (eta = 0) is
/// noise-free. Every sampling path in the project goes through this function
/// so that vanilla and guided trajectories agree bit-for-bit when guidance
/// is a no-op.
Tensor denoise_step(const DenoiserModel& model, const Tensor& y, const NoiseSchedule& schedule,
                    std::size_t t, std::size_t t_prev, SamplerKind kind, Rng& rng, const Tensor& z);

/// Reverse diffusion over the subsampled grid.
LatentTrajectory sample_loop(const DenoiserModel& model, const Tensor& y, const NoiseSchedule& schedule,
                             std::size_t n_steps, SamplerKind kind, Rng& rng, const GuideHook* hook);

LatentTrajectory sample_vanilla(const DenoiserModel& model, const Tensor& y, const NoiseSchedule& schedule,
                                std::size_t n_steps, SamplerKind kind, std::uint64_t seed);

}  // namespace latalign
