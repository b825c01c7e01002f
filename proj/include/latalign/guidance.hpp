#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "latalign/autoencoder.hpp"
#include "latalign/binder.hpp"
#include "latalign/denoiser.hpp"
#include "latalign/sampler.hpp"
#include "latalign/schedule.hpp"
#include "latalign/tensor.hpp"

namespace latalign {

enum class Task { V2a, A2v, I2a, Joint };

const char* task_name(Task t);
Task parse_task(const std::string& name);

/// Knobs of the guided sampler. Defaults per task: v2a {lambda1 0.1,
/// optim_start 0.2}, a2v {0.01, 0}, i2a {0.1, 0.2}, joint {0.01 on the V
/// branch, 0.1 on the A branch, optim_start 0}; 30 inference steps, one
/// inner optimization step, seed 33 everywhere.
struct GuidanceConfig {
    Task task = Task::V2a;
    double lambda1 = 0.1;    // latent step size (cross-modal tasks)
    double lambda1_v = 0.01; // latent step size, joint V branch
    double lambda1_a = 0.1;  // latent step size, joint A branch
    double lambda2 = 0.01;   // prompt step size
    std::size_t num_optim_steps = 1;
    std::size_t inf_steps = 30;
    double optim_start = 0.2;  // fraction of denoising steps without guidance
    bool prompt_tuning = false;
    bool grad_through_denoiser = true;
    SamplerKind sampler = SamplerKind::Ddim;
    std::uint64_t seed = 33;

    void validate() const;
    static GuidanceConfig defaults_for(Task task);
};

/// Index of the first guided denoising step: floor(optim_start * inf_steps).
std::size_t first_guided_step(const GuidanceConfig& cfg);
std::size_t guided_step_count(const GuidanceConfig& cfg);

/// Dual loss for cross-modal generation: F(e_gen, e_cond) + F(e_gen, e_p)
/// when a prompt embedding is supplied, else the single condition term.
Tensor cross_guidance_loss(Tape* tape, const Tensor& e_gen, const Tensor& e_cond, const Tensor* e_prompt,
                           Task mode);

/// Triangle loss: F(e_v, e_p) + F(e_v, e_a) + F(e_a, e_p).
Tensor joint_guidance_loss(Tape* tape, const Tensor& e_v, const Tensor& e_a, const Tensor& e_p);

/// Scalar guidance loss rebuilt from a fresh latent each inner iteration.
using LossBuilder = std::function<Tensor(Tape* tape, const Tensor& z)>;

struct GuideStepResult {
    Tensor z;
    std::vector<double> losses;  // N+1 values: before each update and after the last
};

/// N plain gradient steps z <- z - lambda1 * dL/dz at schedule time t,
/// re-taping per iteration. The builder must also evaluate with a null tape
/// (pure forward) for the trailing loss value. With N == 0 or lambda1 == 0
/// the latent is returned bit-identically; losses always hold N+1 entries.
GuideStepResult guide_step(const Tensor& z_t, std::size_t t, const LossBuilder& build_loss, double lambda1,
                           std::size_t N);

/// y <- y - lambda2 * loss_grad.
Tensor prompt_tune_step(const Tensor& y, const Tensor& loss_grad, double lambda2);

struct StepTrace {
    std::size_t step_index = 0;  // denoising step, counted from the start
    std::size_t t = 0;           // schedule time the latent sits at
    std::vector<double> inner_losses;  // num_optim_steps + 1 values
    double alignment = 0.0;      // binder cosine at this step (gen vs cond, or v vs a)
};

struct GenerationResult {
    std::optional<Tensor> sample_v;  // decoded data-space samples
    std::optional<Tensor> sample_a;
    std::vector<StepTrace> steps;    // one entry per guided step
    Tensor prompt_embedding;         // conditioning embedding after the run
    bool prompt_tuned = false;
    double duration_ms = 0.0;
};

/// Everything a generation run needs; trained once, shared read-only.
struct ModelBundle {
    NoiseSchedule schedule;
    DenoiserModel den_v;
    DenoiserModel den_a;
    Autoencoder ae_v;
    Autoencoder ae_a;
    PromptTable prompts;
    BinderModel binder;

    const DenoiserModel& denoiser(Modality m) const;
    const Autoencoder& autoencoder(Modality m) const;
};

/// Modality generated (and conditioned on) per cross-modal task.
Modality generated_modality(Task task);
Modality condition_modality(Task task);

/// Guided cross-modal generation (v2a / a2v / i2a). The condition sample is
/// embedded once up front and held fixed; the class prompt, when present,
/// both conditions the denoiser and contributes the prompt term of the dual
/// loss. Without a prompt the denoiser is conditioned on the table mean and
/// the loss keeps only the condition term.
GenerationResult run_cross_modal(const Tensor& condition_sample, std::optional<std::size_t> class_prompt,
                                 const ModelBundle& bundle, const GuidanceConfig& cfg);

/// Joint bidirectional generation: both branches are denoised in lockstep
/// and every guided step runs the inner loop on the triangle loss, updating
/// both latents (per-branch rates) and, when enabled, the shared prompt.
GenerationResult run_joint(std::size_t class_prompt, const ModelBundle& bundle, const GuidanceConfig& cfg);

}  // namespace latalign
