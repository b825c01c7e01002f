#include "latalign/guidance.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "latalign/rng.hpp"

namespace latalign {

const char* task_name(Task t) {
    switch (t) {
        case Task::V2a: return "v2a";
        case Task::A2v: return "a2v";
        case Task::I2a: return "i2a";
        case Task::Joint: return "joint";
    }
    return "?";
}

Task parse_task(const std::string& name) {
    if (name == "v2a") return Task::V2a;
    if (name == "a2v") return Task::A2v;
    if (name == "i2a") return Task::I2a;
    if (name == "joint") return Task::Joint;
    throw std::invalid_argument("unknown task: " + name);
}

void GuidanceConfig::validate() const {
    if (lambda1 < 0.0 || lambda1_v < 0.0 || lambda1_a < 0.0 || lambda2 < 0.0) {
        throw std::invalid_argument("guidance config: step sizes must be >= 0");
    }
    if (optim_start < 0.0 || optim_start > 1.0) {
        throw std::invalid_argument("guidance config: optim_start must be in [0, 1]");
    }
    if (inf_steps == 0) throw std::invalid_argument("guidance config: inf_steps must be positive");
}

GuidanceConfig GuidanceConfig::defaults_for(Task task) {
    GuidanceConfig cfg;
    cfg.task = task;
    switch (task) {
        case Task::V2a:
            cfg.lambda1 = 0.1;
            cfg.optim_start = 0.2;
            cfg.prompt_tuning = false;
            break;
        case Task::A2v:
            cfg.lambda1 = 0.01;
            cfg.optim_start = 0.0;
            cfg.prompt_tuning = true;
            break;
        case Task::I2a:
            cfg.lambda1 = 0.1;
            cfg.optim_start = 0.2;
            cfg.prompt_tuning = false;
            break;
        case Task::Joint:
            cfg.lambda1_v = 0.01;
            cfg.lambda1_a = 0.1;
            cfg.optim_start = 0.0;
            cfg.prompt_tuning = true;
            break;
    }
    return cfg;
}

std::size_t first_guided_step(const GuidanceConfig& cfg) {
    return static_cast<std::size_t>(std::floor(cfg.optim_start * static_cast<double>(cfg.inf_steps)));
}

std::size_t guided_step_count(const GuidanceConfig& cfg) { return cfg.inf_steps - first_guided_step(cfg); }

namespace {

void check_unit(const Tensor& e, const char* who) {
    if (!e.is_vector()) throw std::invalid_argument(std::string(who) + ": embedding must be a vector");
    if (std::abs(e.l2_norm() - 1.0) > 1e-6) {
        throw std::invalid_argument(std::string(who) + ": embedding is not unit-norm");
    }
}

void check_finite_grad(const Tensor& g, std::size_t step_index, std::size_t t) {
    if (!g.all_finite()) {
        throw std::runtime_error("guidance aborted: non-finite gradient at step " +
                                 std::to_string(step_index) + " (t=" + std::to_string(t) + ")");
    }
}

Tensor apply_update(const Tensor& x, const Tensor& grad, double rate) {
    Tensor out = x.detached();
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] -= rate * grad.data[i];
    return out;
}

double dot_value(const Tensor& a, const Tensor& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) d += a.data[i] * b.data[i];
    return d;
}

}  // namespace

Tensor cross_guidance_loss(Tape* tape, const Tensor& e_gen, const Tensor& e_cond, const Tensor* e_prompt,
                           Task mode) {
    if (mode == Task::Joint) throw std::invalid_argument("cross_guidance_loss: joint mode has its own loss");
    check_unit(e_gen, "cross_guidance_loss");
    check_unit(e_cond, "cross_guidance_loss");
    Tensor loss = embedding_distance_op(tape, e_gen, e_cond);
    if (e_prompt) {
        check_unit(*e_prompt, "cross_guidance_loss");
        loss = add(tape, loss, embedding_distance_op(tape, e_gen, *e_prompt));
    }
    return loss;
}

Tensor joint_guidance_loss(Tape* tape, const Tensor& e_v, const Tensor& e_a, const Tensor& e_p) {
    check_unit(e_v, "joint_guidance_loss");
    check_unit(e_a, "joint_guidance_loss");
    check_unit(e_p, "joint_guidance_loss");
    Tensor loss = embedding_distance_op(tape, e_v, e_p);
    loss = add(tape, loss, embedding_distance_op(tape, e_v, e_a));
    return add(tape, loss, embedding_distance_op(tape, e_a, e_p));
}

GuideStepResult guide_step(const Tensor& z_t, std::size_t t, const LossBuilder& build_loss, double lambda1,
                           std::size_t N) {
    GuideStepResult result;
    result.z = z_t.detached();
    const bool active = lambda1 != 0.0 && N > 0;
    for (std::size_t iter = 0; iter < N; ++iter) {
        if (active) {
            Tape tape;
            Tensor zv = tape.watch(result.z);
            Tensor loss = build_loss(&tape, zv);
            result.losses.push_back(loss.scalar_value());
            Tensor grad = tape.backward(loss).at(zv.node);
            check_finite_grad(grad, iter, t);
            result.z = apply_update(result.z, grad, lambda1);
        } else {
            result.losses.push_back(build_loss(nullptr, result.z).scalar_value());
        }
    }
    result.losses.push_back(build_loss(nullptr, result.z).scalar_value());
    return result;
}

Tensor prompt_tune_step(const Tensor& y, const Tensor& loss_grad, double lambda2) {
    if (!y.same_shape(loss_grad)) {
        throw std::invalid_argument("prompt_tune_step: gradient shape " + shape_str(loss_grad.shape) +
                                    " does not match embedding " + shape_str(y.shape));
    }
    return apply_update(y, loss_grad, lambda2);
}

const DenoiserModel& ModelBundle::denoiser(Modality m) const {
    if (m == Modality::V) return den_v;
    if (m == Modality::A) return den_a;
    throw std::invalid_argument("bundle: no denoiser for modality p");
}

const Autoencoder& ModelBundle::autoencoder(Modality m) const {
    if (m == Modality::V) return ae_v;
    if (m == Modality::A) return ae_a;
    throw std::invalid_argument("bundle: no autoencoder for modality p");
}

Modality generated_modality(Task task) {
    switch (task) {
        case Task::V2a:
        case Task::I2a: return Modality::A;
        case Task::A2v: return Modality::V;
        case Task::Joint: break;
    }
    throw std::invalid_argument("generated_modality: joint generates both");
}

Modality condition_modality(Task task) {
    switch (task) {
        case Task::V2a:
        case Task::I2a: return Modality::V;  // i2a conditions on a single frame of V
        case Task::A2v: return Modality::A;
        case Task::Joint: break;
    }
    throw std::invalid_argument("condition_modality: joint has no condition sample");
}

GenerationResult run_cross_modal(const Tensor& condition_sample, std::optional<std::size_t> class_prompt,
                                 const ModelBundle& bundle, const GuidanceConfig& cfg) {
    cfg.validate();
    if (cfg.task == Task::Joint) {
        throw std::invalid_argument("run_cross_modal: use run_joint for the joint task");
    }
    const auto t_start = std::chrono::steady_clock::now();

    const Modality gen_mod = generated_modality(cfg.task);
    const Modality cond_mod = condition_modality(cfg.task);
    const DenoiserModel& den = bundle.denoiser(gen_mod);
    const Autoencoder& ae = bundle.autoencoder(gen_mod);

    // Condition is embedded once; it does not depend on the trajectory.
    const Tensor e_cond = bundle.binder.embed(nullptr, cond_mod, condition_sample);

    Tensor y = class_prompt ? bundle.prompts.row(*class_prompt) : bundle.prompts.mean_row();
    const bool has_prompt = class_prompt.has_value();
    const bool tuning = cfg.prompt_tuning && has_prompt;
    // Fixed prompt embedding when not tuning; rebuilt from y per iteration
    // when tuning.
    Tensor e_prompt_fixed;
    if (has_prompt && !tuning) e_prompt_fixed = bundle.binder.embed(nullptr, Modality::P, y);

    GenerationResult result;
    const std::size_t start_idx = first_guided_step(cfg);
    const bool tunes = tuning && cfg.lambda2 != 0.0;
    const bool active = cfg.num_optim_steps > 0 && (cfg.lambda1 != 0.0 || tunes);

    GuideHook hook = [&](std::size_t step_index, std::size_t t, double ab, Tensor z) -> Tensor {
        if (step_index < start_idx) return z;

        // z0 -> decode -> embed -> loss; eps enters the graph only in
        // grad-through mode.
        auto build = [&](Tape* tape, const Tensor& zv, const Tensor& yv, Tensor* e_gen_out) -> Tensor {
            Tensor z0;
            if (ab == 1.0) {
                z0 = zv;
            } else {
                Tensor eps = cfg.grad_through_denoiser ? den.forward(tape, zv, t, yv)
                                                       : den.forward(nullptr, zv.detached(), t, yv.detached());
                z0 = predict_z0_on_tape(tape, zv, &eps, ab);
            }
            Tensor x = ae.decode(tape, z0);
            Tensor e_gen = bundle.binder.embed(tape, gen_mod, x);
            if (e_gen_out) *e_gen_out = e_gen;
            const Tensor* e_p = nullptr;
            Tensor e_p_storage;
            if (has_prompt) {
                if (tuning) {
                    e_p_storage = bundle.binder.embed(tape, Modality::P, yv);
                    e_p = &e_p_storage;
                } else {
                    e_p = &e_prompt_fixed;
                }
            }
            return cross_guidance_loss(tape, e_gen, e_cond, e_p, cfg.task);
        };

        StepTrace trace;
        trace.step_index = step_index;
        trace.t = t;
        for (std::size_t iter = 0; iter < cfg.num_optim_steps; ++iter) {
            if (active) {
                Tape tape;
                Tensor zv = tape.watch(z);
                Tensor yv = tuning ? tape.watch(y) : y;
                Tensor loss = build(&tape, zv, yv, nullptr);
                trace.inner_losses.push_back(loss.scalar_value());
                GradientMap grads = tape.backward(loss);
                if (cfg.lambda1 != 0.0) {
                    const Tensor& gz = grads.at(zv.node);
                    check_finite_grad(gz, step_index, t);
                    z = apply_update(z, gz, cfg.lambda1);
                }
                if (tunes) {
                    const Tensor& gy = grads.at(yv.node);
                    check_finite_grad(gy, step_index, t);
                    y = prompt_tune_step(y, gy, cfg.lambda2);
                }
            } else {
                trace.inner_losses.push_back(build(nullptr, z, y, nullptr).scalar_value());
            }
        }
        Tensor e_gen_final;
        trace.inner_losses.push_back(build(nullptr, z, y, &e_gen_final).scalar_value());
        trace.alignment = dot_value(e_gen_final, e_cond);
        result.steps.push_back(std::move(trace));
        return z;
    };

    Rng rng(cfg.seed);
    LatentTrajectory traj = sample_loop(den, y, bundle.schedule, cfg.inf_steps, cfg.sampler, rng, &hook);

    Tensor sample = ae.decode(nullptr, traj.latents.back());
    if (gen_mod == Modality::A) {
        result.sample_a = std::move(sample);
    } else {
        result.sample_v = std::move(sample);
    }
    result.prompt_embedding = y;
    result.prompt_tuned = tuning;
    result.duration_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

GenerationResult run_joint(std::size_t class_prompt, const ModelBundle& bundle, const GuidanceConfig& cfg) {
    cfg.validate();
    if (cfg.task != Task::Joint) throw std::invalid_argument("run_joint: config task must be joint");
    if (bundle.den_v.latent_dim == 0 || bundle.den_a.latent_dim == 0) {
        throw std::invalid_argument("run_joint: both denoisers required");
    }
    const auto t_start = std::chrono::steady_clock::now();

    const std::vector<std::size_t> grid = inference_grid(bundle.schedule.T, cfg.inf_steps);
    const std::size_t n_steps = cfg.inf_steps;
    const std::size_t start_idx = first_guided_step(cfg);
    const bool tuning = cfg.prompt_tuning;
    const bool tunes = tuning && cfg.lambda2 != 0.0;
    const bool active = (cfg.lambda1_v != 0.0 || cfg.lambda1_a != 0.0 || tunes) && cfg.num_optim_steps > 0;

    // Each branch owns the same stream a standalone vanilla run would use.
    Rng rng_v(derive_stream(cfg.seed, 1));
    Rng rng_a(derive_stream(cfg.seed, 2));

    Tensor y = bundle.prompts.row(class_prompt);
    Tensor z_v = rng_v.normal_tensor({bundle.den_v.latent_dim});
    Tensor z_a = rng_a.normal_tensor({bundle.den_a.latent_dim});

    GenerationResult result;

    auto build = [&](Tape* tape, const Tensor& zv, const Tensor& za, const Tensor& yv, std::size_t t,
                     double ab, Tensor* ev_out, Tensor* ea_out) -> Tensor {
        auto branch_z0 = [&](const DenoiserModel& den, const Tensor& z) -> Tensor {
            if (ab == 1.0) return z;
            Tensor eps = cfg.grad_through_denoiser ? den.forward(tape, z, t, yv)
                                                   : den.forward(nullptr, z.detached(), t, yv.detached());
            return predict_z0_on_tape(tape, z, &eps, ab);
        };
        Tensor e_v = bundle.binder.embed(tape, Modality::V, bundle.ae_v.decode(tape, branch_z0(bundle.den_v, zv)));
        Tensor e_a = bundle.binder.embed(tape, Modality::A, bundle.ae_a.decode(tape, branch_z0(bundle.den_a, za)));
        Tensor e_p = bundle.binder.embed(tape, Modality::P, yv);
        if (ev_out) *ev_out = e_v;
        if (ea_out) *ea_out = e_a;
        return joint_guidance_loss(tape, e_v, e_a, e_p);
    };

    for (std::size_t k = 0; k < n_steps; ++k) {
        const std::size_t t = grid[n_steps - 1 - k];
        const std::size_t t_prev = (k + 1 < n_steps) ? grid[n_steps - 2 - k] : 0;
        z_v = denoise_step(bundle.den_v, y, bundle.schedule, t, t_prev, cfg.sampler, rng_v, z_v);
        z_a = denoise_step(bundle.den_a, y, bundle.schedule, t, t_prev, cfg.sampler, rng_a, z_a);

        if (k < start_idx) continue;
        const double ab = bundle.schedule.alpha_bar(t_prev);

        StepTrace trace;
        trace.step_index = k;
        trace.t = t_prev;
        for (std::size_t iter = 0; iter < cfg.num_optim_steps; ++iter) {
            if (active) {
                Tape tape;
                Tensor zv = tape.watch(z_v);
                Tensor za = tape.watch(z_a);
                Tensor yv = tuning ? tape.watch(y) : y;
                Tensor loss = build(&tape, zv, za, yv, t_prev, ab, nullptr, nullptr);
                trace.inner_losses.push_back(loss.scalar_value());
                GradientMap grads = tape.backward(loss);
                if (cfg.lambda1_v != 0.0) {
                    const Tensor& gv = grads.at(zv.node);
                    check_finite_grad(gv, k, t_prev);
                    z_v = apply_update(z_v, gv, cfg.lambda1_v);
                }
                if (cfg.lambda1_a != 0.0) {
                    const Tensor& ga = grads.at(za.node);
                    check_finite_grad(ga, k, t_prev);
                    z_a = apply_update(z_a, ga, cfg.lambda1_a);
                }
                if (tunes) {
                    const Tensor& gy = grads.at(yv.node);
                    check_finite_grad(gy, k, t_prev);
                    y = prompt_tune_step(y, gy, cfg.lambda2);
                }
            } else {
                trace.inner_losses.push_back(build(nullptr, z_v, z_a, y, t_prev, ab, nullptr, nullptr).scalar_value());
            }
        }
        Tensor e_v_final, e_a_final;
        trace.inner_losses.push_back(
            build(nullptr, z_v, z_a, y, t_prev, ab, &e_v_final, &e_a_final).scalar_value());
        trace.alignment = dot_value(e_v_final, e_a_final);
        result.steps.push_back(std::move(trace));
    }

    result.sample_v = bundle.ae_v.decode(nullptr, z_v);
    result.sample_a = bundle.ae_a.decode(nullptr, z_a);
    result.prompt_embedding = y;
    result.prompt_tuned = tuning;
    result.duration_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

}  // namespace latalign
