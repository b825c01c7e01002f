#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "latalign/guidance.hpp"

namespace latalign {

/// Where a resolved config value came from; echoed into every artifact.
enum class ValueSource { Default, TaskDefault, File, Flag };

const char* value_source_name(ValueSource s);

/// Flat experiment configuration. Every field has a default; file values
/// override defaults and flag values override both. lambda1/optim_start/
/// prompt_tuning resolve per task when left unset.
struct ExperimentConfig {
    // synthetic world
    std::size_t factor_dim = 4;
    std::size_t classes = 8;
    std::size_t dv = 32;
    std::size_t da = 32;
    double sigma = 0.05;
    double jitter = 0.25;
    std::uint64_t map_seed_v = 101;
    std::uint64_t map_seed_a = 202;
    std::size_t train_per_class = 256;
    std::size_t holdout_per_class = 32;

    // diffusion substrate
    std::size_t timesteps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    std::string autoencoder = "identity";  // identity | affine
    std::size_t latent_dim = 0;            // 0 -> data width
    std::size_t denoiser_hidden = 64;
    std::size_t time_dim = 16;
    std::size_t cond_dim = 8;
    std::size_t denoiser_epochs = 40;
    std::size_t binder_epochs = 30;
    std::size_t ae_epochs = 50;
    std::size_t batch_size = 32;
    double lr = 1e-3;

    // binder
    std::size_t embed_dim = 16;
    std::size_t binder_hidden = 64;
    double tau = 0.07;

    // guidance
    std::string task = "v2a";
    double lambda1 = -1.0;      // < 0 -> per-task default
    double lambda1_v = -1.0;    // joint V branch
    double lambda1_a = -1.0;    // joint A branch
    double lambda2 = 0.01;
    std::size_t num_optim_steps = 1;
    std::size_t inf_steps = 30;
    double optim_start = -1.0;  // < 0 -> per-task default
    std::string prompt_tuning = "auto";  // auto | on | off
    bool grad_through_denoiser = true;
    std::string sampler = "ddim";  // ddim | ddpm
    double caption_noise = 0.5;    // probability a run's caption class is resampled uniformly

    // harness
    std::uint64_t seed = 33;
    std::size_t runs = 64;
    std::size_t threads = 0;  // 0 -> hardware concurrency
    std::string out_dir = "out";
    std::string sweep_lambda1 = "0,0.01,0.1";
    std::string sweep_optim_start = "0,0.2";
    std::string sweep_num_optim_steps = "1";

    std::map<std::string, ValueSource> sources;

    Task parsed_task() const { return parse_task(task); }
    SamplerKind parsed_sampler() const;
    AutoencoderKind parsed_autoencoder() const;

    /// GuidanceConfig with per-task defaults filled in for unset fields.
    GuidanceConfig guidance() const;
    std::size_t resolved_latent_dim(Modality m) const;
    std::size_t data_dim(Modality m) const;
};

/// Parse `key = value` lines (# comments, blank lines allowed), then apply
/// flag overrides. Unknown keys are errors naming the key; values are
/// validated after resolution.
ExperimentConfig parse_config(const std::optional<std::string>& file_path,
                              const std::vector<std::pair<std::string, std::string>>& flag_overrides);

/// Resolved key = value listing with provenance comments; embedded in every
/// output artifact.
std::string config_echo(const ExperimentConfig& cfg);

std::vector<double> parse_double_list(const std::string& csv);
std::vector<std::size_t> parse_size_list(const std::string& csv);

}  // namespace latalign
