#pragma once

#include <functional>
#include <string>

#include "latalign/config.hpp"
#include "latalign/guidance.hpp"
#include "latalign/metrics.hpp"
#include "latalign/results_io.hpp"
#include "latalign/world.hpp"

namespace latalign {

/// Fixed derivation indices for every component stream; all randomness in a
/// pipeline run flows from the master seed through derive_stream with these.
namespace seed_index {
inline constexpr std::uint64_t kWorld = 20;
inline constexpr std::uint64_t kTrainData = 21;
inline constexpr std::uint64_t kHoldoutData = 22;
inline constexpr std::uint64_t kDenoiserTrainV = 23;
inline constexpr std::uint64_t kDenoiserTrainA = 24;
inline constexpr std::uint64_t kBinderTrain = 25;
inline constexpr std::uint64_t kAutoencoderV = 26;
inline constexpr std::uint64_t kAutoencoderA = 27;
inline constexpr std::uint64_t kDenoiserInitV = 31;
inline constexpr std::uint64_t kDenoiserInitA = 32;
inline constexpr std::uint64_t kBinderInit = 33;
inline constexpr std::uint64_t kPromptInit = 34;
inline constexpr std::uint64_t kRunBase = 1000;       // + run index
inline constexpr std::uint64_t kConditionDraw = 11;   // within a run stream
inline constexpr std::uint64_t kCaptionDraw = 12;
inline constexpr std::uint64_t kReferenceBase = 5000; // + sample index, for eval references
}  // namespace seed_index

struct OutPaths {
    std::string dataset;
    std::string holdout;
    std::string denoiser_v;
    std::string denoiser_a;
    std::string binder;
    std::string prompts;
    std::string ae_v;
    std::string ae_a;
    std::string results;
    std::string eval_csv;
    std::string summary;
    std::string sweep_csv;
};

OutPaths out_paths(const ExperimentConfig& cfg);

WorldSpec world_spec_from(const ExperimentConfig& cfg);
World build_world(const ExperimentConfig& cfg);

/// Train autoencoders, both denoisers (the shared prompt table learns with
/// the V denoiser and freezes afterwards), and the binder.
ModelBundle train_bundle(const ExperimentConfig& cfg, const Dataset& train);

ModelBundle load_bundle(const ExperimentConfig& cfg);
void save_bundle(const ModelBundle& bundle, const ExperimentConfig& cfg);

/// Paired vanilla/guided generations for cfg.runs seeds. Cross-modal tasks
/// draw a fresh condition per run and condition the generator on a caption
/// class (the true class, resampled uniformly with probability
/// caption_noise); the joint task takes the run's class as the user prompt.
RunFile execute_runs(const ExperimentConfig& cfg, const ModelBundle& bundle, const World& world);

struct EvalArtifacts {
    EvalReport report;
    std::string csv;
    std::string summary;
};

EvalArtifacts evaluate_results(const ExperimentConfig& cfg, const RunFile& results,
                               const ModelBundle& bundle, const World& world);

int cmd_gen_data(const ExperimentConfig& cfg);
int cmd_train(const ExperimentConfig& cfg);
int cmd_run(const ExperimentConfig& cfg);
int cmd_eval(const ExperimentConfig& cfg);
int cmd_sweep(const ExperimentConfig& cfg);

/// Deterministic-output worker pool: fn(i) for i in [0, n), any thread
/// count. Exceptions are rethrown on the caller thread.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

void write_text_atomic(const std::string& path, const std::string& content);

}  // namespace latalign
