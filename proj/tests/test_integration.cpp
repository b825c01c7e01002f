// End-to-end behavior on a reduced world: full pipeline structure, no-op
// chains, reproducibility, and the effect of guided prompt tuning. The
// full-scale directional results live in the acceptance suite.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "latalign/harness.hpp"
#include "latalign/metrics.hpp"

using namespace latalign;

namespace {

ExperimentConfig small_config(const std::vector<std::pair<std::string, std::string>>& extra = {}) {
    std::vector<std::pair<std::string, std::string>> overrides = {
        {"factor_dim", "3"},      {"classes", "4"},
        {"dv", "16"},             {"da", "16"},
        {"train_per_class", "64"}, {"holdout_per_class", "16"},
        {"timesteps", "200"},     {"denoiser_epochs", "10"},
        {"binder_epochs", "10"},  {"batch_size", "16"},
        {"inf_steps", "10"},      {"runs", "16"},
        {"threads", "2"},
    };
    overrides.insert(overrides.end(), extra.begin(), extra.end());
    return parse_config(std::nullopt, overrides);
}

struct Fixture {
    ExperimentConfig cfg;
    World world;
    Dataset train;
    ModelBundle bundle;
};

const Fixture& fixture() {
    static const Fixture f = [] {
        Fixture fx{small_config(), {}, {}, {}};
        fx.world = build_world(fx.cfg);
        fx.train = generate_dataset(fx.world, fx.cfg.train_per_class,
                                    derive_stream(fx.cfg.seed, seed_index::kTrainData));
        fx.bundle = train_bundle(fx.cfg, fx.train);
        return fx;
    }();
    return f;
}

}  // namespace

TEST_CASE("pipeline produces paired runs, CSV rows, and a coherent report") {
    const Fixture& fx = fixture();
    RunFile results = execute_runs(fx.cfg, fx.bundle, fx.world);
    REQUIRE(results.runs.size() == 16);
    for (std::size_t i = 0; i < results.runs.size(); ++i) {
        CHECK(results.runs[i].run_index == i);
        CHECK(results.runs[i].guided.steps.size() == guided_step_count(fx.cfg.guidance()));
        CHECK(results.runs[i].condition.numel() == fx.cfg.dv);  // v2a conditions on v
        CHECK(results.runs[i].guided.sample_a.has_value());
    }

    EvalArtifacts artifacts = evaluate_results(fx.cfg, results, fx.bundle, fx.world);
    CHECK(artifacts.report.pairs == 16);
    CHECK(artifacts.report.records.size() == 3 * 16);

    std::size_t rows = 0;
    std::istringstream csv(artifacts.csv);
    for (std::string line; std::getline(csv, line);) {
        if (!line.empty() && line[0] != '#' && line.rfind("task,", 0) != 0) ++rows;
    }
    CHECK(rows == 16);
    CHECK(artifacts.csv.find("seed = 33") != std::string::npos);  // config echo embedded
    CHECK(artifacts.summary.find("alignment guided mean") != std::string::npos);
}

TEST_CASE("zero-rate guidance yields zero eval differences") {
    const Fixture& fx = fixture();
    ExperimentConfig cfg = small_config({{"lambda1", "0"}, {"lambda2", "0"}, {"runs", "8"}});
    RunFile results = execute_runs(cfg, fx.bundle, fx.world);
    EvalArtifacts artifacts = evaluate_results(cfg, results, fx.bundle, fx.world);
    CHECK(artifacts.report.align_mean_diff == 0.0);
    CHECK(artifacts.report.align_sign_p == 1.0);
    CHECK(artifacts.report.triangle_mean_vanilla == artifacts.report.triangle_mean_guided);
    CHECK(artifacts.report.mmd_vanilla == artifacts.report.mmd_guided);
}

TEST_CASE("repeated execution is byte-identical in the payload region") {
    const Fixture& fx = fixture();
    ExperimentConfig cfg = small_config({{"runs", "6"}});
    RunFile r1 = execute_runs(cfg, fx.bundle, fx.world);
    RunFile r2 = execute_runs(cfg, fx.bundle, fx.world);

    namespace fsys = std::filesystem;
    const std::string p1 = (fsys::temp_directory_path() / "latalign_int_1.shrr").string();
    const std::string p2 = (fsys::temp_directory_path() / "latalign_int_2.shrr").string();
    save_results(r1, p1);
    save_results(r2, p2);
    CHECK(results_payload_bytes(p1) == results_payload_bytes(p2));
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("guided runs beat vanilla alignment on the reduced world") {
    const Fixture& fx = fixture();
    ExperimentConfig cfg = small_config({{"runs", "32"}});
    RunFile results = execute_runs(cfg, fx.bundle, fx.world);
    EvalArtifacts artifacts = evaluate_results(cfg, results, fx.bundle, fx.world);
    CHECK(artifacts.report.align_mean_guided > artifacts.report.align_mean_vanilla);
    CHECK(artifacts.report.align_sign_p < 0.05);
}

TEST_CASE("guided prompt tuning lowers the final guidance loss it optimizes") {
    const Fixture& fx = fixture();

    auto final_losses = [&](bool tuning) {
        ExperimentConfig cfg = small_config({{"task", "a2v"},
                                             {"runs", "32"},
                                             {"prompt_tuning", tuning ? "on" : "off"}});
        RunFile results = execute_runs(cfg, fx.bundle, fx.world);
        std::vector<double> losses;
        std::vector<double> aligns;
        for (const RunRecord& rec : results.runs) {
            losses.push_back(rec.guided.steps.back().inner_losses.back());
            aligns.push_back(rec.guided.steps.back().alignment);
            CHECK(rec.guided.prompt_tuned == tuning);
        }
        return std::make_pair(losses, aligns);
    };

    auto [tuned_losses, tuned_aligns] = final_losses(true);
    auto [plain_losses, plain_aligns] = final_losses(false);

    double tuned_mean = 0.0, plain_mean = 0.0;
    std::size_t wins = 0, losses_n = 0;
    bool any_alignment_difference = false;
    for (std::size_t i = 0; i < tuned_losses.size(); ++i) {
        tuned_mean += tuned_losses[i];
        plain_mean += plain_losses[i];
        if (tuned_losses[i] < plain_losses[i]) ++wins;
        if (tuned_losses[i] > plain_losses[i]) ++losses_n;
        if (tuned_aligns[i] != plain_aligns[i]) any_alignment_difference = true;
    }
    tuned_mean /= static_cast<double>(tuned_losses.size());
    plain_mean /= static_cast<double>(plain_losses.size());

    CHECK(any_alignment_difference);
    CHECK(tuned_mean <= plain_mean);
    MESSAGE("prompt tuning paired comparison: tuned ", tuned_mean, " vs untuned ", plain_mean,
            ", sign-test p = ", sign_test_p(wins, losses_n));
}

TEST_CASE("a fully trained denoiser recovers most of the injected noise") {
    // Default-scale training for the V branch only; the predicted noise must
    // beat the zero predictor by at least half on held-out pairs.
    ExperimentConfig cfg = parse_config(std::nullopt, {});
    World world = build_world(cfg);
    Dataset train = generate_dataset(world, cfg.train_per_class, derive_stream(cfg.seed, seed_index::kTrainData));
    Dataset held = generate_dataset(world, cfg.holdout_per_class, derive_stream(cfg.seed, seed_index::kHoldoutData));

    NoiseSchedule schedule = make_linear_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end);
    Rng prompt_rng(derive_stream(cfg.seed, seed_index::kPromptInit));
    PromptTable prompts = PromptTable::init(cfg.classes, cfg.cond_dim, prompt_rng);
    Rng init_rng(derive_stream(cfg.seed, seed_index::kDenoiserInitV));
    DenoiserModel model = DenoiserModel::init(cfg.dv, cfg.cond_dim, init_rng, cfg.denoiser_hidden, cfg.time_dim);
    const Autoencoder ae = Autoencoder::identity(cfg.dv);
    std::vector<std::pair<Tensor, std::size_t>> pairs;
    for (const PairedSample& s : train.samples) pairs.emplace_back(s.v, s.class_id);
    train_denoiser(model, prompts, true, pairs, ae, schedule,
                   {cfg.denoiser_epochs, cfg.batch_size, cfg.lr,
                    derive_stream(cfg.seed, seed_index::kDenoiserTrainV)});

    Rng probe(999);
    double mae_model = 0.0, mae_zero = 0.0;
    std::size_t n = 0;
    for (const PairedSample& s : held.samples) {
        const std::size_t t = 1 + probe.index(schedule.T);
        Tensor eps = probe.normal_tensor({cfg.dv});
        Tensor z_t = q_sample(s.v, t, eps, schedule);
        Tensor eps_hat = model.forward(nullptr, z_t, t, prompts.row(s.class_id));
        for (std::size_t k = 0; k < eps.numel(); ++k) {
            mae_model += std::abs(eps.data[k] - eps_hat.data[k]);
            mae_zero += std::abs(eps.data[k]);
            ++n;
        }
    }
    CHECK(mae_model < 0.5 * mae_zero);
    MESSAGE("held-out noise MAE ", mae_model / static_cast<double>(n), " vs zero-predictor ",
            mae_zero / static_cast<double>(n));
}

TEST_CASE("cli-style command chain over the filesystem") {
    namespace fsys = std::filesystem;
    const std::string dir = (fsys::temp_directory_path() / "latalign_int_cli").string();
    fsys::remove_all(dir);

    ExperimentConfig cfg = small_config({{"out_dir", dir}, {"runs", "6"}});
    CHECK_THROWS_AS(cmd_train(cfg), std::runtime_error);  // dataset missing
    CHECK(cmd_gen_data(cfg) == 0);
    CHECK(cmd_train(cfg) == 0);
    CHECK(cmd_run(cfg) == 0);
    CHECK(cmd_eval(cfg) == 0);
    CHECK(fsys::exists(out_paths(cfg).eval_csv));
    CHECK(fsys::exists(out_paths(cfg).summary));

    ExperimentConfig sweep_cfg = small_config({{"out_dir", dir},
                                               {"runs", "4"},
                                               {"sweep_lambda1", "0,0.1"},
                                               {"sweep_optim_start", "0,0.2"},
                                               {"sweep_num_optim_steps", "1"}});
    CHECK(cmd_sweep(sweep_cfg) == 0);
    std::ifstream sweep_file(out_paths(sweep_cfg).sweep_csv);
    std::size_t cells = 0;
    bool saw_header = false;
    for (std::string line; std::getline(sweep_file, line);) {
        if (line.rfind("lambda1,", 0) == 0) {
            saw_header = true;
            continue;
        }
        if (!line.empty() && line[0] != '#') ++cells;
    }
    CHECK(saw_header);
    CHECK(cells == 4);  // 2 x 2 x 1 grid

    fsys::remove_all(dir);
}
