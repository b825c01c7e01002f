// Acceptance suite: runs every release criterion at full scale and prints
// one pass/fail line each. Usage: acceptance <path-to-cli> <workdir>.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "graph_gen.hpp"
#include "latalign/checkpoint.hpp"
#include "latalign/gradcheck.hpp"
#include "latalign/harness.hpp"
#include "latalign/metrics.hpp"

using namespace latalign;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
    std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << criterion << ": " << detail << std::endl;
    if (!pass) ++g_failures;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Fixture {
    ExperimentConfig cfg;
    World world;
    Dataset train;
    Dataset holdout;
    ModelBundle bundle;
    double train_seconds = 0.0;
};

Fixture build_fixture() {
    Fixture fx{parse_config(std::nullopt, {}), {}, {}, {}, {}, 0.0};
    fx.world = build_world(fx.cfg);
    fx.train = generate_dataset(fx.world, fx.cfg.train_per_class,
                                derive_stream(fx.cfg.seed, seed_index::kTrainData));
    fx.holdout = generate_dataset(fx.world, fx.cfg.holdout_per_class,
                                  derive_stream(fx.cfg.seed, seed_index::kHoldoutData));
    const auto t0 = std::chrono::steady_clock::now();
    fx.bundle = train_bundle(fx.cfg, fx.train);
    fx.train_seconds = seconds_since(t0);
    return fx;
}

// ---- criterion 1: gradient fidelity ---------------------------------------

void criterion_gradients(const Fixture& fx) {
    const auto t0 = std::chrono::steady_clock::now();

    double worst_graph = 0.0;
    testing::GraphGen gen(33);
    for (int trial = 0; trial < 100; ++trial) {
        auto [recipe, leaves] = gen.make();
        Tape tape;
        std::vector<Tensor> watched;
        Tensor loss = testing::replay(recipe, leaves, &tape, &watched);
        GradientMap grads = tape.backward(loss);
        for (std::size_t leaf = 0; leaf < leaves.size(); ++leaf) {
            Tensor numeric = finite_diff_grad(
                [&](const Tensor& probe) {
                    std::vector<Tensor> patched = leaves;
                    patched[leaf] = probe;
                    return testing::replay(recipe, patched, nullptr).scalar_value();
                },
                leaves[leaf], 1e-5);
            worst_graph = std::max(worst_graph, max_rel_err(grads.at(watched[leaf].node), numeric));
        }
    }

    // 20 full guidance-loss states: random latents at random guided steps of
    // the default v2a chain, full gradient path through the denoiser.
    const ModelBundle& bundle = fx.bundle;
    const GuidanceConfig g = fx.cfg.guidance();
    const std::vector<std::size_t> grid = inference_grid(bundle.schedule.T, g.inf_steps);
    Rng rng(2024);
    const Tensor e_cond = bundle.binder.embed(nullptr, Modality::V, sample_pair(fx.world, 0, 77).v);
    const Tensor y = bundle.prompts.row(0);
    const Tensor e_p = bundle.binder.embed(nullptr, Modality::P, y);

    double worst_guidance = 0.0;
    for (int state = 0; state < 20; ++state) {
        const std::size_t t = grid[rng.index(grid.size() - 1)];
        const double ab = bundle.schedule.alpha_bar(t);
        auto loss_at = [&](Tape* tape, const Tensor& zv) {
            Tensor eps = bundle.den_a.forward(tape, zv, t, y);
            Tensor z0 = predict_z0_on_tape(tape, zv, &eps, ab);
            Tensor x = bundle.ae_a.decode(tape, z0);
            Tensor e_gen = bundle.binder.embed(tape, Modality::A, x);
            return cross_guidance_loss(tape, e_gen, e_cond, &e_p, Task::V2a);
        };
        Tensor z = rng.normal_tensor({bundle.den_a.latent_dim});
        Tape tape;
        Tensor zv = tape.watch(z);
        Tensor analytic = tape.backward(loss_at(&tape, zv)).at(zv.node);
        Tensor numeric = finite_diff_grad(
            [&](const Tensor& probe) { return loss_at(nullptr, probe).scalar_value(); }, z, 1e-5);
        worst_guidance = std::max(worst_guidance, max_rel_err(analytic, numeric));
    }

    const double secs = seconds_since(t0);
    std::ostringstream detail;
    detail << "gradient fidelity: 100 graphs max rel err " << worst_graph << " (<= 1e-5), 20 guidance states "
           << worst_guidance << " (<= 1e-4), " << secs << " s (< 30 s)";
    report(1, worst_graph <= 1e-5 && worst_guidance <= 1e-4 && secs < 30.0, detail.str());
}

// ---- criterion 2: diffusion identities ------------------------------------

void criterion_diffusion_identities() {
    const auto t0 = std::chrono::steady_clock::now();
    NoiseSchedule s = make_linear_schedule(1000, 1e-4, 0.02);

    double worst_identity = 0.0;
    double running = 1.0;
    for (std::size_t t = 1; t <= s.T; ++t) {
        worst_identity = std::max(worst_identity, std::abs(s.alpha_bar(t) / s.alpha_bar(t - 1) - s.alpha(t)));
        running *= s.alpha(t);
        worst_identity = std::max(worst_identity, std::abs(s.alpha_bar(t) - running));
    }

    Rng rng(33);
    double worst_roundtrip = 0.0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t dim = 2 + rng.index(30);
        Tensor z0 = rng.normal_tensor({dim});
        Tensor eps = rng.normal_tensor({dim});
        const std::size_t t = 1 + rng.index(s.T);
        Tensor rec = predict_z0(q_sample(z0, t, eps, s), eps, t, s);
        for (std::size_t j = 0; j < dim; ++j) {
            worst_roundtrip = std::max(worst_roundtrip, std::abs(rec.data[j] - z0.data[j]));
        }
    }

    const double secs = seconds_since(t0);
    std::ostringstream detail;
    detail << "diffusion identities: product identity err " << worst_identity << " (<= 1e-12), round trip err "
           << worst_roundtrip << " (<= 1e-9), " << secs << " s (< 1 s)";
    report(2, worst_identity <= 1e-12 && worst_roundtrip <= 1e-9 && secs < 1.0, detail.str());
}

// ---- criterion 3: no-op equivalence ----------------------------------------

void criterion_noop(const Fixture& fx) {
    bool all_equal = true;
    std::size_t checked = 0;
    for (Task task : {Task::V2a, Task::A2v, Task::I2a, Task::Joint}) {
        for (std::uint64_t i = 0; i < 8; ++i) {
            const std::uint64_t seed = derive_stream(fx.cfg.seed, 7000 + i);
            GuidanceConfig g = GuidanceConfig::defaults_for(task);
            g.seed = seed;
            g.lambda1 = 0.0;
            g.lambda1_v = 0.0;
            g.lambda1_a = 0.0;
            g.lambda2 = 0.0;

            if (task == Task::Joint) {
                GenerationResult guided = run_joint(i % fx.cfg.classes, fx.bundle, g);
                const Tensor y = fx.bundle.prompts.row(i % fx.cfg.classes);
                LatentTrajectory tv = sample_vanilla(fx.bundle.den_v, y, fx.bundle.schedule, g.inf_steps,
                                                     g.sampler, derive_stream(seed, 1));
                LatentTrajectory ta = sample_vanilla(fx.bundle.den_a, y, fx.bundle.schedule, g.inf_steps,
                                                     g.sampler, derive_stream(seed, 2));
                all_equal = all_equal && guided.sample_v->data == tv.latents.back().data &&
                            guided.sample_a->data == ta.latents.back().data;
            } else {
                const Modality gen_mod = generated_modality(task);
                const Modality cond_mod = condition_modality(task);
                const PairedSample cond = sample_pair(fx.world, i % fx.cfg.classes, derive_stream(seed, 3));
                const std::size_t cls = i % fx.cfg.classes;
                GenerationResult guided = run_cross_modal(cond_mod == Modality::V ? cond.v : cond.a, cls,
                                                          fx.bundle, g);
                LatentTrajectory vanilla = sample_vanilla(fx.bundle.denoiser(gen_mod), fx.bundle.prompts.row(cls),
                                                          fx.bundle.schedule, g.inf_steps, g.sampler, seed);
                const Tensor& gs = gen_mod == Modality::A ? *guided.sample_a : *guided.sample_v;
                all_equal = all_equal && gs.data == vanilla.latents.back().data;
            }
            ++checked;
        }
    }
    std::ostringstream detail;
    detail << "no-op equivalence: lambda1=lambda2=0 bit-identical to vanilla for " << checked
           << " runs (4 tasks x 8 seeds)";
    report(3, all_equal && checked == 32, detail.str());
}

// ---- criterion 4: binder quality -------------------------------------------

void criterion_binder(const Fixture& fx) {
    const RetrievalStats stats = binder_retrieval_stats(fx.bundle.binder, fx.holdout.samples);
    std::ostringstream detail;
    detail << "binder quality: matched-minus-mismatched gap " << stats.gap << " (>= 0.3), top-1 retrieval "
           << 100.0 * stats.top1_accuracy << "% (>= 80%) over " << stats.pairs
           << " held-out pairs, training took " << fx.train_seconds << " s (< 180 s)";
    report(4,
           stats.gap >= 0.3 && stats.top1_accuracy >= 0.8 && stats.pairs == 256 && fx.train_seconds < 180.0,
           detail.str());
}

// ---- criteria 5 and 6: guidance efficacy ------------------------------------

EvalReport run_and_compare(const Fixture& fx, const std::string& task, std::size_t runs) {
    ExperimentConfig cfg = fx.cfg;
    cfg.task = task;
    cfg.runs = runs;
    RunFile results = execute_runs(cfg, fx.bundle, fx.world);
    return evaluate_results(cfg, results, fx.bundle, fx.world).report;
}

void criterion_cross_efficacy(const Fixture& fx) {
    const EvalReport v2a = run_and_compare(fx, "v2a", 64);
    const EvalReport a2v = run_and_compare(fx, "a2v", 64);
    std::ostringstream detail;
    detail << "guidance efficacy: v2a align " << v2a.align_mean_vanilla << " -> " << v2a.align_mean_guided
           << " (rel " << v2a.align_rel_improvement << " >= 0.10, p " << v2a.align_sign_p << " < 0.01); a2v "
           << a2v.align_mean_vanilla << " -> " << a2v.align_mean_guided << " (rel "
           << a2v.align_rel_improvement << ", p " << a2v.align_sign_p << ")";
    const bool pass = v2a.align_sign_p < 0.01 && v2a.align_rel_improvement >= 0.10 &&
                      v2a.align_mean_guided > v2a.align_mean_vanilla && a2v.align_sign_p < 0.01 &&
                      a2v.align_rel_improvement >= 0.10 && a2v.align_mean_guided > a2v.align_mean_vanilla;
    report(5, pass, detail.str());
}

void criterion_joint_triangle(const Fixture& fx) {
    const EvalReport joint = run_and_compare(fx, "joint", 32);
    std::ostringstream detail;
    detail << "joint triangle reduction: mean " << joint.triangle_mean_vanilla << " -> "
           << joint.triangle_mean_guided << " over 32 matched-seed pairs, sign-test p "
           << joint.triangle_sign_p << " (< 0.01)";
    report(6,
           joint.triangle_mean_guided < joint.triangle_mean_vanilla && joint.triangle_sign_p < 0.01 &&
               joint.pairs == 32,
           detail.str());
}

// ---- criterion 7: guided-step accounting ------------------------------------

void criterion_step_accounting(const Fixture& fx) {
    GuidanceConfig g = GuidanceConfig::defaults_for(Task::V2a);
    g.optim_start = 0.2;
    g.inf_steps = 30;
    g.seed = fx.cfg.seed;
    const PairedSample cond = sample_pair(fx.world, 0, 42);
    GenerationResult r = run_cross_modal(cond.v, 0, fx.bundle, g);
    std::ostringstream detail;
    detail << "guided-step accounting: optim_start 0.2 with 30 inference steps records " << r.steps.size()
           << " guided steps (== 24), first at step index "
           << (r.steps.empty() ? 0 : r.steps.front().step_index) << " (== 6)";
    report(7,
           guided_step_count(g) == 24 && r.steps.size() == 24 && !r.steps.empty() &&
               r.steps.front().step_index == 6,
           detail.str());
}

// ---- criterion 8: determinism and persistence --------------------------------

void criterion_determinism(const Fixture& fx, const std::string& workdir) {
    fs::create_directories(workdir);
    bool ok = true;
    std::string note;

    ExperimentConfig cfg = fx.cfg;
    cfg.runs = 8;
    RunFile r1 = execute_runs(cfg, fx.bundle, fx.world);
    RunFile r2 = execute_runs(cfg, fx.bundle, fx.world);
    const std::string p1 = workdir + "/det1.shrr";
    const std::string p2 = workdir + "/det2.shrr";
    save_results(r1, p1);
    save_results(r2, p2);
    if (results_payload_bytes(p1) != results_payload_bytes(p2)) {
        ok = false;
        note += " result payloads differ;";
    }

    const std::string ckpt = workdir + "/det_binder.shla";
    save_binder(fx.bundle.binder, ckpt);
    BinderModel loaded = load_binder(ckpt);
    for (std::size_t l = 0; l < loaded.enc_v.layers.size(); ++l) {
        if (loaded.enc_v.layers[l].w.data != fx.bundle.binder.enc_v.layers[l].w.data) {
            ok = false;
            note += " checkpoint round trip differs;";
        }
    }
    {
        std::ifstream is(ckpt, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x10);
        std::ofstream os(ckpt, std::ios::binary | std::ios::trunc);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    try {
        load_binder(ckpt);
        ok = false;
        note += " corrupted checkpoint accepted;";
    } catch (const std::exception&) {
    }

    const std::string dpath = workdir + "/det_dataset.shds";
    save_dataset(fx.holdout, dpath);
    Dataset dloaded = load_dataset(dpath);
    for (std::size_t i = 0; i < dloaded.samples.size(); ++i) {
        if (dloaded.samples[i].v.data != fx.holdout.samples[i].v.data) {
            ok = false;
            note += " dataset round trip differs;";
            break;
        }
    }

    report(8, ok,
           "determinism and persistence: byte-identical payloads, bit-exact checkpoint/dataset round trips, "
           "corrupted checkpoint rejected" +
               (note.empty() ? "" : " BUT:" + note));
}

// ---- criterion 9: end-to-end budget ------------------------------------------

void criterion_budget(const std::string& cli, const std::string& workdir) {
    const std::string out = workdir + "/pipeline";
    fs::remove_all(out);
    fs::create_directories(out);
    const auto t0 = std::chrono::steady_clock::now();

    std::vector<std::string> commands = {
        cli + " gen-data --out " + out,
        cli + " train --out " + out,
        cli + " run --task v2a --runs 64 --out " + out,
        cli + " eval --task v2a --out " + out,
    };
    bool ok = true;
    for (const std::string& command : commands) {
        const int rc = std::system((command + " > " + out + "/step.log 2>&1").c_str());
        if (rc != 0) {
            ok = false;
            std::cout << "  command failed (" << rc << "): " << command << std::endl;
            break;
        }
    }
    const double secs = seconds_since(t0);

    std::size_t csv_rows = 0;
    if (ok) {
        std::ifstream csv(out + "/eval_v2a.csv");
        for (std::string line; std::getline(csv, line);) {
            if (!line.empty() && line[0] != '#' && line.rfind("task,", 0) != 0) ++csv_rows;
        }
    }
    std::ostringstream detail;
    detail << "end-to-end budget: gen-data -> train -> run(v2a, 64) -> eval in " << secs
           << " s (< 600 s), eval CSV has " << csv_rows << " paired rows (== 64)";
    report(9, ok && secs < 600.0 && csv_rows == 64, detail.str());
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 3) {
        std::cerr << "usage: acceptance <path-to-cli> <workdir>\n";
        return 2;
    }
    const std::string cli = argv[1];
    const std::string workdir = argv[2];

    const auto t0 = std::chrono::steady_clock::now();
    std::cout << "building shared fixture (default config, full training)..." << std::endl;
    Fixture fx = build_fixture();
    std::cout << "fixture ready in " << seconds_since(t0) << " s" << std::endl;

    criterion_gradients(fx);
    criterion_diffusion_identities();
    criterion_noop(fx);
    criterion_binder(fx);
    criterion_cross_efficacy(fx);
    criterion_joint_triangle(fx);
    criterion_step_accounting(fx);
    criterion_determinism(fx, workdir);
    criterion_budget(cli, workdir);

    std::cout << (g_failures == 0 ? "ALL CRITERIA PASSED" : "FAILURES: " + std::to_string(g_failures))
              << " (total " << seconds_since(t0) << " s)" << std::endl;
    return g_failures == 0 ? 0 : 1;
}
