#include "latalign/harness.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "latalign/checkpoint.hpp"
#include "latalign/version.hpp"

namespace latalign {

namespace fs = std::filesystem;

OutPaths out_paths(const ExperimentConfig& cfg) {
    const std::string base = cfg.out_dir + "/";
    OutPaths p;
    p.dataset = base + "dataset.shds";
    p.holdout = base + "holdout.shds";
    p.denoiser_v = base + "denoiser_v.shla";
    p.denoiser_a = base + "denoiser_a.shla";
    p.binder = base + "binder.shla";
    p.prompts = base + "prompts.shla";
    p.ae_v = base + "ae_v.shla";
    p.ae_a = base + "ae_a.shla";
    p.results = base + "results_" + cfg.task + ".shrr";
    p.eval_csv = base + "eval_" + cfg.task + ".csv";
    p.summary = base + "summary_" + cfg.task + ".txt";
    p.sweep_csv = base + "sweep_" + cfg.task + ".csv";
    return p;
}

WorldSpec world_spec_from(const ExperimentConfig& cfg) {
    WorldSpec spec;
    spec.factor_dim = cfg.factor_dim;
    spec.classes = cfg.classes;
    spec.dv = cfg.dv;
    spec.da = cfg.da;
    spec.sigma = cfg.sigma;
    spec.jitter = cfg.jitter;
    spec.map_seed_v = cfg.map_seed_v;
    spec.map_seed_a = cfg.map_seed_a;
    return spec;
}

World build_world(const ExperimentConfig& cfg) {
    return make_world(world_spec_from(cfg), derive_stream(cfg.seed, seed_index::kWorld));
}

namespace {

Autoencoder make_autoencoder(const ExperimentConfig& cfg, Modality m, const Dataset& train,
                             std::uint64_t init_seed, std::uint64_t train_seed) {
    const std::size_t dim = cfg.data_dim(m);
    if (cfg.parsed_autoencoder() == AutoencoderKind::Identity) return Autoencoder::identity(dim);
    Rng rng(init_seed);
    Autoencoder ae = Autoencoder::affine(dim, cfg.resolved_latent_dim(m), rng);
    std::vector<Tensor> data;
    data.reserve(train.samples.size());
    for (const PairedSample& s : train.samples) data.push_back(m == Modality::V ? s.v : s.a);
    TrainConfig tc{cfg.ae_epochs, cfg.batch_size, cfg.lr, train_seed};
    train_autoencoder(ae, data, tc);
    return ae;
}

std::vector<std::pair<Tensor, std::size_t>> modality_pairs(const Dataset& ds, Modality m) {
    std::vector<std::pair<Tensor, std::size_t>> out;
    out.reserve(ds.samples.size());
    for (const PairedSample& s : ds.samples) {
        out.emplace_back(m == Modality::V ? s.v : s.a, s.class_id);
    }
    return out;
}

}  // namespace

ModelBundle train_bundle(const ExperimentConfig& cfg, const Dataset& train) {
    ModelBundle bundle;
    bundle.schedule = make_linear_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end);

    bundle.ae_v = make_autoencoder(cfg, Modality::V, train, derive_stream(cfg.seed, seed_index::kAutoencoderV),
                                   derive_stream(cfg.seed, seed_index::kAutoencoderV + 100));
    bundle.ae_a = make_autoencoder(cfg, Modality::A, train, derive_stream(cfg.seed, seed_index::kAutoencoderA),
                                   derive_stream(cfg.seed, seed_index::kAutoencoderA + 100));

    {
        Rng rng(derive_stream(cfg.seed, seed_index::kPromptInit));
        bundle.prompts = PromptTable::init(cfg.classes, cfg.cond_dim, rng);
    }
    {
        Rng rng(derive_stream(cfg.seed, seed_index::kDenoiserInitV));
        bundle.den_v = DenoiserModel::init(cfg.resolved_latent_dim(Modality::V), cfg.cond_dim, rng,
                                           cfg.denoiser_hidden, cfg.time_dim);
        TrainConfig tc{cfg.denoiser_epochs, cfg.batch_size, cfg.lr,
                       derive_stream(cfg.seed, seed_index::kDenoiserTrainV)};
        // The shared prompt table is learned here and frozen afterwards.
        train_denoiser(bundle.den_v, bundle.prompts, true, modality_pairs(train, Modality::V), bundle.ae_v,
                       bundle.schedule, tc);
    }
    {
        Rng rng(derive_stream(cfg.seed, seed_index::kDenoiserInitA));
        bundle.den_a = DenoiserModel::init(cfg.resolved_latent_dim(Modality::A), cfg.cond_dim, rng,
                                           cfg.denoiser_hidden, cfg.time_dim);
        TrainConfig tc{cfg.denoiser_epochs, cfg.batch_size, cfg.lr,
                       derive_stream(cfg.seed, seed_index::kDenoiserTrainA)};
        train_denoiser(bundle.den_a, bundle.prompts, false, modality_pairs(train, Modality::A), bundle.ae_a,
                       bundle.schedule, tc);
    }
    {
        Rng rng(derive_stream(cfg.seed, seed_index::kBinderInit));
        bundle.binder =
            BinderModel::init(cfg.dv, cfg.da, cfg.cond_dim, cfg.embed_dim, cfg.tau, rng, cfg.binder_hidden);
        TrainConfig tc{cfg.binder_epochs, cfg.batch_size, cfg.lr,
                       derive_stream(cfg.seed, seed_index::kBinderTrain)};
        train_binder(bundle.binder, train.samples, bundle.prompts, tc);
    }
    return bundle;
}

void save_bundle(const ModelBundle& bundle, const ExperimentConfig& cfg) {
    const OutPaths paths = out_paths(cfg);
    save_denoiser(bundle.den_v, paths.denoiser_v);
    save_denoiser(bundle.den_a, paths.denoiser_a);
    save_binder(bundle.binder, paths.binder);
    save_prompt_table(bundle.prompts, paths.prompts);
    save_autoencoder(bundle.ae_v, paths.ae_v);
    save_autoencoder(bundle.ae_a, paths.ae_a);
}

ModelBundle load_bundle(const ExperimentConfig& cfg) {
    const OutPaths paths = out_paths(cfg);
    for (const std::string& p : {paths.denoiser_v, paths.denoiser_a, paths.binder, paths.prompts}) {
        if (!fs::exists(p)) {
            throw std::runtime_error("missing prerequisite: checkpoint " + p + " (run 'train' first)");
        }
    }
    ModelBundle bundle;
    bundle.schedule = make_linear_schedule(cfg.timesteps, cfg.beta_start, cfg.beta_end);
    bundle.den_v = load_denoiser(paths.denoiser_v);
    bundle.den_a = load_denoiser(paths.denoiser_a);
    bundle.binder = load_binder(paths.binder);
    bundle.prompts = load_prompt_table(paths.prompts);
    bundle.ae_v = load_autoencoder(paths.ae_v);
    bundle.ae_a = load_autoencoder(paths.ae_a);
    return bundle;
}

namespace {

GenerationResult vanilla_cross(const ModelBundle& bundle, const GuidanceConfig& g, const Tensor& y) {
    const auto t0 = std::chrono::steady_clock::now();
    const Modality gen_mod = generated_modality(g.task);
    LatentTrajectory traj =
        sample_vanilla(bundle.denoiser(gen_mod), y, bundle.schedule, g.inf_steps, g.sampler, g.seed);
    GenerationResult r;
    Tensor sample = bundle.autoencoder(gen_mod).decode(nullptr, traj.latents.back());
    if (gen_mod == Modality::A) {
        r.sample_a = std::move(sample);
    } else {
        r.sample_v = std::move(sample);
    }
    r.prompt_embedding = y;
    r.duration_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

GenerationResult vanilla_joint(const ModelBundle& bundle, const GuidanceConfig& g, const Tensor& y) {
    const auto t0 = std::chrono::steady_clock::now();
    LatentTrajectory tv = sample_vanilla(bundle.den_v, y, bundle.schedule, g.inf_steps, g.sampler,
                                         derive_stream(g.seed, 1));
    LatentTrajectory ta = sample_vanilla(bundle.den_a, y, bundle.schedule, g.inf_steps, g.sampler,
                                         derive_stream(g.seed, 2));
    GenerationResult r;
    r.sample_v = bundle.ae_v.decode(nullptr, tv.latents.back());
    r.sample_a = bundle.ae_a.decode(nullptr, ta.latents.back());
    r.prompt_embedding = y;
    r.duration_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

}  // namespace

RunFile execute_runs(const ExperimentConfig& cfg, const ModelBundle& bundle, const World& world) {
    const Task task = cfg.parsed_task();
    const GuidanceConfig base = cfg.guidance();

    RunFile file;
    file.task = cfg.task;
    file.config_echo = config_echo(cfg);
    file.runs.resize(cfg.runs);

    parallel_for(cfg.runs, cfg.threads, [&](std::size_t i) {
        RunRecord rec;
        rec.run_index = i;
        rec.run_seed = derive_stream(cfg.seed, seed_index::kRunBase + i);
        rec.true_class = i % cfg.classes;

        GuidanceConfig g = base;
        g.seed = rec.run_seed;

        if (task == Task::Joint) {
            rec.caption_class = static_cast<std::ptrdiff_t>(rec.true_class);
            const Tensor y = bundle.prompts.row(rec.true_class);
            rec.vanilla = vanilla_joint(bundle, g, y);
            rec.guided = run_joint(rec.true_class, bundle, g);
        } else {
            const PairedSample cond =
                sample_pair(world, rec.true_class, derive_stream(rec.run_seed, seed_index::kConditionDraw));
            rec.condition = condition_modality(task) == Modality::V ? cond.v : cond.a;

            // Caption analog of a lossy auto-caption: with probability
            // caption_noise the class label conditioning the generator is
            // resampled uniformly.
            Rng cap_rng(derive_stream(rec.run_seed, seed_index::kCaptionDraw));
            std::size_t caption = rec.true_class;
            if (cap_rng.uniform() < cfg.caption_noise) caption = cap_rng.index(cfg.classes);
            rec.caption_class = static_cast<std::ptrdiff_t>(caption);

            const Tensor y = bundle.prompts.row(caption);
            rec.vanilla = vanilla_cross(bundle, g, y);
            rec.guided = run_cross_modal(rec.condition, caption, bundle, g);
        }
        file.runs[i] = std::move(rec);
    });
    return file;
}

namespace {

struct RunEval {
    RunOutcome outcome;
};

RunOutcome eval_one(const ExperimentConfig& cfg, const ModelBundle& bundle, const RunRecord& rec,
                    const GenerationResult& gen, Task task) {
    RunOutcome o;
    o.seed = rec.run_seed;
    o.condition_key = rec.true_class * 257 + static_cast<std::uint64_t>(rec.caption_class + 1);
    o.runtime_ms = gen.duration_ms;

    const Tensor e_p = bundle.binder.embed(nullptr, Modality::P, gen.prompt_embedding);
    Tensor e_v, e_a;
    if (task == Task::Joint) {
        e_v = bundle.binder.embed(nullptr, Modality::V, *gen.sample_v);
        e_a = bundle.binder.embed(nullptr, Modality::A, *gen.sample_a);
        o.alignment = 0.0;
        for (std::size_t i = 0; i < e_v.numel(); ++i) o.alignment += e_v.data[i] * e_a.data[i];
        o.sample = *gen.sample_a;
    } else {
        const Modality gen_mod = generated_modality(task);
        const Tensor e_gen = bundle.binder.embed(nullptr, gen_mod, gen_mod == Modality::A ? *gen.sample_a
                                                                                          : *gen.sample_v);
        const Tensor e_cond = bundle.binder.embed(nullptr, condition_modality(task), rec.condition);
        o.alignment = 0.0;
        for (std::size_t i = 0; i < e_gen.numel(); ++i) o.alignment += e_gen.data[i] * e_cond.data[i];
        if (gen_mod == Modality::A) {
            e_a = e_gen;
            e_v = e_cond;
            o.sample = *gen.sample_a;
        } else {
            e_v = e_gen;
            e_a = e_cond;
            o.sample = *gen.sample_v;
        }
    }
    o.triangle_final =
        embedding_distance(e_v, e_p) + embedding_distance(e_v, e_a) + embedding_distance(e_a, e_p);
    (void)cfg;
    return o;
}

}  // namespace

EvalArtifacts evaluate_results(const ExperimentConfig& cfg, const RunFile& results,
                               const ModelBundle& bundle, const World& world) {
    if (results.runs.empty()) throw std::runtime_error("eval: results file has no runs");
    const Task task = parse_task(results.task);
    const Modality sample_mod = task == Task::Joint ? Modality::A : generated_modality(task);

    std::vector<RunOutcome> vanilla, guided;
    vanilla.reserve(results.runs.size());
    guided.reserve(results.runs.size());
    for (const RunRecord& rec : results.runs) {
        vanilla.push_back(eval_one(cfg, bundle, rec, rec.vanilla, task));
        guided.push_back(eval_one(cfg, bundle, rec, rec.guided, task));
    }

    // Reference set for the sample-quality stand-in: fresh world draws of the
    // generated modality, stratified over classes.
    std::vector<Tensor> references;
    references.reserve(results.runs.size());
    for (std::size_t i = 0; i < results.runs.size(); ++i) {
        const PairedSample s = sample_pair(world, i % cfg.classes,
                                           derive_stream(cfg.seed, seed_index::kReferenceBase + i));
        references.push_back(sample_mod == Modality::A ? s.a : s.v);
    }

    EvalArtifacts artifacts;
    artifacts.report = compare_runs(vanilla, guided, references);
    artifacts.report.config_echo = results.config_echo;

    const GuidanceConfig g = cfg.guidance();
    std::ostringstream csv;
    std::istringstream echo(results.config_echo);
    for (std::string line; std::getline(echo, line);) {
        csv << (line.rfind('#', 0) == 0 ? "" : "# ") << line << "\n";
    }
    csv << eval_csv_header() << "\n";
    for (std::size_t i = 0; i < results.runs.size(); ++i) {
        EvalCsvRow row;
        row.task = results.task;
        row.seed = results.runs[i].run_seed;
        row.lambda1 = task == Task::Joint ? g.lambda1_a : g.lambda1;
        row.lambda2 = g.lambda2;
        row.inf_steps = g.inf_steps;
        row.optim_start = g.optim_start;
        row.align_vanilla = vanilla[i].alignment;
        row.align_guided = guided[i].alignment;
        row.mmd_vanilla = artifacts.report.mmd_vanilla;
        row.mmd_guided = artifacts.report.mmd_guided;
        row.triangle_final_vanilla = vanilla[i].triangle_final;
        row.triangle_final_guided = guided[i].triangle_final;
        row.runtime_ms = guided[i].runtime_ms;
        csv << eval_csv_line(row) << "\n";
    }
    artifacts.csv = csv.str();

    std::ostringstream summary;
    summary << "latalign " << kVersion << " eval summary, task " << results.task << "\n\n"
            << report_summary(artifacts.report) << "\n--- resolved config ---\n"
            << results.config_echo;
    artifacts.summary = summary.str();
    return artifacts;
}

int cmd_gen_data(const ExperimentConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    const OutPaths paths = out_paths(cfg);
    const World world = build_world(cfg);
    const Dataset train = generate_dataset(world, cfg.train_per_class,
                                           derive_stream(cfg.seed, seed_index::kTrainData));
    const Dataset holdout = generate_dataset(world, cfg.holdout_per_class,
                                             derive_stream(cfg.seed, seed_index::kHoldoutData));
    save_dataset(train, paths.dataset);
    save_dataset(holdout, paths.holdout);
    write_text_atomic(cfg.out_dir + "/config_gen_data.txt", config_echo(cfg));
    std::cout << "wrote " << paths.dataset << " (" << train.samples.size() << " pairs), " << paths.holdout
              << " (" << holdout.samples.size() << " pairs)\n";
    return 0;
}

int cmd_train(const ExperimentConfig& cfg) {
    const OutPaths paths = out_paths(cfg);
    if (!fs::exists(paths.dataset)) {
        throw std::runtime_error("missing prerequisite: dataset " + paths.dataset + " (run 'gen-data' first)");
    }
    const Dataset train = load_dataset(paths.dataset);
    const ModelBundle bundle = train_bundle(cfg, train);
    save_bundle(bundle, cfg);
    write_text_atomic(cfg.out_dir + "/config_train.txt", config_echo(cfg));
    if (fs::exists(paths.holdout)) {
        const Dataset holdout = load_dataset(paths.holdout);
        const RetrievalStats stats = binder_retrieval_stats(bundle.binder, holdout.samples);
        std::cout << "binder held-out retrieval: top-1 " << 100.0 * stats.top1_accuracy << "% over "
                  << stats.pairs << " pairs, matched-minus-mismatched cosine gap " << stats.gap << "\n";
    }
    std::cout << "wrote checkpoints under " << cfg.out_dir << "\n";
    return 0;
}

int cmd_run(const ExperimentConfig& cfg) {
    const OutPaths paths = out_paths(cfg);
    if (!fs::exists(paths.dataset)) {
        throw std::runtime_error("missing prerequisite: dataset " + paths.dataset + " (run 'gen-data' first)");
    }
    const Dataset train = load_dataset(paths.dataset);
    const World world = make_world(train.spec, train.world_seed);
    const ModelBundle bundle = load_bundle(cfg);
    const RunFile results = execute_runs(cfg, bundle, world);
    save_results(results, paths.results);
    std::cout << "wrote " << paths.results << " (" << results.runs.size() << " paired runs)\n";
    return 0;
}

int cmd_eval(const ExperimentConfig& cfg) {
    const OutPaths paths = out_paths(cfg);
    if (!fs::exists(paths.results)) {
        throw std::runtime_error("missing prerequisite: results " + paths.results + " (run 'run' first)");
    }
    if (!fs::exists(paths.dataset)) {
        throw std::runtime_error("missing prerequisite: dataset " + paths.dataset + " (run 'gen-data' first)");
    }
    const Dataset train = load_dataset(paths.dataset);
    const World world = make_world(train.spec, train.world_seed);
    const ModelBundle bundle = load_bundle(cfg);
    const RunFile results = load_results(paths.results);
    const EvalArtifacts artifacts = evaluate_results(cfg, results, bundle, world);
    write_text_atomic(paths.eval_csv, artifacts.csv);
    write_text_atomic(paths.summary, artifacts.summary);
    std::cout << artifacts.summary << "\n";
    std::cout << "wrote " << paths.eval_csv << " and " << paths.summary << "\n";
    return 0;
}

int cmd_sweep(const ExperimentConfig& cfg) {
    const OutPaths paths = out_paths(cfg);
    if (!fs::exists(paths.dataset)) {
        throw std::runtime_error("missing prerequisite: dataset " + paths.dataset + " (run 'gen-data' first)");
    }
    const Dataset train = load_dataset(paths.dataset);
    const World world = make_world(train.spec, train.world_seed);
    const ModelBundle bundle = load_bundle(cfg);

    const std::vector<double> lambdas = parse_double_list(cfg.sweep_lambda1);
    const std::vector<double> starts = parse_double_list(cfg.sweep_optim_start);
    const std::vector<std::size_t> optim_steps = parse_size_list(cfg.sweep_num_optim_steps);

    std::ostringstream csv;
    std::istringstream echo(config_echo(cfg));
    for (std::string line; std::getline(echo, line);) {
        csv << (line.rfind('#', 0) == 0 ? "" : "# ") << line << "\n";
    }
    csv << "lambda1,optim_start,num_optim_steps,align_vanilla,align_guided,align_sign_p,"
           "rel_improvement,triangle_vanilla,triangle_guided,mean_runtime_ms\n";

    for (double l1 : lambdas) {
        for (double start : starts) {
            for (std::size_t n_opt : optim_steps) {
                ExperimentConfig cell = cfg;
                cell.lambda1 = l1;
                cell.lambda1_v = l1;
                cell.lambda1_a = l1;
                cell.optim_start = start;
                cell.num_optim_steps = n_opt;
                const RunFile results = execute_runs(cell, bundle, world);
                const EvalArtifacts artifacts = evaluate_results(cell, results, bundle, world);
                double mean_ms = 0.0;
                for (const RunRecord& r : results.runs) mean_ms += r.guided.duration_ms;
                mean_ms /= static_cast<double>(results.runs.size());
                csv.precision(17);
                csv << l1 << ',' << start << ',' << n_opt << ',' << artifacts.report.align_mean_vanilla
                    << ',' << artifacts.report.align_mean_guided << ',' << artifacts.report.align_sign_p
                    << ',' << artifacts.report.align_rel_improvement << ','
                    << artifacts.report.triangle_mean_vanilla << ',' << artifacts.report.triangle_mean_guided
                    << ',' << mean_ms << "\n";
            }
        }
    }
    write_text_atomic(paths.sweep_csv, csv.str());
    std::cout << "wrote " << paths.sweep_csv << " (" << lambdas.size() * starts.size() * optim_steps.size()
              << " cells)\n";
    return 0;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open " + tmp + " for writing");
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!os) throw std::runtime_error("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw std::runtime_error("rename to " + path + " failed");
    }
}

}  // namespace latalign
