// latalign command line: gen-data | train | run | eval | sweep.
// Flags override config-file values, which override defaults.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "latalign/config.hpp"
#include "latalign/harness.hpp"
#include "latalign/version.hpp"

namespace {

struct FlagCapture {
    std::optional<std::string> config_file;
    std::vector<std::pair<std::string, std::string>> overrides;
};

void add_common_flags(CLI::App* cmd, FlagCapture& cap) {
    cmd->add_option_function<std::string>(
           "--config", [&cap](const std::string& v) { cap.config_file = v; }, "flat key=value config file");
    auto pass = [&cap, cmd](const std::string& flag, const std::string& key, const std::string& help) {
        cmd->add_option_function<std::string>(
            flag, [&cap, key](const std::string& v) { cap.overrides.emplace_back(key, v); }, help);
    };
    pass("--task", "task", "v2a | a2v | i2a | joint");
    pass("--lambda1", "lambda1", "latent guidance step size");
    pass("--lambda2", "lambda2", "prompt tuning step size");
    pass("--optim-start", "optim_start", "fraction of denoising steps before guidance starts");
    pass("--inf-steps", "inf_steps", "inference (denoising) steps");
    pass("--num-optim-steps", "num_optim_steps", "inner optimization steps per denoising step");
    pass("--seed", "seed", "master seed");
    pass("--runs", "runs", "paired generations per invocation");
    pass("--out", "out_dir", "output directory");
    pass("--sampler", "sampler", "ddim | ddpm");
    pass("--threads", "threads", "worker threads (0 = auto)");
    pass("--caption-noise", "caption_noise", "probability of resampling the caption class");
    pass("--sweep-lambda1", "sweep_lambda1", "comma list for sweep");
    pass("--sweep-optim-start", "sweep_optim_start", "comma list for sweep");
    pass("--sweep-num-optim-steps", "sweep_num_optim_steps", "comma list for sweep");
    cmd->add_flag_callback(
        "--no-prompt-tuning", [&cap] { cap.overrides.emplace_back("prompt_tuning", "off"); },
        "disable guided prompt tuning");
    cmd->add_flag_callback(
        "--stop-grad-denoiser", [&cap] { cap.overrides.emplace_back("grad_through_denoiser", "false"); },
        "treat the noise prediction as constant in guidance gradients");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string("latalign ") + latalign::kVersion +
                 " - guided two-modality diffusion alignment experiments"};
    app.require_subcommand(1);

    FlagCapture cap;
    struct Sub {
        const char* name;
        const char* help;
        int (*fn)(const latalign::ExperimentConfig&);
    };
    const Sub subs[] = {
        {"gen-data", "generate the synthetic paired dataset", latalign::cmd_gen_data},
        {"train", "train autoencoders, denoisers, and the binder", latalign::cmd_train},
        {"run", "execute paired vanilla/guided generations", latalign::cmd_run},
        {"eval", "compare vanilla vs guided results, write CSV + summary", latalign::cmd_eval},
        {"sweep", "grid over lambda1 / optim_start / num_optim_steps", latalign::cmd_sweep},
    };
    for (const Sub& sub : subs) {
        CLI::App* cmd = app.add_subcommand(sub.name, sub.help);
        add_common_flags(cmd, cap);
        cmd->callback([&cap, &sub] {
            const latalign::ExperimentConfig cfg = latalign::parse_config(cap.config_file, cap.overrides);
            const int rc = sub.fn(cfg);
            if (rc != 0) throw CLI::RuntimeError(rc);
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
