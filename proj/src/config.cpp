#include "latalign/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "latalign/version.hpp"

namespace latalign {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

struct KeyBinding {
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: cannot parse value '" + v + "' for key '" + key + "'");
    }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long u = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return u;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: cannot parse value '" + v + "' for key '" + key + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw std::invalid_argument("config: cannot parse value '" + v + "' for key '" + key + "'");
}

std::string fmt_double(double d) {
    std::ostringstream os;
    os.precision(17);
    os << d;
    return os.str();
}

const std::vector<std::pair<std::string, KeyBinding>>& registry() {
    auto num = [](auto member) {
        return KeyBinding{
            [member](ExperimentConfig& c, const std::string& v) { c.*member = to_double("", v); },
            [member](const ExperimentConfig& c) { return fmt_double(c.*member); }};
    };
    auto uint = [](auto member) {
        return KeyBinding{
            [member](ExperimentConfig& c, const std::string& v) {
                c.*member = static_cast<std::remove_reference_t<decltype(std::declval<ExperimentConfig&>().*member)>>(
                    to_u64("", v));
            },
            [member](const ExperimentConfig& c) { return std::to_string(c.*member); }};
    };
    auto str = [](auto member) {
        return KeyBinding{[member](ExperimentConfig& c, const std::string& v) { c.*member = v; },
                          [member](const ExperimentConfig& c) { return c.*member; }};
    };
    auto boolean = [](auto member) {
        return KeyBinding{
            [member](ExperimentConfig& c, const std::string& v) { c.*member = to_bool("", v); },
            [member](const ExperimentConfig& c) { return (c.*member) ? "true" : "false"; }};
    };

    static const std::vector<std::pair<std::string, KeyBinding>> bindings = {
        {"factor_dim", uint(&ExperimentConfig::factor_dim)},
        {"classes", uint(&ExperimentConfig::classes)},
        {"dv", uint(&ExperimentConfig::dv)},
        {"da", uint(&ExperimentConfig::da)},
        {"sigma", num(&ExperimentConfig::sigma)},
        {"jitter", num(&ExperimentConfig::jitter)},
        {"map_seed_v", uint(&ExperimentConfig::map_seed_v)},
        {"map_seed_a", uint(&ExperimentConfig::map_seed_a)},
        {"train_per_class", uint(&ExperimentConfig::train_per_class)},
        {"holdout_per_class", uint(&ExperimentConfig::holdout_per_class)},
        {"timesteps", uint(&ExperimentConfig::timesteps)},
        {"beta_start", num(&ExperimentConfig::beta_start)},
        {"beta_end", num(&ExperimentConfig::beta_end)},
        {"autoencoder", str(&ExperimentConfig::autoencoder)},
        {"latent_dim", uint(&ExperimentConfig::latent_dim)},
        {"denoiser_hidden", uint(&ExperimentConfig::denoiser_hidden)},
        {"time_dim", uint(&ExperimentConfig::time_dim)},
        {"cond_dim", uint(&ExperimentConfig::cond_dim)},
        {"denoiser_epochs", uint(&ExperimentConfig::denoiser_epochs)},
        {"binder_epochs", uint(&ExperimentConfig::binder_epochs)},
        {"ae_epochs", uint(&ExperimentConfig::ae_epochs)},
        {"batch_size", uint(&ExperimentConfig::batch_size)},
        {"lr", num(&ExperimentConfig::lr)},
        {"embed_dim", uint(&ExperimentConfig::embed_dim)},
        {"binder_hidden", uint(&ExperimentConfig::binder_hidden)},
        {"tau", num(&ExperimentConfig::tau)},
        {"task", str(&ExperimentConfig::task)},
        {"lambda1", num(&ExperimentConfig::lambda1)},
        {"lambda1_v", num(&ExperimentConfig::lambda1_v)},
        {"lambda1_a", num(&ExperimentConfig::lambda1_a)},
        {"lambda2", num(&ExperimentConfig::lambda2)},
        {"num_optim_steps", uint(&ExperimentConfig::num_optim_steps)},
        {"inf_steps", uint(&ExperimentConfig::inf_steps)},
        {"optim_start", num(&ExperimentConfig::optim_start)},
        {"prompt_tuning", str(&ExperimentConfig::prompt_tuning)},
        {"grad_through_denoiser", boolean(&ExperimentConfig::grad_through_denoiser)},
        {"sampler", str(&ExperimentConfig::sampler)},
        {"caption_noise", num(&ExperimentConfig::caption_noise)},
        {"seed", uint(&ExperimentConfig::seed)},
        {"runs", uint(&ExperimentConfig::runs)},
        {"threads", uint(&ExperimentConfig::threads)},
        {"out_dir", str(&ExperimentConfig::out_dir)},
        {"sweep_lambda1", str(&ExperimentConfig::sweep_lambda1)},
        {"sweep_optim_start", str(&ExperimentConfig::sweep_optim_start)},
        {"sweep_num_optim_steps", str(&ExperimentConfig::sweep_num_optim_steps)},
    };
    return bindings;
}

const KeyBinding& find_key(const std::string& key) {
    for (const auto& [name, binding] : registry()) {
        if (name == key) return binding;
    }
    throw std::invalid_argument("config: unknown key '" + key + "'");
}

void validate(const ExperimentConfig& cfg) {
    parse_task(cfg.task);
    cfg.parsed_sampler();
    cfg.parsed_autoencoder();
    if (cfg.prompt_tuning != "auto" && cfg.prompt_tuning != "on" && cfg.prompt_tuning != "off") {
        throw std::invalid_argument("config: prompt_tuning must be auto, on, or off");
    }
    if (cfg.lambda2 < 0.0) throw std::invalid_argument("config: lambda2 must be >= 0");
    if (cfg.caption_noise < 0.0 || cfg.caption_noise > 1.0) {
        throw std::invalid_argument("config: caption_noise must be in [0, 1]");
    }
    if (cfg.optim_start >= 0.0 && cfg.optim_start > 1.0) {
        throw std::invalid_argument("config: optim_start must be in [0, 1]");
    }
    if (cfg.runs == 0) throw std::invalid_argument("config: runs must be positive");
    // Explicit lambda values, when set, must be non-negative.
    for (double l : {cfg.lambda1, cfg.lambda1_v, cfg.lambda1_a}) {
        if (l >= 0.0) continue;
        if (l != -1.0) throw std::invalid_argument("config: negative lambda1");
    }
    cfg.guidance().validate();
}

}  // namespace

const char* value_source_name(ValueSource s) {
    switch (s) {
        case ValueSource::Default: return "default";
        case ValueSource::TaskDefault: return "task-default";
        case ValueSource::File: return "file";
        case ValueSource::Flag: return "flag";
    }
    return "?";
}

SamplerKind ExperimentConfig::parsed_sampler() const {
    if (sampler == "ddim") return SamplerKind::Ddim;
    if (sampler == "ddpm") return SamplerKind::Ddpm;
    throw std::invalid_argument("config: sampler must be ddim or ddpm");
}

AutoencoderKind ExperimentConfig::parsed_autoencoder() const {
    if (autoencoder == "identity") return AutoencoderKind::Identity;
    if (autoencoder == "affine") return AutoencoderKind::Affine;
    throw std::invalid_argument("config: autoencoder must be identity or affine");
}

GuidanceConfig ExperimentConfig::guidance() const {
    const Task t = parsed_task();
    GuidanceConfig g = GuidanceConfig::defaults_for(t);
    if (lambda1 >= 0.0) {
        g.lambda1 = lambda1;
        // An explicit single rate also covers both joint branches unless the
        // per-branch keys are set.
        g.lambda1_v = lambda1;
        g.lambda1_a = lambda1;
    }
    if (lambda1_v >= 0.0) g.lambda1_v = lambda1_v;
    if (lambda1_a >= 0.0) g.lambda1_a = lambda1_a;
    g.lambda2 = lambda2;
    g.num_optim_steps = num_optim_steps;
    g.inf_steps = inf_steps;
    if (optim_start >= 0.0) g.optim_start = optim_start;
    if (prompt_tuning == "on") g.prompt_tuning = true;
    if (prompt_tuning == "off") g.prompt_tuning = false;
    g.grad_through_denoiser = grad_through_denoiser;
    g.sampler = parsed_sampler();
    g.seed = seed;
    return g;
}

std::size_t ExperimentConfig::data_dim(Modality m) const {
    switch (m) {
        case Modality::V: return dv;
        case Modality::A: return da;
        case Modality::P: return cond_dim;
    }
    throw std::invalid_argument("config: bad modality");
}

std::size_t ExperimentConfig::resolved_latent_dim(Modality m) const {
    if (parsed_autoencoder() == AutoencoderKind::Identity || latent_dim == 0) return data_dim(m);
    return latent_dim;
}

ExperimentConfig parse_config(const std::optional<std::string>& file_path,
                              const std::vector<std::pair<std::string, std::string>>& flag_overrides) {
    ExperimentConfig cfg;
    for (const auto& [name, binding] : registry()) {
        (void)binding;
        cfg.sources[name] = ValueSource::Default;
    }

    if (file_path) {
        std::ifstream is(*file_path);
        if (!is) throw std::runtime_error("config: cannot open " + *file_path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                            " is not 'key = value': " + line);
            }
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            try {
                find_key(key).set(cfg, value);
            } catch (const std::invalid_argument& e) {
                if (std::string(e.what()).find("unknown key") != std::string::npos) throw;
                throw std::invalid_argument("config: cannot parse value '" + value + "' for key '" + key + "'");
            }
            cfg.sources[key] = ValueSource::File;
        }
    }

    for (const auto& [key, value] : flag_overrides) {
        try {
            find_key(key).set(cfg, value);
        } catch (const std::invalid_argument& e) {
            if (std::string(e.what()).find("unknown key") != std::string::npos) throw;
            throw std::invalid_argument("config: cannot parse value '" + value + "' for key '" + key + "'");
        }
        cfg.sources[key] = ValueSource::Flag;
    }

    // Per-task resolution is part of provenance.
    if (cfg.sources["lambda1"] == ValueSource::Default) cfg.sources["lambda1"] = ValueSource::TaskDefault;
    if (cfg.sources["optim_start"] == ValueSource::Default) cfg.sources["optim_start"] = ValueSource::TaskDefault;
    if (cfg.prompt_tuning == "auto") cfg.sources["prompt_tuning"] = ValueSource::TaskDefault;

    validate(cfg);
    return cfg;
}

std::string config_echo(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << "# latalign " << kVersion << " resolved config\n";
    const GuidanceConfig g = cfg.guidance();
    for (const auto& [name, binding] : registry()) {
        std::string value = binding.get(cfg);
        // Show resolved values for the task-dependent knobs.
        if (name == "lambda1" && cfg.lambda1 < 0.0) value = fmt_double(g.lambda1);
        if (name == "lambda1_v" && cfg.lambda1_v < 0.0) value = fmt_double(g.lambda1_v);
        if (name == "lambda1_a" && cfg.lambda1_a < 0.0) value = fmt_double(g.lambda1_a);
        if (name == "optim_start" && cfg.optim_start < 0.0) value = fmt_double(g.optim_start);
        if (name == "prompt_tuning" && cfg.prompt_tuning == "auto") {
            value = g.prompt_tuning ? "on" : "off";
        }
        const auto it = cfg.sources.find(name);
        const ValueSource src = it != cfg.sources.end() ? it->second : ValueSource::Default;
        os << name << " = " << value << "  # " << value_source_name(src) << "\n";
    }
    return os.str();
}

std::vector<double> parse_double_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(to_double("list", item));
    }
    if (out.empty()) throw std::invalid_argument("config: empty list '" + csv + "'");
    return out;
}

std::vector<std::size_t> parse_size_list(const std::string& csv) {
    std::vector<std::size_t> out;
    for (double d : parse_double_list(csv)) out.push_back(static_cast<std::size_t>(d));
    return out;
}

}  // namespace latalign
