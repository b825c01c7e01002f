#include "latalign/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "latalign/optim.hpp"

namespace latalign {

Tensor time_features(std::size_t t, std::size_t dim) {
    if (dim % 2 != 0) throw std::invalid_argument("time_features: dim must be even");
    Tensor out = Tensor::zeros({dim});
    const double td = static_cast<double>(t);
    for (std::size_t i = 0; i < dim / 2; ++i) {
        const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
        out.data[2 * i] = std::sin(td * freq);
        out.data[2 * i + 1] = std::cos(td * freq);
    }
    return out;
}

Tensor PromptTable::row(std::size_t class_id) const {
    if (class_id >= classes()) {
        throw std::invalid_argument("prompt table: class " + std::to_string(class_id) + " out of range");
    }
    Tensor out = Tensor::zeros({width()});
    for (std::size_t j = 0; j < width(); ++j) out.data[j] = table.data[class_id * width() + j];
    return out;
}

Tensor PromptTable::mean_row() const {
    Tensor out = Tensor::zeros({width()});
    for (std::size_t c = 0; c < classes(); ++c) {
        for (std::size_t j = 0; j < width(); ++j) out.data[j] += table.data[c * width() + j];
    }
    for (double& v : out.data) v /= static_cast<double>(classes());
    return out;
}

PromptTable PromptTable::init(std::size_t classes, std::size_t width, Rng& rng) {
    PromptTable p;
    p.table = rng.normal_tensor({classes, width});
    return p;
}

Tensor DenoiserModel::forward(Tape* tape, const Tensor& z_t, std::size_t t, const Tensor& y) const {
    if (!z_t.is_vector() || z_t.numel() != latent_dim) {
        throw std::invalid_argument("denoiser: latent width " + shape_str(z_t.shape) + " expected " +
                                    std::to_string(latent_dim));
    }
    if (!y.is_vector() || y.numel() != cond_dim) {
        throw std::invalid_argument("denoiser: conditioning width " + shape_str(y.shape) + " expected " +
                                    std::to_string(cond_dim));
    }
    const Tensor parts[] = {z_t, time_features(t, time_dim), y};
    return net.forward(tape, concat(tape, parts));
}

DenoiserModel DenoiserModel::init(std::size_t latent_dim, std::size_t cond_dim, Rng& rng,
                                  std::size_t hidden, std::size_t time_dim) {
    DenoiserModel m;
    m.latent_dim = latent_dim;
    m.time_dim = time_dim;
    m.cond_dim = cond_dim;
    const std::size_t dims[] = {latent_dim + time_dim + cond_dim, hidden, hidden, hidden, latent_dim};
    m.net = Mlp::init(dims, rng);
    return m;
}

Tensor denoiser_forward(const DenoiserModel& model, Tape* tape, const Tensor& z_t, std::size_t t,
                        const Tensor& y) {
    return model.forward(tape, z_t, t, y);
}

TrainStats train_denoiser(DenoiserModel& model, PromptTable& prompts, bool train_prompt_table,
                          const std::vector<std::pair<Tensor, std::size_t>>& data, const Autoencoder& ae,
                          const NoiseSchedule& schedule, const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw std::invalid_argument("train_denoiser: empty dataset");

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<Tensor*> params = model.params();
    if (train_prompt_table) params.push_back(&prompts.table);
    AdamState state = make_adam_state(params);

    // Latents are fixed during training; encode once.
    std::vector<Tensor> latents;
    latents.reserve(data.size());
    for (const auto& [x, cls] : data) {
        (void)cls;
        latents.push_back(ae.encode(nullptr, x));
    }

    TrainStats stats;
    const std::size_t n_net = model.net.params().size();

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            Tape tape;

            DenoiserModel live = model;
            std::vector<Tensor> watched;
            watched.reserve(n_net);
            for (DenseLayer& layer : live.net.layers) {
                layer.w = tape.watch(layer.w);
                layer.b = tape.watch(layer.b);
                watched.push_back(layer.w);
                watched.push_back(layer.b);
            }
            std::map<std::size_t, Tensor> class_rows;  // class -> (maybe watched) prompt row

            Tensor batch_loss = Tensor::scalar(0.0);
            for (std::size_t i = start; i < end; ++i) {
                const auto& [x, cls] = data[order[i]];
                (void)x;
                auto it = class_rows.find(cls);
                if (it == class_rows.end()) {
                    Tensor row = prompts.row(cls);
                    if (train_prompt_table) row = tape.watch(row);
                    it = class_rows.emplace(cls, std::move(row)).first;
                }
                const std::size_t t = 1 + rng.index(schedule.T);
                Tensor eps = rng.normal_tensor({model.latent_dim});
                Tensor z_t = q_sample(latents[order[i]], t, eps, schedule);
                Tensor eps_hat = live.forward(&tape, z_t, t, it->second);
                batch_loss = add(&tape, batch_loss, squared_error(&tape, eps_hat, eps));
            }
            batch_loss = scale(&tape, batch_loss, 1.0 / static_cast<double>(end - start));
            epoch_loss += batch_loss.scalar_value() * static_cast<double>(end - start);

            GradientMap grads = tape.backward(batch_loss);
            std::vector<Tensor> grad_list;
            grad_list.reserve(params.size());
            for (const Tensor& w : watched) grad_list.push_back(grads.at(w.node));
            if (train_prompt_table) {
                Tensor table_grad = Tensor::zeros(prompts.table.shape);
                for (const auto& [cls, row] : class_rows) {
                    const Tensor& g = grads.at(row.node);
                    for (std::size_t j = 0; j < prompts.width(); ++j) {
                        table_grad.data[cls * prompts.width() + j] = g.data[j];
                    }
                }
                grad_list.push_back(std::move(table_grad));
            }
            adam_step(params, grad_list, state, cfg.lr);
        }
        stats.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    }
    stats.final_loss = stats.epoch_loss.back();
    return stats;
}

}  // namespace latalign
