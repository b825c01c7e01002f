#include "latalign/binder.hpp"

#include <cmath>
#include <stdexcept>

#include "latalign/optim.hpp"
#include "latalign/world.hpp"

namespace latalign {

const char* modality_name(Modality m) {
    switch (m) {
        case Modality::V: return "v";
        case Modality::A: return "a";
        case Modality::P: return "p";
    }
    return "?";
}

Tensor BinderModel::embed(Tape* tape, Modality modality, const Tensor& x) const {
    const Mlp& enc = encoder(modality);
    if (!x.is_vector() || x.numel() != enc.input_dim()) {
        throw std::invalid_argument(std::string("binder: ") + modality_name(modality) + " input width " +
                                    shape_str(x.shape) + " expected " + std::to_string(enc.input_dim()));
    }
    return l2_normalize(tape, enc.forward(tape, x));
}

std::vector<Tensor*> BinderModel::params() {
    std::vector<Tensor*> out;
    for (Mlp* enc : {&enc_v, &enc_a, &enc_p}) {
        for (Tensor* p : enc->params()) out.push_back(p);
    }
    return out;
}

const Mlp& BinderModel::encoder(Modality m) const {
    switch (m) {
        case Modality::V: return enc_v;
        case Modality::A: return enc_a;
        case Modality::P: return enc_p;
    }
    throw std::invalid_argument("binder: unknown modality");
}

BinderModel BinderModel::init(std::size_t dv, std::size_t da, std::size_t dp, std::size_t embed_dim,
                              double tau, Rng& rng, std::size_t hidden) {
    if (!(tau > 0.0)) throw std::invalid_argument("binder: tau must be positive");
    BinderModel b;
    b.embed_dim = embed_dim;
    b.tau = tau;
    const std::size_t dims_v[] = {dv, hidden, hidden, embed_dim};
    const std::size_t dims_a[] = {da, hidden, hidden, embed_dim};
    const std::size_t dims_p[] = {dp, hidden, hidden, embed_dim};
    b.enc_v = Mlp::init(dims_v, rng);
    b.enc_a = Mlp::init(dims_a, rng);
    b.enc_p = Mlp::init(dims_p, rng);
    return b;
}

namespace {

Tensor dot(Tape* tape, const Tensor& a, const Tensor& b) { return sum(tape, mul(tape, a, b)); }

/// log(sum_j exp(terms_j)) as a softplus fold; exact and stable.
Tensor log_sum_exp(Tape* tape, const std::vector<Tensor>& terms) {
    Tensor acc = terms[0];
    for (std::size_t j = 1; j < terms.size(); ++j) {
        acc = add(tape, acc, softplus(tape, sub(tape, terms[j], acc)));
    }
    return acc;
}

}  // namespace

Tensor contrastive_loss(Tape* tape, const EmbeddingBatch& q, const EmbeddingBatch& k, double tau) {
    const std::size_t n = q.rows.size();
    if (n < 2) throw std::invalid_argument("contrastive_loss: batch needs at least 2 rows (no negatives)");
    if (k.rows.size() != n) throw std::invalid_argument("contrastive_loss: batch size mismatch");
    if (!(tau > 0.0)) throw std::invalid_argument("contrastive_loss: tau must be positive");

    // Scaled similarity matrix s[i][j] = q_i . k_j / tau.
    std::vector<std::vector<Tensor>> s(n, std::vector<Tensor>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            s[i][j] = scale(tape, dot(tape, q.rows[i], k.rows[j]), 1.0 / tau);
        }
    }

    Tensor total = Tensor::scalar(0.0);
    for (std::size_t i = 0; i < n; ++i) {
        // q -> k direction: row i of s.
        total = add(tape, total, sub(tape, log_sum_exp(tape, s[i]), s[i][i]));
        // k -> q direction: column i of s.
        std::vector<Tensor> col(n);
        for (std::size_t j = 0; j < n; ++j) col[j] = s[j][i];
        total = add(tape, total, sub(tape, log_sum_exp(tape, col), s[i][i]));
    }
    return scale(tape, total, 1.0 / (2.0 * static_cast<double>(n)));
}

double embedding_distance(const Tensor& e1, const Tensor& e2) {
    if (!e1.is_vector() || !e2.is_vector() || !e1.same_shape(e2)) {
        throw std::invalid_argument("embedding_distance: inputs must be equal-width vectors");
    }
    constexpr double kUnitTol = 1e-6;
    if (std::abs(e1.l2_norm() - 1.0) > kUnitTol || std::abs(e2.l2_norm() - 1.0) > kUnitTol) {
        throw std::invalid_argument("embedding_distance: inputs must be unit vectors");
    }
    double d = 0.0;
    for (std::size_t i = 0; i < e1.numel(); ++i) d += e1.data[i] * e2.data[i];
    return 1.0 - d;
}

Tensor embedding_distance_op(Tape* tape, const Tensor& e1, const Tensor& e2) {
    return sub(tape, Tensor::scalar(1.0), cosine_similarity(tape, e1, e2));
}

RetrievalStats binder_retrieval_stats(const BinderModel& binder, const std::vector<PairedSample>& pairs) {
    if (pairs.size() < 2) throw std::invalid_argument("binder_retrieval_stats: need at least 2 pairs");
    std::vector<Tensor> ev, ea;
    ev.reserve(pairs.size());
    ea.reserve(pairs.size());
    for (const PairedSample& s : pairs) {
        ev.push_back(binder.embed(nullptr, Modality::V, s.v));
        ea.push_back(binder.embed(nullptr, Modality::A, s.a));
    }
    RetrievalStats stats;
    stats.pairs = pairs.size();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ev.size(); ++i) {
        double best = -2.0;
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < ea.size(); ++j) {
            double d = 0.0;
            for (std::size_t k = 0; k < ev[i].numel(); ++k) d += ev[i].data[k] * ea[j].data[k];
            (i == j ? stats.matched_mean : stats.mismatched_mean) += d;
            if (d > best) {
                best = d;
                best_j = j;
            }
        }
        if (best_j == i) ++correct;
    }
    stats.matched_mean /= static_cast<double>(pairs.size());
    stats.mismatched_mean /= static_cast<double>(pairs.size() * (pairs.size() - 1));
    stats.gap = stats.matched_mean - stats.mismatched_mean;
    stats.top1_accuracy = static_cast<double>(correct) / static_cast<double>(pairs.size());
    return stats;
}

BinderTrainStats train_binder(BinderModel& binder, const std::vector<PairedSample>& data,
                              const PromptTable& prompts, const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw std::invalid_argument("train_binder: empty dataset");
    if (cfg.batch_size < 2) throw std::invalid_argument("train_binder: batch size must be >= 2");

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<Tensor*> params = binder.params();
    AdamState state = make_adam_state(params);
    BinderTrainStats stats;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start + 2 <= order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            if (end - start < 2) break;
            Tape tape;

            BinderModel live = binder;
            std::vector<Tensor> watched;
            for (Mlp* enc : {&live.enc_v, &live.enc_a, &live.enc_p}) {
                for (DenseLayer& layer : enc->layers) {
                    layer.w = tape.watch(layer.w);
                    layer.b = tape.watch(layer.b);
                    watched.push_back(layer.w);
                    watched.push_back(layer.b);
                }
            }

            EmbeddingBatch ev, ea, ep;
            for (std::size_t i = start; i < end; ++i) {
                const PairedSample& sample = data[order[i]];
                ev.rows.push_back(live.embed(&tape, Modality::V, sample.v));
                ea.rows.push_back(live.embed(&tape, Modality::A, sample.a));
                ep.rows.push_back(live.embed(&tape, Modality::P, prompts.row(sample.class_id)));
            }

            Tensor loss = contrastive_loss(&tape, ev, ea, binder.tau);
            loss = add(&tape, loss, contrastive_loss(&tape, ev, ep, binder.tau));
            loss = add(&tape, loss, contrastive_loss(&tape, ea, ep, binder.tau));

            epoch_loss += loss.scalar_value();
            ++batches;

            GradientMap grads = tape.backward(loss);
            std::vector<Tensor> grad_list;
            grad_list.reserve(params.size());
            for (const Tensor& w : watched) grad_list.push_back(grads.at(w.node));
            adam_step(params, grad_list, state, cfg.lr);
        }
        stats.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
    }
    stats.final_loss = stats.epoch_loss.back();
    return stats;
}

}  // namespace latalign
