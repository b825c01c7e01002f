#pragma once

#include <vector>

#include "latalign/autoencoder.hpp"
#include "latalign/denoiser.hpp"
#include "latalign/nn.hpp"
#include "latalign/rng.hpp"
#include "latalign/tape.hpp"
#include "latalign/tensor.hpp"

namespace latalign {

enum class Modality { V, A, P };

const char* modality_name(Modality m);

/// Frozen-after-training multimodal embedding model: one encoder per
/// modality into a shared unit sphere. The prompt encoder takes conditioning
/// embeddings (prompt-table rows, or a tuned prompt vector) as its input, so
/// prompt gradients can flow through the embedding space.
struct BinderModel {
    std::size_t embed_dim = 16;
    double tau = 0.07;
    Mlp enc_v;
    Mlp enc_a;
    Mlp enc_p;

    Tensor embed(Tape* tape, Modality modality, const Tensor& x) const;
    std::vector<Tensor*> params();
    const Mlp& encoder(Modality m) const;

    static BinderModel init(std::size_t dv, std::size_t da, std::size_t dp, std::size_t embed_dim,
                            double tau, Rng& rng, std::size_t hidden = 64);
};

struct EmbeddingBatch {
    std::vector<Tensor> rows;  // unit vectors; row i pairs with row i across batches
};

/// Symmetrized InfoNCE over in-batch negatives: mean over i of
/// -log softmax_j(q_i . k_j / tau) at j == i, averaged over both directions.
/// Built from recorded primitives (log-sum-exp via a softplus fold) so it is
/// differentiable w.r.t. the embeddings.
Tensor contrastive_loss(Tape* tape, const EmbeddingBatch& q, const EmbeddingBatch& k, double tau);

/// F(e1, e2) = 1 - e1 . e2 for unit vectors; range [0, 2].
double embedding_distance(const Tensor& e1, const Tensor& e2);

/// Graph form of the same distance (1 - cosine; identical on unit inputs).
Tensor embedding_distance_op(Tape* tape, const Tensor& e1, const Tensor& e2);

struct PairedSample;  // world.hpp

struct BinderTrainStats {
    std::vector<double> epoch_loss;
    double final_loss = 0.0;
};

/// Train all three encoders with the summed pairwise contrastive losses over
/// (v,a), (v,p), (a,p); prompt inputs are the class rows of `prompts`.
BinderTrainStats train_binder(BinderModel& binder, const std::vector<PairedSample>& data,
                              const PromptTable& prompts, const TrainConfig& cfg);

/// Cross-modal retrieval quality over paired samples: mean matched vs
/// mismatched cosine and top-1 nearest-neighbor accuracy (v queries against
/// all a embeddings).
struct RetrievalStats {
    double matched_mean = 0.0;
    double mismatched_mean = 0.0;
    double gap = 0.0;
    double top1_accuracy = 0.0;
    std::size_t pairs = 0;
};

RetrievalStats binder_retrieval_stats(const BinderModel& binder, const std::vector<PairedSample>& pairs);

}  // namespace latalign
