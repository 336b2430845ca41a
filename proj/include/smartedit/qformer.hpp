#pragma once

#include "smartedit/lm.hpp"
#include "smartedit/nn.hpp"

namespace smartedit {

struct QFormerConfig {
    int n_layers = 6;
    int n_queries = 8;  // paper uses 77; toy default 8
    int d_model = 64;
    int n_heads = 4;
};

/// Learnable queries cross-attending to the LM hidden states h. Output shape
/// is (n_queries, d_model) for every r.
class QFormer {
public:
    QFormer(const QFormerConfig& cfg, Rng init_rng);

    const QFormerConfig& config() const { return cfg_; }

    Tensor forward(const Tensor& h) const;  // h: [r, d] -> f: [n_queries, d]

    ParamMap params() const;  // prefixed "qformer."

private:
    struct Layer {
        LayerNormParams ln1, ln2, ln3;
        MultiHeadAttention self_attn;
        MultiHeadAttention cross_attn;
        Mlp mlp;
    };

    QFormerConfig cfg_;
    Tensor queries_;  // [n_queries, d]
    std::vector<Layer> layers_;
};

/// loss = mse(f, target) + lm_weight * lm_loss (both weights are 1 by
/// default, matching the stage-1 objective).
Tensor stage1_alignment_loss(const Tensor& f, const Tensor& target_text_embedding,
                             const Tensor& lm_loss, double mse_weight = 1.0,
                             double lm_weight = 1.0);

/// Frozen, seeded random embedding + mean-pool standing in for the CLIP text
/// encoder. Its weights never depend on the experiment seed, so stage-1
/// targets are stable across runs.
class ReferenceTextEncoder {
public:
    ReferenceTextEncoder(const Vocabulary& vocab, int d_model);

    /// Mean-pooled embedding of the word ids, tiled to n_queries rows.
    Tensor encode_tiled(const std::vector<int>& word_ids, int n_queries) const;

private:
    Tensor table_;  // [base_vocab, d], no grad
};

}  // namespace smartedit
