#include "smartedit/qformer.hpp"

#include <cmath>

#include "smartedit/errors.hpp"

namespace smartedit {

QFormer::QFormer(const QFormerConfig& cfg, Rng init_rng) : cfg_(cfg) {
    if (cfg.n_layers < 1 || cfg.n_queries < 1)
        throw ConfigError("QFormerConfig: n_layers and n_queries must be >= 1");
    if (cfg.d_model % cfg.n_heads != 0)
        throw ConfigError("QFormerConfig: d_model must be divisible by n_heads");
    Rng rng = init_rng.split("qformer");
    const int64_t d = cfg.d_model;
    queries_ = Tensor::randn(rng, {cfg.n_queries, d}, 0.5, true);
    layers_.reserve(static_cast<size_t>(cfg.n_layers));
    for (int i = 0; i < cfg.n_layers; ++i) {
        Layer layer;
        layer.ln1 = LayerNormParams(d);
        layer.ln2 = LayerNormParams(d);
        layer.ln3 = LayerNormParams(d);
        layer.self_attn = MultiHeadAttention(rng, d, cfg.n_heads, false, false);
        layer.cross_attn = MultiHeadAttention(rng, d, cfg.n_heads, false, false);
        layer.mlp = Mlp(rng, d, 4 * d, false);
        layers_.push_back(std::move(layer));
    }
}

Tensor QFormer::forward(const Tensor& h) const {
    if (h.rank() != 2 || h.dim(1) != cfg_.d_model)
        throw ShapeError("qformer_forward: hidden-state width must equal d_model");
    Tensor x = queries_;
    for (const auto& layer : layers_) {
        Tensor n1 = layer.ln1.forward(x);
        x = add(x, layer.self_attn.forward(n1, n1));
        x = add(x, layer.cross_attn.forward(layer.ln2.forward(x), h));
        x = add(x, layer.mlp.forward(layer.ln3.forward(x)));
    }
    return x;
}

ParamMap QFormer::params() const {
    ParamMap p;
    p.add("qformer.queries", queries_);
    for (size_t i = 0; i < layers_.size(); ++i) {
        const std::string pre = "qformer.layer" + std::to_string(i);
        p.merge("", layers_[i].ln1.params(pre + ".ln1"));
        p.merge("", layers_[i].ln2.params(pre + ".ln2"));
        p.merge("", layers_[i].ln3.params(pre + ".ln3"));
        p.merge("", layers_[i].self_attn.params(pre + ".self_attn"));
        p.merge("", layers_[i].cross_attn.params(pre + ".cross_attn"));
        p.merge("", layers_[i].mlp.params(pre + ".mlp"));
    }
    return p;
}

Tensor stage1_alignment_loss(const Tensor& f, const Tensor& target_text_embedding,
                             const Tensor& lm_loss, double mse_weight, double lm_weight) {
    if (f.shape() != target_text_embedding.shape())
        throw ShapeError("stage1_alignment_loss: f/target shape mismatch");
    return add(scale(mse(f, target_text_embedding), mse_weight), scale(lm_loss, lm_weight));
}

ReferenceTextEncoder::ReferenceTextEncoder(const Vocabulary& vocab, int d_model) {
    // constant key: the reference encoder is the same frozen network in every
    // experiment
    Rng rng(0x5EEDC11F, "reference-text-encoder");
    table_ = Tensor::randn(rng, {vocab.base_size(), d_model}, 1.0);
}

Tensor ReferenceTextEncoder::encode_tiled(const std::vector<int>& word_ids, int n_queries) const {
    const int64_t d = table_.dim(1);
    std::vector<double> pooled(static_cast<size_t>(d), 0.0);
    if (!word_ids.empty()) {
        for (int id : word_ids) {
            if (id < 0 || id >= table_.dim(0))
                throw InvariantViolation("ReferenceTextEncoder: word id out of range");
            const double* row = table_.values().data() + static_cast<size_t>(id) * d;
            for (int64_t j = 0; j < d; ++j) pooled[static_cast<size_t>(j)] += row[j];
        }
        for (double& v : pooled) v /= static_cast<double>(word_ids.size());
    }
    std::vector<double> tiled(static_cast<size_t>(n_queries) * d);
    for (int q = 0; q < n_queries; ++q)
        std::copy(pooled.begin(), pooled.end(), tiled.begin() + static_cast<int64_t>(q) * d);
    return Tensor({n_queries, d}, std::move(tiled));
}

}  // namespace smartedit
