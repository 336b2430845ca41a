#include "smartedit/lm.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "smartedit/dataset.hpp"
#include "smartedit/errors.hpp"

namespace smartedit {

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

Vocabulary Vocabulary::build(int base_size, int img_tokens) {
    Vocabulary v;
    v.r_ = img_tokens;
    v.tokens_ = {"<pad>", "<bos>", "<unk>"};
    for (const auto& w : instruction_lexicon()) v.tokens_.push_back(w);
    if (static_cast<int>(v.tokens_.size()) > base_size)
        throw ConfigError("Vocabulary: lexicon exceeds base vocab size");
    int filler = 0;
    while (static_cast<int>(v.tokens_.size()) < base_size)
        v.tokens_.push_back("<reserved_" + std::to_string(filler++) + ">");
    for (size_t i = 0; i < v.tokens_.size(); ++i) v.index_[v.tokens_[i]] = static_cast<int>(i);
    return v;
}

std::vector<int> Vocabulary::encode_words(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& w : tokenize_words(text)) {
        auto it = index_.find(w);
        ids.push_back(it == index_.end() ? unk_id_ : it->second);
    }
    return ids;
}

std::string Vocabulary::token_text(int id) const {
    if (id < 0 || id >= total_size()) throw InvariantViolation("token_text: id out of range");
    if (id >= base_size()) return "[IMG_" + std::to_string(id - base_size() + 1) + "]";
    return tokens_[static_cast<size_t>(id)];
}

std::string Vocabulary::serialize() const {
    std::string out;
    for (int id = 0; id < total_size(); ++id) out += token_text(id) + "\n";
    return out;
}

Vocabulary Vocabulary::parse(const std::string& text) {
    Vocabulary v;
    v.tokens_.clear();
    v.r_ = 0;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.rfind("[IMG_", 0) == 0) {
            ++v.r_;
        } else {
            if (v.r_ > 0)
                throw ConfigError("Vocabulary::parse: IMG tokens must come last");
            v.tokens_.push_back(line);
        }
    }
    for (size_t i = 0; i < v.tokens_.size(); ++i) v.index_[v.tokens_[i]] = static_cast<int>(i);
    return v;
}

TokenSequence make_sequence(const Vocabulary& vocab, const std::string& text, int n_patches) {
    TokenSequence seq;
    seq.n_patches = n_patches;
    seq.r = vocab.img_tokens();
    seq.text_ids.push_back(vocab.bos_id());
    for (int id : vocab.encode_words(text)) seq.text_ids.push_back(id);
    return seq;
}

// ---------------------------------------------------------------------------
// LanguageModel
// ---------------------------------------------------------------------------

LanguageModel::LanguageModel(const LmConfig& cfg, Rng init_rng)
    : cfg_(cfg), vocab_(Vocabulary::build(cfg.base_vocab, cfg.img_tokens)) {
    if (cfg.d_model % cfg.n_heads != 0)
        throw ConfigError("LmConfig: d_model must be divisible by n_heads");
    Rng rng = init_rng.split("lm");
    const int64_t d = cfg.d_model;

    tok_embed_ = Tensor::randn(rng, {vocab_.base_size(), d}, 0.25);
    img_embed_ = Tensor::randn(rng, {cfg.img_tokens, d}, 0.25, true);
    pos_embed_ = Tensor::randn(rng, {cfg.context, d}, 0.25);

    const int64_t patch_dim = 3LL * cfg.patch * cfg.patch;
    patch_w_ = Tensor::randn(rng, {patch_dim, d}, 1.0 / std::sqrt(static_cast<double>(patch_dim)));
    patch_b_ = Tensor::zeros({d});

    layers_.reserve(static_cast<size_t>(cfg.n_layers));
    for (int i = 0; i < cfg.n_layers; ++i) {
        Layer layer;
        layer.ln1 = LayerNormParams(d);
        layer.ln2 = LayerNormParams(d);
        layer.wq = LoraLinear(rng, d, d, cfg.lora_rank, cfg.lora_alpha);
        layer.wk = Linear(rng, d, d, false, /*with_bias=*/false);  // see nn.cpp on key biases
        layer.wv = LoraLinear(rng, d, d, cfg.lora_rank, cfg.lora_alpha);
        layer.wo = Linear(rng, d, d);
        layer.fc1 = Linear(rng, d, 4 * d);
        layer.fc2 = Linear(rng, 4 * d, d);
        layers_.push_back(std::move(layer));
    }
    ln_f_ = LayerNormParams(d);

    // the base stands in for pretrained weights and never trains
    for (auto& [name, t] : base_params().items) t.set_requires_grad(false);
}

int LanguageModel::n_patches(const Image& img) const {
    if (img.height % cfg_.patch != 0 || img.width % cfg_.patch != 0)
        throw ShapeError("patch_embed: image dims must be divisible by the patch size");
    return (img.height / cfg_.patch) * (img.width / cfg_.patch);
}

Tensor LanguageModel::patch_embed(const Image& img) const {
    const int ps = cfg_.patch;
    const int p = n_patches(img);
    const int64_t patch_dim = 3LL * ps * ps;
    std::vector<double> flat(static_cast<size_t>(p) * static_cast<size_t>(patch_dim));
    int row = 0;
    for (int py = 0; py < img.height; py += ps)
        for (int px = 0; px < img.width; px += ps, ++row) {
            size_t k = static_cast<size_t>(row) * patch_dim;
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < ps; ++y)
                    for (int x = 0; x < ps; ++x) flat[k++] = img.at(c, py + y, px + x);
        }
    Tensor patches({p, patch_dim}, std::move(flat));
    return add_rowwise(matmul(patches, patch_w_), patch_b_);
}

Tensor LanguageModel::embed_table() const { return concat_rows({tok_embed_, img_embed_}); }

LanguageModel::ForwardResult LanguageModel::forward(const TokenSequence& seq,
                                                    const Image& img) const {
    const int p = n_patches(img);
    if (seq.n_patches != p)
        throw ShapeError("lm_forward: sequence patch count does not match the image");
    if (seq.r != cfg_.img_tokens) throw ShapeError("lm_forward: IMG suffix length mismatch");
    const int L = seq.length();
    if (L > cfg_.context) throw InvariantViolation("lm_forward: context overflow");

    Tensor x = concat_rows({patch_embed(img), gather_rows(tok_embed_, seq.text_ids), img_embed_});
    x = add(x, slice_rows(pos_embed_, 0, L));

    for (const auto& layer : layers_) {
        Tensor normed = layer.ln1.forward(x);
        Tensor attn = attention_core(layer.wq.forward(normed), layer.wk.forward(normed),
                                     layer.wv.forward(normed), cfg_.n_heads, /*causal=*/true);
        x = add(x, layer.wo.forward(attn));
        Tensor normed2 = layer.ln2.forward(x);
        x = add(x, layer.fc2.forward(gelu(layer.fc1.forward(normed2))));
    }
    Tensor states = ln_f_.forward(x);
    return {states, slice_rows(states, L - seq.r, L)};
}

Tensor LanguageModel::logits(const Tensor& states) const {
    return matmul(states, transpose(embed_table()));
}

namespace {

std::vector<int> img_target_ids(const Vocabulary& vocab) {
    std::vector<int> ids;
    for (int i = 0; i < vocab.img_tokens(); ++i) ids.push_back(vocab.img_id(i));
    return ids;
}

}  // namespace

Tensor LanguageModel::img_token_nll(const Tensor& logits, const TokenSequence& seq) const {
    if (seq.r != cfg_.img_tokens || seq.r < 1)
        throw InvariantViolation("img_token_nll: sequence is missing the IMG suffix");
    const int64_t L = logits.dim(0);
    if (L != seq.length()) throw ShapeError("img_token_nll: logits/sequence length mismatch");
    // row L-r-1+i predicts IMG_{i+1}
    Tensor rows = slice_rows(logits, L - seq.r - 1, L - 1);
    return cross_entropy_rows(rows, img_target_ids(vocab_));
}

Tensor LanguageModel::img_token_nll_from_states(const Tensor& states,
                                                const TokenSequence& seq) const {
    if (seq.r != cfg_.img_tokens || seq.r < 1)
        throw InvariantViolation("img_token_nll: sequence is missing the IMG suffix");
    const int64_t L = states.dim(0);
    if (L != seq.length()) throw ShapeError("img_token_nll: states/sequence length mismatch");
    Tensor rows = slice_rows(states, L - seq.r - 1, L - 1);
    Tensor row_logits = matmul(rows, transpose(embed_table()));
    return cross_entropy_rows(row_logits, img_target_ids(vocab_));
}

ParamMap LanguageModel::params() const {
    ParamMap p;
    p.add("lm.tok_embed", tok_embed_);
    p.add("lm.img_embed", img_embed_);
    p.add("lm.pos_embed", pos_embed_);
    p.add("lm.patch_fc.w", patch_w_);
    p.add("lm.patch_fc.b", patch_b_);
    for (size_t i = 0; i < layers_.size(); ++i) {
        const std::string pre = "lm.layer" + std::to_string(i);
        p.merge("", layers_[i].ln1.params(pre + ".ln1"));
        p.merge("", layers_[i].ln2.params(pre + ".ln2"));
        p.merge("", layers_[i].wq.params(pre + ".attn.wq"));
        p.merge("", layers_[i].wk.params(pre + ".attn.wk"));
        p.merge("", layers_[i].wv.params(pre + ".attn.wv"));
        p.merge("", layers_[i].wo.params(pre + ".attn.wo"));
        p.merge("", layers_[i].fc1.params(pre + ".mlp.fc1"));
        p.merge("", layers_[i].fc2.params(pre + ".mlp.fc2"));
    }
    p.merge("", ln_f_.params("lm.ln_f"));
    return p;
}

ParamMap LanguageModel::img_embedding_params() const {
    ParamMap p;
    p.add("lm.img_embed", img_embed_);
    return p;
}

ParamMap LanguageModel::lora_params() const {
    ParamMap p;
    for (size_t i = 0; i < layers_.size(); ++i) {
        const std::string pre = "lm.layer" + std::to_string(i);
        p.merge("", layers_[i].wq.lora_params(pre + ".attn.wq"));
        p.merge("", layers_[i].wv.lora_params(pre + ".attn.wv"));
    }
    return p;
}

ParamMap LanguageModel::base_params() const {
    ParamMap trainable;
    trainable.merge("", img_embedding_params());
    trainable.merge("", lora_params());
    auto is_trainable = [&](const std::string& name) {
        for (const auto& [n, t] : trainable.items)
            if (n == name) return true;
        return false;
    };
    ParamMap base;
    for (const auto& [name, t] : params().items)
        if (!is_trainable(name)) base.add(name, t);
    return base;
}

}  // namespace smartedit
