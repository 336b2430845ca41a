#pragma once

#include <map>
#include <string>
#include <vector>

#include "smartedit/image.hpp"
#include "smartedit/nn.hpp"

namespace smartedit {

/// Word-level vocabulary over the synthetic instruction lexicon, padded to a
/// fixed base size, with r [IMG_i] tokens appended contiguously above every
/// base id.
class Vocabulary {
public:
    static Vocabulary build(int base_size = 128, int img_tokens = 32);

    int pad_id() const { return pad_id_; }
    int bos_id() const { return bos_id_; }
    int unk_id() const { return unk_id_; }
    int base_size() const { return static_cast<int>(tokens_.size()); }
    int img_tokens() const { return r_; }
    int img_id(int i) const { return base_size() + i; }  // i in [0, r)
    int total_size() const { return base_size() + r_; }
    bool is_img_id(int id) const { return id >= base_size() && id < total_size(); }

    std::vector<int> encode_words(const std::string& text) const;
    std::string token_text(int id) const;

    /// Ordered token list, one per line; IMG tokens render as [IMG_1]..[IMG_r].
    std::string serialize() const;
    static Vocabulary parse(const std::string& text);

private:
    std::vector<std::string> tokens_;
    std::map<std::string, int> index_;
    int pad_id_ = 0, bos_id_ = 1, unk_id_ = 2;
    int r_ = 32;
};

/// Layout is exactly [image patches][bos + instruction words][IMG_1..IMG_r].
struct TokenSequence {
    std::vector<int> text_ids;
    int n_patches = 0;
    int r = 0;

    int length() const { return n_patches + static_cast<int>(text_ids.size()) + r; }
};

TokenSequence make_sequence(const Vocabulary& vocab, const std::string& text, int n_patches);

struct LmConfig {
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int context = 128;
    int base_vocab = 128;
    int img_tokens = 32;  // r
    int lora_rank = 16;
    double lora_alpha = 27.0;
    int patch = 8;
};

/// Decoder-only causal transformer over (patch prefix + instruction + IMG
/// suffix). The base weights stand in for a pretrained model and stay
/// frozen; only the IMG token embeddings and the LoRA adapters on the q/v
/// projections ever train. Output head is tied to the embeddings.
class LanguageModel {
public:
    LanguageModel(const LmConfig& cfg, Rng init_rng);

    const LmConfig& config() const { return cfg_; }
    const Vocabulary& vocab() const { return vocab_; }

    /// Non-overlapping patch flattening + frozen linear map: [3,H,W] -> [p,d].
    Tensor patch_embed(const Image& img) const;
    int n_patches(const Image& img) const;

    struct ForwardResult {
        Tensor states;  // [L, d] final-layer states (post final norm)
        Tensor hidden;  // [r, d] rows at the IMG positions
    };
    ForwardResult forward(const TokenSequence& seq, const Image& img) const;

    /// Full-logits path: [L, V] with V = base + r.
    Tensor logits(const Tensor& states) const;

    /// Sum over the r IMG positions of -log p(IMG_i | prefix, IMG_{<i}).
    Tensor img_token_nll(const Tensor& logits, const TokenSequence& seq) const;
    /// Same value computed from final states without materializing all rows.
    Tensor img_token_nll_from_states(const Tensor& states, const TokenSequence& seq) const;

    ParamMap params() const;             // every tensor, prefixed "lm."
    ParamMap img_embedding_params() const;
    ParamMap lora_params() const;
    ParamMap base_params() const;        // the frozen set (freezing audits)

private:
    struct Layer {
        LayerNormParams ln1, ln2;
        LoraLinear wq, wv;
        Linear wk, wo;
        Linear fc1, fc2;
    };

    Tensor embed_table() const;  // concat(tok_embed, img_embed) [V, d]

    LmConfig cfg_;
    Vocabulary vocab_;
    Tensor tok_embed_;  // [base, d] frozen
    Tensor img_embed_;  // [r, d] trainable ("matrix E")
    Tensor pos_embed_;  // [context, d] frozen
    Tensor patch_w_;    // [3*patch*patch, d] frozen
    Tensor patch_b_;    // [d] frozen
    std::vector<Layer> layers_;
    LayerNormParams ln_f_;
};

}  // namespace smartedit
