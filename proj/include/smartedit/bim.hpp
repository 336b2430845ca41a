#pragma once

#include "smartedit/nn.hpp"

namespace smartedit {

enum class InteractionVariant { Plain, SimpleCA, Bim };

std::string variant_name(InteractionVariant v);
InteractionVariant parse_variant(const std::string& s);

struct BimConfig {
    int d_model = 64;
    int n_heads = 4;
};

struct BimOutput {
    Tensor f_prime;  // [n_queries, d]
    Tensor v_prime;  // [m, d]
};

/// Bidirectional Interaction Module: self-attention on f, cross-attention
/// f->v, an MLP producing f', then cross-attention v->f' producing v'. All
/// output projections start at zero, so the module begins as an identity on
/// (f, v).
class Bim {
public:
    Bim(const BimConfig& cfg, Rng init_rng);

    BimOutput forward(const Tensor& f, const Tensor& v) const;

    /// Plain: (f, zero v'). SimpleCA: (f, v + CrossAttn(q=v, kv=f)). Bim:
    /// full forward. Output shapes are identical across variants.
    BimOutput forward_variant(InteractionVariant kind, const Tensor& f, const Tensor& v) const;

    ParamMap params() const;  // prefixed "bim."

private:
    BimConfig cfg_;
    LayerNormParams ln_self_, ln_cross_f_, ln_mlp_, ln_cross_v_;
    MultiHeadAttention self_attn_;   // f self-attention
    MultiHeadAttention cross_f_;     // q = f, kv = v
    Mlp mlp_;
    MultiHeadAttention cross_v_;     // q = v, kv = f'
};

}  // namespace smartedit
