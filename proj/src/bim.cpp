#include "smartedit/bim.hpp"

#include "smartedit/errors.hpp"

namespace smartedit {

std::string variant_name(InteractionVariant v) {
    switch (v) {
        case InteractionVariant::Plain: return "plain";
        case InteractionVariant::SimpleCA: return "simpleca";
        case InteractionVariant::Bim: return "bim";
    }
    return "?";
}

InteractionVariant parse_variant(const std::string& s) {
    if (s == "plain") return InteractionVariant::Plain;
    if (s == "simpleca") return InteractionVariant::SimpleCA;
    if (s == "bim") return InteractionVariant::Bim;
    throw ConfigError("unknown interaction variant: " + s + " (plain|simpleca|bim)");
}

Bim::Bim(const BimConfig& cfg, Rng init_rng) : cfg_(cfg) {
    Rng rng = init_rng.split("bim");
    const int64_t d = cfg.d_model;
    ln_self_ = LayerNormParams(d);
    ln_cross_f_ = LayerNormParams(d);
    ln_mlp_ = LayerNormParams(d);
    ln_cross_v_ = LayerNormParams(d);
    self_attn_ = MultiHeadAttention(rng, d, cfg.n_heads, false, /*zero_init_output=*/true);
    cross_f_ = MultiHeadAttention(rng, d, cfg.n_heads, false, true);
    mlp_ = Mlp(rng, d, 4 * d, /*zero_init_output=*/true);
    cross_v_ = MultiHeadAttention(rng, d, cfg.n_heads, false, true);
}

BimOutput Bim::forward(const Tensor& f, const Tensor& v) const {
    if (f.dim(1) != cfg_.d_model || v.dim(1) != cfg_.d_model)
        throw ShapeError("bim_forward: d_model mismatch");
    Tensor n1 = ln_self_.forward(f);
    Tensor f1 = add(f, self_attn_.forward(n1, n1));
    Tensor f2 = add(f1, cross_f_.forward(ln_cross_f_.forward(f1), v));
    Tensor f_prime = add(f2, mlp_.forward(ln_mlp_.forward(f2)));
    Tensor v_prime = add(v, cross_v_.forward(ln_cross_v_.forward(v), f_prime));
    return {f_prime, v_prime};
}

BimOutput Bim::forward_variant(InteractionVariant kind, const Tensor& f, const Tensor& v) const {
    switch (kind) {
        case InteractionVariant::Plain:
            return {f, Tensor::zeros(v.shape())};
        case InteractionVariant::SimpleCA:
            return {f, add(v, cross_v_.forward(ln_cross_v_.forward(v), f))};
        case InteractionVariant::Bim:
            return forward(f, v);
    }
    throw InvariantViolation("forward_variant: bad variant");
}

ParamMap Bim::params() const {
    ParamMap p;
    p.merge("", ln_self_.params("bim.ln_self"));
    p.merge("", ln_cross_f_.params("bim.ln_cross_f"));
    p.merge("", ln_mlp_.params("bim.ln_mlp"));
    p.merge("", ln_cross_v_.params("bim.ln_cross_v"));
    p.merge("", self_attn_.params("bim.self_attn"));
    p.merge("", cross_f_.params("bim.cross_f"));
    p.merge("", mlp_.params("bim.mlp"));
    p.merge("", cross_v_.params("bim.cross_v"));
    return p;
}

}  // namespace smartedit
