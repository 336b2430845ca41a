#include "smartedit/nn.hpp"

#include <cmath>

#include "smartedit/errors.hpp"

namespace smartedit {

Tensor init_weight(Rng& rng, int64_t fan_in, int64_t fan_out) {
    return Tensor::randn(rng, {fan_in, fan_out}, 1.0 / std::sqrt(static_cast<double>(fan_in)),
                         true);
}

Linear::Linear(Rng& rng, int64_t in, int64_t out, bool zero_init, bool with_bias) {
    w = zero_init ? Tensor::zeros({in, out}, true) : init_weight(rng, in, out);
    if (with_bias) b = Tensor::zeros({out}, true);
}

Tensor Linear::forward(const Tensor& x) const {
    Tensor y = matmul(x, w);
    if (b.defined()) y = add_rowwise(y, b);
    return y;
}

ParamMap Linear::params(const std::string& prefix) const {
    ParamMap p;
    p.add(prefix + ".w", w);
    if (b.defined()) p.add(prefix + ".b", b);
    return p;
}

LoraLinear::LoraLinear(Rng& rng, int64_t in, int64_t out, int rank_, double alpha_) {
    if (rank_ < 1 || rank_ > std::min(in, out))
        throw ConfigError("LoraLinear: rank must be in [1, min(d_in, d_out)]");
    rank = rank_;
    alpha = alpha_;
    w = init_weight(rng, in, out);
    w.set_requires_grad(false);
    b = Tensor::zeros({out});
    lora_a = Tensor::randn(rng, {rank_, in}, 1.0 / std::sqrt(static_cast<double>(in)), true);
    lora_b = Tensor::zeros({out, rank_}, true);
}

Tensor LoraLinear::forward(const Tensor& x) const {
    Tensor base = add_rowwise(matmul(x, w), b);
    Tensor delta = matmul(matmul(x, transpose(lora_a)), transpose(lora_b));
    return add(base, scale(delta, alpha / static_cast<double>(rank)));
}

ParamMap LoraLinear::params(const std::string& prefix) const {
    ParamMap p;
    p.add(prefix + ".w", w);
    p.add(prefix + ".b", b);
    p.add(prefix + ".lora_a", lora_a);
    p.add(prefix + ".lora_b", lora_b);
    return p;
}

ParamMap LoraLinear::lora_params(const std::string& prefix) const {
    ParamMap p;
    p.add(prefix + ".lora_a", lora_a);
    p.add(prefix + ".lora_b", lora_b);
    return p;
}

Tensor lora_linear(const Tensor& x, const Tensor& base_w, const Tensor& a, const Tensor& b,
                   double alpha, int rank) {
    const int64_t d_in = base_w.dim(0), d_out = base_w.dim(1);
    if (rank < 1 || rank > std::min(d_in, d_out))
        throw ConfigError("lora_linear: rank must be in [1, min(d_in, d_out)]");
    Tensor delta = matmul(matmul(x, transpose(a)), transpose(b));
    return add(matmul(x, base_w), scale(delta, alpha / static_cast<double>(rank)));
}

LayerNormParams::LayerNormParams(int64_t d) {
    gain = Tensor::full({d}, 1.0, true);
    bias = Tensor::zeros({d}, true);
}

Tensor LayerNormParams::forward(const Tensor& x) const { return layer_norm(x, gain, bias); }

ParamMap LayerNormParams::params(const std::string& prefix) const {
    ParamMap p;
    p.add(prefix + ".gain", gain);
    p.add(prefix + ".bias", bias);
    return p;
}

Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, int n_heads,
                      bool causal) {
    const int64_t d = q.dim(1);
    if (d % n_heads != 0) throw ShapeError("attention_core: width not divisible by head count");
    if (k.dim(1) != d || v.dim(1) != d) throw ShapeError("attention_core: k/v width mismatch");
    const int64_t lq = q.dim(0), lk = k.dim(0);
    if (causal && lq != lk) throw ShapeError("attention_core: causal attention must be square");
    const int64_t dh = d / n_heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor mask;
    if (causal) {
        std::vector<double> mv(static_cast<size_t>(lq * lk), 0.0);
        for (int64_t i = 0; i < lq; ++i)
            for (int64_t j = i + 1; j < lk; ++j) mv[i * lk + j] = -1e30;
        mask = Tensor({lq, lk}, std::move(mv));
    }

    std::vector<Tensor> heads;
    heads.reserve(static_cast<size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
        Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
        Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
        Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
        Tensor scores = scale(matmul(qh, transpose(kh)), inv_scale);
        if (causal) scores = add(scores, mask);
        heads.push_back(matmul(softmax(scores), vh));
    }
    return concat_cols(heads);
}

MultiHeadAttention::MultiHeadAttention(Rng& rng, int64_t d_attn, int n_heads_, bool causal_,
                                       bool zero_init_output, int64_t d_kv) {
    if (d_kv < 0) d_kv = d_attn;
    n_heads = n_heads_;
    causal = causal_;
    wq = Linear(rng, d_attn, d_attn);
    // softmax is invariant to a constant shift of every key, so a key bias
    // would be a permanently zero-gradient parameter
    wk = Linear(rng, d_kv, d_attn, false, /*with_bias=*/false);
    wv = Linear(rng, d_kv, d_attn);
    wo = Linear(rng, d_attn, d_attn, zero_init_output);
}

Tensor MultiHeadAttention::forward(const Tensor& q_input, const Tensor& kv_input) const {
    Tensor mixed = attention_core(wq.forward(q_input), wk.forward(kv_input),
                                  wv.forward(kv_input), n_heads, causal);
    return wo.forward(mixed);
}

ParamMap MultiHeadAttention::params(const std::string& prefix) const {
    ParamMap p;
    p.merge("", wq.params(prefix + ".wq"));
    p.merge("", wk.params(prefix + ".wk"));
    p.merge("", wv.params(prefix + ".wv"));
    p.merge("", wo.params(prefix + ".wo"));
    return p;
}

Mlp::Mlp(Rng& rng, int64_t d, int64_t hidden, bool zero_init_output) {
    fc1 = Linear(rng, d, hidden);
    fc2 = Linear(rng, hidden, d, zero_init_output);
}

Tensor Mlp::forward(const Tensor& x) const { return fc2.forward(gelu(fc1.forward(x))); }

ParamMap Mlp::params(const std::string& prefix) const {
    ParamMap p;
    p.merge("", fc1.params(prefix + ".fc1"));
    p.merge("", fc2.params(prefix + ".fc2"));
    return p;
}

Conv2dLayer::Conv2dLayer(Rng& rng, int64_t in, int64_t out, int ksize, bool zero_init,
                         bool with_bias) {
    pad = ksize / 2;
    const double std = 1.0 / std::sqrt(static_cast<double>(in * ksize * ksize));
    k = zero_init ? Tensor::zeros({out, in, ksize, ksize}, true)
                  : Tensor::randn(rng, {out, in, ksize, ksize}, std, true);
    if (with_bias) b = Tensor::zeros({out}, true);
}

Tensor Conv2dLayer::forward(const Tensor& x) const {
    Tensor y = conv2d(x, k, pad);
    if (b.defined()) y = add_channelwise(y, b);
    return y;
}

ParamMap Conv2dLayer::params(const std::string& prefix) const {
    ParamMap p;
    p.add(prefix + ".k", k);
    if (b.defined()) p.add(prefix + ".b", b);
    return p;
}

}  // namespace smartedit
