#pragma once

#include <string>
#include <utility>
#include <vector>

#include "smartedit/rng.hpp"
#include "smartedit/tensor.hpp"

namespace smartedit {

/// Named parameter collection; names become checkpoint keys.
struct ParamMap {
    std::vector<std::pair<std::string, Tensor>> items;

    void add(const std::string& name, const Tensor& t) { items.emplace_back(name, t); }
    void merge(const std::string& prefix, const ParamMap& other) {
        for (const auto& [name, t] : other.items) items.emplace_back(prefix + name, t);
    }
    void set_requires_grad(bool v) {
        for (auto& [name, t] : items) t.set_requires_grad(v);
    }
};

/// Scaled-normal init, std = 1/sqrt(fan_in).
Tensor init_weight(Rng& rng, int64_t fan_in, int64_t fan_out);

struct Linear {
    Tensor w;  // [in, out]
    Tensor b;  // [out]; undefined when bias is disabled

    Linear() = default;
    Linear(Rng& rng, int64_t in, int64_t out, bool zero_init = false, bool with_bias = true);
    Tensor forward(const Tensor& x) const;  // [n,in] -> [n,out]
    ParamMap params(const std::string& prefix) const;
};

/// y = base(x) + (alpha/rank) * x A^T B^T with the base frozen and B
/// zero-initialized, so the adapter starts as an exact no-op.
struct LoraLinear {
    Tensor w;  // frozen [in, out]
    Tensor b;  // frozen [out]
    Tensor lora_a;  // [rank, in]
    Tensor lora_b;  // [out, rank], zero-init
    double alpha = 27.0;
    int rank = 16;

    LoraLinear() = default;
    LoraLinear(Rng& rng, int64_t in, int64_t out, int rank, double alpha);
    Tensor forward(const Tensor& x) const;
    ParamMap params(const std::string& prefix) const;       // base + adapters
    ParamMap lora_params(const std::string& prefix) const;  // adapters only
};

/// Functional form used by the spec-level tests.
Tensor lora_linear(const Tensor& x, const Tensor& base_w, const Tensor& a, const Tensor& b,
                   double alpha, int rank);

struct LayerNormParams {
    Tensor gain;
    Tensor bias;

    LayerNormParams() = default;
    explicit LayerNormParams(int64_t d);
    Tensor forward(const Tensor& x) const;
    ParamMap params(const std::string& prefix) const;
};

/// Scaled dot-product attention over pre-projected q/k/v, head-split along
/// the feature axis. Causal masking requires square attention.
Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v, int n_heads,
                      bool causal);

struct MultiHeadAttention {
    Linear wq, wk, wv, wo;
    int n_heads = 4;
    bool causal = false;

    MultiHeadAttention() = default;
    /// d_attn: width of the attention space (and of the q input / output),
    /// d_kv: width of the context input.
    MultiHeadAttention(Rng& rng, int64_t d_attn, int n_heads, bool causal, bool zero_init_output,
                       int64_t d_kv = -1);
    Tensor forward(const Tensor& q_input, const Tensor& kv_input) const;
    ParamMap params(const std::string& prefix) const;
};

struct Mlp {
    Linear fc1, fc2;

    Mlp() = default;
    Mlp(Rng& rng, int64_t d, int64_t hidden, bool zero_init_output);
    Tensor forward(const Tensor& x) const;  // fc2(gelu(fc1(x)))
    ParamMap params(const std::string& prefix) const;
};

struct Conv2dLayer {
    Tensor k;  // [out,in,ks,ks]
    Tensor b;  // [out]; undefined when bias is disabled
    int pad = 1;

    Conv2dLayer() = default;
    Conv2dLayer(Rng& rng, int64_t in, int64_t out, int ksize, bool zero_init = false,
                bool with_bias = true);
    Tensor forward(const Tensor& x) const;
    ParamMap params(const std::string& prefix) const;
};

}  // namespace smartedit
