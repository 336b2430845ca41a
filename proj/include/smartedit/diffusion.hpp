#pragma once

#include <functional>

#include "smartedit/image.hpp"
#include "smartedit/nn.hpp"

namespace smartedit {

/// Linear beta schedule; alpha_bar(0) == 1 and alpha_bar(T) < 0.01.
struct NoiseSchedule {
    int T = 1000;
    std::vector<double> betas;       // betas[t-1] for t in [1, T]
    std::vector<double> alpha_bars;  // alpha_bars[t-1] = prod_{s<=t} (1 - beta_s)

    static NoiseSchedule linear(int T = 1000, double beta_start = 1e-4, double beta_end = 0.02);

    double beta(int t) const;       // t in [1, T]
    double alpha_bar(int t) const;  // t in [0, T]
};

/// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
Tensor q_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched);

// ---------------------------------------------------------------------------
// fixed orthonormal toy latent codec (stand-in for the VAE)
// ---------------------------------------------------------------------------

inline constexpr int kCodecBlock = 4;
inline constexpr int kLatentChannels = 48;  // 3 image channels x 16 coefficients

/// Per-channel orthonormal 4x4 DCT blocks: [3,H,W] -> [48, H/4, W/4].
/// Lossless: decode(encode(x)) == x to 1e-10 and the L2 norm is preserved.
Tensor toy_encode(const Image& img);
Tensor toy_encode_tensor(const Tensor& img);  // [3,H,W] tensor input
Tensor toy_decode_tensor(const Tensor& latent);
Image toy_decode(const Tensor& latent, bool clamp01 = true);

// ---------------------------------------------------------------------------
// UNet
// ---------------------------------------------------------------------------

struct UNetConfig {
    int base_channels = 16;
    int depth = 2;  // down/up levels
    int cross_attn_dim = 64;  // width of f'
    int n_heads = 4;
    int latent_channels = kLatentChannels;
    int time_dim = 32;
};

/// Conditioned noise predictor. The stem consumes concat(z_t, cx); v' is
/// projected by a zero-initialized 1x1 conv, upsampled to the stem grid and
/// added residually; every level runs a conv block plus cross-attention with
/// spatial tokens as queries and f' as key/value.
class UNet {
public:
    UNet(const UNetConfig& cfg, Rng init_rng);

    const UNetConfig& config() const { return cfg_; }

    /// v_prime may be undefined: the injection branch is skipped entirely
    /// (bit-identical to passing a zero v'; used by the Plain variant tests).
    Tensor forward(const Tensor& z_t, const Tensor& cx, int t, const Tensor& f_prime,
                   const Tensor& v_prime) const;

    ParamMap params() const;  // prefixed "unet."

private:
    struct ResBlock {
        Conv2dLayer conv1, conv2;  // conv2 zero-init
        Linear time_proj;
    };
    struct CrossAttnBlock {
        LayerNormParams ln;
        MultiHeadAttention attn;  // q: spatial tokens, kv: f'
    };

    Tensor time_features(int t) const;  // [1, time_dim]
    Tensor res_forward(const ResBlock& blk, const Tensor& x, const Tensor& temb) const;
    Tensor attn_forward(const CrossAttnBlock& blk, const Tensor& x, const Tensor& cond) const;
    Tensor inject_v(const Tensor& x, const Tensor& v_prime) const;

    UNetConfig cfg_;
    Conv2dLayer stem_;
    Conv2dLayer vproj_;  // 1x1, no bias, zero-init
    Linear time_fc1_, time_fc2_;
    std::vector<ResBlock> enc_res_;
    std::vector<CrossAttnBlock> enc_attn_;
    std::vector<Conv2dLayer> down_;
    ResBlock mid_res_;
    CrossAttnBlock mid_attn_;
    std::vector<Conv2dLayer> up_conv_;
    std::vector<Conv2dLayer> fuse_conv_;
    std::vector<ResBlock> dec_res_;
    std::vector<CrossAttnBlock> dec_attn_;
    Conv2dLayer head_;  // zero-init: untrained model predicts eps = 0
};

// ---------------------------------------------------------------------------
// deterministic DDIM sampler (eta = 0)
// ---------------------------------------------------------------------------

/// Descending timestep grid; n_steps evenly strided over [1, T].
std::vector<int> ddim_timesteps(int T, int n_steps);

using EpsModel = std::function<Tensor(const Tensor& z_t, int t)>;

/// Starts from seeded N(0,1) noise; same seed, same output bits.
Tensor ddim_sample_latent(const EpsModel& eps_model, const NoiseSchedule& sched,
                          const Shape& latent_shape, int n_steps, Rng noise_rng);

}  // namespace smartedit
