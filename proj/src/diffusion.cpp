#include "smartedit/diffusion.hpp"

#include <cmath>

#include "smartedit/errors.hpp"

namespace smartedit {

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
    if (T < 1) throw ConfigError("NoiseSchedule: T must be >= 1");
    NoiseSchedule s;
    s.T = T;
    s.betas.resize(static_cast<size_t>(T));
    s.alpha_bars.resize(static_cast<size_t>(T));
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double beta =
            T == 1 ? beta_start
                   : beta_start + (beta_end - beta_start) * static_cast<double>(t - 1) /
                         static_cast<double>(T - 1);
        if (beta <= 0.0 || beta >= 1.0) throw InvariantViolation("NoiseSchedule: beta out of (0,1)");
        s.betas[static_cast<size_t>(t - 1)] = beta;
        prod *= 1.0 - beta;
        s.alpha_bars[static_cast<size_t>(t - 1)] = prod;
    }
    return s;
}

double NoiseSchedule::beta(int t) const {
    if (t < 1 || t > T) throw InvariantViolation("NoiseSchedule::beta: t out of [1,T]");
    return betas[static_cast<size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > T) throw InvariantViolation("NoiseSchedule::alpha_bar: t out of [0,T]");
    if (t == 0) return 1.0;
    return alpha_bars[static_cast<size_t>(t - 1)];
}

Tensor q_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& sched) {
    if (t < 1 || t > sched.T) throw InvariantViolation("q_sample: t out of [1,T]");
    if (z0.shape() != eps.shape()) throw ShapeError("q_sample: z0/eps shape mismatch");
    const double ab = sched.alpha_bar(t);
    return add(scale(z0, std::sqrt(ab)), scale(eps, std::sqrt(1.0 - ab)));
}

// ---------------------------------------------------------------------------
// toy codec
// ---------------------------------------------------------------------------

namespace {

// Orthonormal DCT-II basis for 4-point signals: basis[u][i].
const std::array<std::array<double, 4>, 4>& dct_basis() {
    static const auto basis = [] {
        std::array<std::array<double, 4>, 4> b{};
        for (int u = 0; u < 4; ++u) {
            const double cu = u == 0 ? std::sqrt(1.0 / 4.0) : std::sqrt(2.0 / 4.0);
            for (int i = 0; i < 4; ++i)
                b[static_cast<size_t>(u)][static_cast<size_t>(i)] =
                    cu * std::cos((2.0 * i + 1.0) * u * 3.14159265358979323846 / 8.0);
        }
        return b;
    }();
    return basis;
}

}  // namespace

Tensor toy_encode_tensor(const Tensor& img) {
    if (img.rank() != 3 || img.dim(0) != 3) throw ShapeError("toy_encode: expects [3,H,W]");
    const int h = static_cast<int>(img.dim(1)), w = static_cast<int>(img.dim(2));
    if (h % kCodecBlock != 0 || w % kCodecBlock != 0)
        throw ShapeError("toy_encode: dims must be divisible by 4");
    const int gh = h / kCodecBlock, gw = w / kCodecBlock;
    const auto& basis = dct_basis();
    const auto& pix = img.values();
    std::vector<double> lat(static_cast<size_t>(kLatentChannels) * gh * gw, 0.0);
    for (int c = 0; c < 3; ++c)
        for (int by = 0; by < gh; ++by)
            for (int bx = 0; bx < gw; ++bx)
                for (int u = 0; u < 4; ++u)
                    for (int v = 0; v < 4; ++v) {
                        double acc = 0.0;
                        for (int i = 0; i < 4; ++i)
                            for (int j = 0; j < 4; ++j)
                                acc += basis[u][i] * basis[v][j] *
                                       pix[(static_cast<size_t>(c) * h + by * 4 + i) * w + bx * 4 + j];
                        const int ch = c * 16 + u * 4 + v;
                        lat[(static_cast<size_t>(ch) * gh + by) * gw + bx] = acc;
                    }
    return Tensor({kLatentChannels, gh, gw}, std::move(lat));
}

Tensor toy_encode(const Image& img) { return toy_encode_tensor(image_to_tensor(img)); }

Tensor toy_decode_tensor(const Tensor& latent) {
    if (latent.rank() != 3 || latent.dim(0) != kLatentChannels)
        throw ShapeError("toy_decode: expects [48,h,w]");
    const int gh = static_cast<int>(latent.dim(1)), gw = static_cast<int>(latent.dim(2));
    const int h = gh * kCodecBlock, w = gw * kCodecBlock;
    const auto& basis = dct_basis();
    const auto& lat = latent.values();
    std::vector<double> pix(static_cast<size_t>(3) * h * w, 0.0);
    for (int c = 0; c < 3; ++c)
        for (int by = 0; by < gh; ++by)
            for (int bx = 0; bx < gw; ++bx)
                for (int i = 0; i < 4; ++i)
                    for (int j = 0; j < 4; ++j) {
                        double acc = 0.0;
                        for (int u = 0; u < 4; ++u)
                            for (int v = 0; v < 4; ++v) {
                                const int ch = c * 16 + u * 4 + v;
                                acc += basis[u][i] * basis[v][j] *
                                       lat[(static_cast<size_t>(ch) * gh + by) * gw + bx];
                            }
                        pix[(static_cast<size_t>(c) * h + by * 4 + i) * w + bx * 4 + j] = acc;
                    }
    return Tensor({3, h, w}, std::move(pix));
}

Image toy_decode(const Tensor& latent, bool clamp01) {
    return tensor_to_image(toy_decode_tensor(latent), clamp01);
}

// ---------------------------------------------------------------------------
// UNet
// ---------------------------------------------------------------------------

UNet::UNet(const UNetConfig& cfg, Rng init_rng) : cfg_(cfg) {
    if (cfg.depth < 1) throw ConfigError("UNetConfig: depth must be >= 1");
    if (cfg.time_dim % 2 != 0) throw ConfigError("UNetConfig: time_dim must be even");
    Rng rng = init_rng.split("unet");

    auto channels_at = [&](int level) { return cfg.base_channels << level; };

    stem_ = Conv2dLayer(rng, 2LL * cfg.latent_channels, cfg.base_channels, 3);
    vproj_ = Conv2dLayer(rng, cfg.cross_attn_dim, cfg.base_channels, 1, /*zero_init=*/true,
                         /*with_bias=*/false);
    time_fc1_ = Linear(rng, cfg.time_dim, cfg.time_dim);
    time_fc2_ = Linear(rng, cfg.time_dim, cfg.time_dim);

    auto make_res = [&](int c) {
        ResBlock blk;
        blk.conv1 = Conv2dLayer(rng, c, c, 3);
        blk.conv2 = Conv2dLayer(rng, c, c, 3, /*zero_init=*/true);
        blk.time_proj = Linear(rng, cfg.time_dim, c);
        return blk;
    };
    auto make_attn = [&](int c) {
        CrossAttnBlock blk;
        blk.ln = LayerNormParams(c);
        blk.attn = MultiHeadAttention(rng, c, cfg.n_heads, false, /*zero_init_output=*/true,
                                      cfg.cross_attn_dim);
        return blk;
    };

    for (int l = 0; l < cfg.depth; ++l) {
        enc_res_.push_back(make_res(channels_at(l)));
        enc_attn_.push_back(make_attn(channels_at(l)));
        down_.push_back(Conv2dLayer(rng, channels_at(l), channels_at(l + 1), 3));
    }
    mid_res_ = make_res(channels_at(cfg.depth));
    mid_attn_ = make_attn(channels_at(cfg.depth));
    for (int l = cfg.depth - 1; l >= 0; --l) {
        up_conv_.push_back(Conv2dLayer(rng, channels_at(l + 1), channels_at(l), 3));
        fuse_conv_.push_back(Conv2dLayer(rng, 2 * channels_at(l), channels_at(l), 3));
        dec_res_.push_back(make_res(channels_at(l)));
        dec_attn_.push_back(make_attn(channels_at(l)));
    }
    head_ = Conv2dLayer(rng, cfg.base_channels, cfg.latent_channels, 3, /*zero_init=*/true);
}

Tensor UNet::time_features(int t) const {
    const int half = cfg_.time_dim / 2;
    std::vector<double> emb(static_cast<size_t>(cfg_.time_dim));
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        emb[static_cast<size_t>(i)] = std::sin(t * freq);
        emb[static_cast<size_t>(half + i)] = std::cos(t * freq);
    }
    Tensor sinu({1, cfg_.time_dim}, std::move(emb));
    return time_fc2_.forward(gelu(time_fc1_.forward(sinu)));
}

Tensor UNet::res_forward(const ResBlock& blk, const Tensor& x, const Tensor& temb) const {
    const int64_t c = x.dim(0);
    Tensor bias = reshape(blk.time_proj.forward(temb), {c});
    Tensor h = gelu(add_channelwise(blk.conv1.forward(x), bias));
    return add(x, blk.conv2.forward(h));
}

Tensor UNet::attn_forward(const CrossAttnBlock& blk, const Tensor& x, const Tensor& cond) const {
    const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor tokens = transpose(reshape(x, {c, h * w}));  // [hw, c]
    Tensor out = blk.attn.forward(blk.ln.forward(tokens), cond);
    return add(x, reshape(transpose(out), {c, h, w}));
}

Tensor UNet::inject_v(const Tensor& x, const Tensor& v_prime) const {
    if (v_prime.rank() != 2 || v_prime.dim(1) != cfg_.cross_attn_dim)
        throw ShapeError("unet_forward: v' must be [m, cross_attn_dim]");
    const int64_t m = v_prime.dim(0);
    const int64_t g = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(m))));
    const int64_t hz = x.dim(1), wz = x.dim(2);
    if (g * g != m || hz != wz || hz % g != 0)
        throw ShapeError("unet_forward: v' token count " + std::to_string(m) +
                         " does not form a grid matching the stem resolution " +
                         std::to_string(hz) + "x" + std::to_string(wz));
    Tensor grid = reshape(transpose(v_prime), {cfg_.cross_attn_dim, g, g});
    Tensor inj = vproj_.forward(grid);
    while (inj.dim(1) < hz) inj = upsample_nearest_2x(inj);
    if (inj.dim(1) != hz)
        throw ShapeError("unet_forward: v' grid is not upsamplable to the stem resolution");
    return add(x, inj);
}

Tensor UNet::forward(const Tensor& z_t, const Tensor& cx, int t, const Tensor& f_prime,
                     const Tensor& v_prime) const {
    if (z_t.shape() != cx.shape()) throw ShapeError("unet_forward: z_t/cx shape mismatch");
    if (z_t.dim(0) != cfg_.latent_channels)
        throw ShapeError("unet_forward: latent channel mismatch");
    if (t < 1) throw InvariantViolation("unet_forward: t must be >= 1");
    const int64_t res = z_t.dim(1);
    if (res % (1LL << cfg_.depth) != 0)
        throw ShapeError("unet_forward: resolution not divisible by 2^depth");

    Tensor x = stem_.forward(concat_channels({z_t, cx}));
    if (v_prime.defined()) x = inject_v(x, v_prime);
    Tensor temb = time_features(t);

    std::vector<Tensor> skips;
    for (int l = 0; l < cfg_.depth; ++l) {
        x = res_forward(enc_res_[static_cast<size_t>(l)], x, temb);
        x = attn_forward(enc_attn_[static_cast<size_t>(l)], x, f_prime);
        skips.push_back(x);
        x = down_[static_cast<size_t>(l)].forward(avg_pool_2x2(x));
    }
    x = res_forward(mid_res_, x, temb);
    x = attn_forward(mid_attn_, x, f_prime);
    for (int i = 0; i < cfg_.depth; ++i) {
        x = up_conv_[static_cast<size_t>(i)].forward(upsample_nearest_2x(x));
        const Tensor& skip = skips[static_cast<size_t>(cfg_.depth - 1 - i)];
        x = fuse_conv_[static_cast<size_t>(i)].forward(concat_channels({x, skip}));
        x = res_forward(dec_res_[static_cast<size_t>(i)], x, temb);
        x = attn_forward(dec_attn_[static_cast<size_t>(i)], x, f_prime);
    }
    return head_.forward(x);
}

ParamMap UNet::params() const {
    ParamMap p;
    p.merge("", stem_.params("unet.stem"));
    p.merge("", vproj_.params("unet.vproj"));
    p.merge("", time_fc1_.params("unet.time.fc1"));
    p.merge("", time_fc2_.params("unet.time.fc2"));
    auto add_res = [&](const std::string& pre, const ResBlock& blk) {
        p.merge("", blk.conv1.params(pre + ".conv1"));
        p.merge("", blk.conv2.params(pre + ".conv2"));
        p.merge("", blk.time_proj.params(pre + ".time_proj"));
    };
    auto add_attn = [&](const std::string& pre, const CrossAttnBlock& blk) {
        p.merge("", blk.ln.params(pre + ".ln"));
        p.merge("", blk.attn.params(pre + ".attn"));
    };
    for (size_t l = 0; l < enc_res_.size(); ++l) {
        add_res("unet.enc" + std::to_string(l) + ".res", enc_res_[l]);
        add_attn("unet.enc" + std::to_string(l) + ".xattn", enc_attn_[l]);
        p.merge("", down_[l].params("unet.down" + std::to_string(l)));
    }
    add_res("unet.mid.res", mid_res_);
    add_attn("unet.mid.xattn", mid_attn_);
    for (size_t i = 0; i < dec_res_.size(); ++i) {
        p.merge("", up_conv_[i].params("unet.up" + std::to_string(i) + ".conv"));
        p.merge("", fuse_conv_[i].params("unet.up" + std::to_string(i) + ".fuse"));
        add_res("unet.dec" + std::to_string(i) + ".res", dec_res_[i]);
        add_attn("unet.dec" + std::to_string(i) + ".xattn", dec_attn_[i]);
    }
    p.merge("", head_.params("unet.head"));
    return p;
}

// ---------------------------------------------------------------------------
// DDIM
// ---------------------------------------------------------------------------

std::vector<int> ddim_timesteps(int T, int n_steps) {
    if (n_steps < 1) throw InvariantViolation("ddim_timesteps: n_steps must be >= 1");
    if (n_steps > T) throw InvariantViolation("ddim_timesteps: n_steps cannot exceed T");
    std::vector<int> ts;
    for (int j = n_steps; j >= 1; --j) {
        int t = static_cast<int>(std::llround(static_cast<double>(j) * T / n_steps));
        t = std::max(1, std::min(T, t));
        if (ts.empty() || t < ts.back()) ts.push_back(t);
    }
    return ts;
}

Tensor ddim_sample_latent(const EpsModel& eps_model, const NoiseSchedule& sched,
                          const Shape& latent_shape, int n_steps, Rng noise_rng) {
    NoGradGuard ng;
    const auto ts = ddim_timesteps(sched.T, n_steps);
    Tensor z = Tensor::randn(noise_rng, latent_shape);
    for (size_t i = 0; i < ts.size(); ++i) {
        const int t = ts[i];
        const int t_prev = i + 1 < ts.size() ? ts[i + 1] : 0;
        const double ab = sched.alpha_bar(t);
        const double ab_prev = sched.alpha_bar(t_prev);
        Tensor eps = eps_model(z, t);
        // eta = 0: z0_hat = (z - sqrt(1-ab) eps) / sqrt(ab), then jump
        Tensor z0_hat = scale(sub(z, scale(eps, std::sqrt(1.0 - ab))), 1.0 / std::sqrt(ab));
        z = add(scale(z0_hat, std::sqrt(ab_prev)), scale(eps, std::sqrt(1.0 - ab_prev)));
    }
    return z;
}

}  // namespace smartedit
