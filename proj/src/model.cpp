#include "smartedit/model.hpp"

#include <cmath>
#include <map>

#include "smartedit/checkpoint.hpp"
#include "smartedit/errors.hpp"

namespace smartedit {

SmartEditModel::SmartEditModel(const ModelConfig& cfg, uint64_t init_seed)
    : cfg_(cfg),
      lm_(cfg.lm, Rng(init_seed, "init")),
      qformer_(cfg.qformer, Rng(init_seed, "init")),
      bim_(BimConfig{cfg.qformer.d_model, cfg.bim_heads}, Rng(init_seed, "init")),
      unet_(cfg.unet, Rng(init_seed, "init")),
      sched_(NoiseSchedule::linear()) {
    if (cfg.qformer.d_model != cfg.lm.d_model)
        throw ConfigError("ModelConfig: qformer d_model must match lm d_model");
    if (cfg.unet.cross_attn_dim != cfg.lm.d_model)
        throw ConfigError("ModelConfig: unet cross_attn_dim must match lm d_model");
    if (cfg.separate_image_encoder) {
        Rng rng = Rng(init_seed, "init").split("image-encoder");
        separate_encoder_ = Linear(rng, 3LL * cfg.lm.patch * cfg.lm.patch, cfg.lm.d_model);
    }
}

Tensor SmartEditModel::image_features(const Image& x) const {
    if (!cfg_.separate_image_encoder) return lm_.patch_embed(x);
    const int ps = cfg_.lm.patch;
    const int64_t patch_dim = 3LL * ps * ps;
    const int p = lm_.n_patches(x);
    std::vector<double> flat(static_cast<size_t>(p) * static_cast<size_t>(patch_dim));
    int row = 0;
    for (int py = 0; py < x.height; py += ps)
        for (int px = 0; px < x.width; px += ps, ++row) {
            size_t k = static_cast<size_t>(row) * patch_dim;
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < ps; ++y)
                    for (int xx = 0; xx < ps; ++xx) flat[k++] = x.at(c, py + y, px + xx);
        }
    return separate_encoder_.forward(Tensor({p, patch_dim}, std::move(flat)));
}

SmartEditModel::Bridge SmartEditModel::bridge(const Image& x, const std::string& instruction) const {
    Bridge out;
    out.seq = make_sequence(lm_.vocab(), instruction, lm_.n_patches(x));
    auto fwd = lm_.forward(out.seq, x);
    out.states = fwd.states;
    out.h = fwd.hidden;
    out.f = qformer_.forward(out.h);
    out.v = image_features(x);
    auto inter = bim_.forward_variant(cfg_.variant, out.f, out.v);
    out.f_prime = inter.f_prime;
    out.v_prime = inter.v_prime;
    return out;
}

SmartEditModel::LossParts SmartEditModel::compute_loss(const InstructionSample& sample,
                                                       Rng& noise_rng) const {
    Bridge br = bridge(sample.source, sample.instruction);
    Tensor nll = lm_.img_token_nll_from_states(br.states, br.seq);

    Tensor f_prime = br.f_prime;
    Tensor v_prime = br.v_prime;
    Tensor cx = toy_encode(sample.source);
    if (cfg_.cond_dropout > 0.0) {
        if (noise_rng.uniform() < cfg_.cond_dropout) f_prime = Tensor::zeros(f_prime.shape());
        if (noise_rng.uniform() < cfg_.cond_dropout) {
            cx = Tensor::zeros(cx.shape());
            v_prime = Tensor::zeros(v_prime.shape());
        }
    }

    Tensor z0 = toy_encode(sample.target);
    const int t = static_cast<int>(noise_rng.uniform_int(1, sched_.T));
    Tensor eps = Tensor::randn(noise_rng, z0.shape());
    Tensor z_t = q_sample(z0, t, eps, sched_);
    Tensor eps_hat = unet_.forward(z_t, cx, t, f_prime, v_prime);

    Tensor diffusion = mse(eps, eps_hat);
    LossParts parts;
    parts.lm_nll = nll.item();
    parts.diffusion = diffusion.item();
    parts.t = t;
    parts.total = add(scale(diffusion, cfg_.diffusion_loss_weight),
                      scale(nll, cfg_.lm_loss_weight));
    return parts;
}

SmartEditModel::Stage1Parts SmartEditModel::stage1_loss(const Image& x, const std::string& caption,
                                                        const ReferenceTextEncoder& ref,
                                                        double mse_weight,
                                                        double lm_weight) const {
    TokenSequence seq = make_sequence(lm_.vocab(), caption, lm_.n_patches(x));
    auto fwd = lm_.forward(seq, x);
    Tensor nll = lm_.img_token_nll_from_states(fwd.states, seq);
    Tensor f = qformer_.forward(fwd.hidden);
    Tensor target = ref.encode_tiled(lm_.vocab().encode_words(caption), cfg_.qformer.n_queries);
    Tensor mse_term = mse(f, target);
    Stage1Parts parts;
    parts.mse_part = mse_term.item();
    parts.lm_nll = nll.item();
    parts.total = add(scale(mse_term, mse_weight), scale(nll, lm_weight));
    return parts;
}

Image SmartEditModel::edit(const Image& x, const std::string& instruction, int steps,
                           uint64_t seed, double cfg_text, double cfg_image) const {
    NoGradGuard ng;
    Bridge br = bridge(x, instruction);
    Tensor cx = toy_encode(x);
    const bool use_cfg = cfg_text != 1.0 || cfg_image != 1.0;
    Tensor null_f = use_cfg ? Tensor::zeros(br.f_prime.shape()) : Tensor();
    Tensor null_cx = use_cfg ? Tensor::zeros(cx.shape()) : Tensor();
    Tensor null_v = use_cfg ? Tensor::zeros(br.v_prime.shape()) : Tensor();

    EpsModel eps_model = [&](const Tensor& z_t, int t) {
        if (!use_cfg) return unet_.forward(z_t, cx, t, br.f_prime, br.v_prime);
        // two-scale guidance in the InstructPix2Pix style:
        // e = e00 + s_img (eI0 - e00) + s_txt (eIT - eI0)
        Tensor e00 = unet_.forward(z_t, null_cx, t, null_f, null_v);
        Tensor eI0 = unet_.forward(z_t, cx, t, null_f, br.v_prime);
        Tensor eIT = unet_.forward(z_t, cx, t, br.f_prime, br.v_prime);
        Tensor out = add(e00, scale(sub(eI0, e00), cfg_image));
        return add(out, scale(sub(eIT, eI0), cfg_text));
    };
    Tensor z0 = ddim_sample_latent(eps_model, sched_, cx.shape(), steps,
                                   Rng(seed, "ddim-noise"));
    return quantize_8bit(toy_decode(z0, /*clamp01=*/true));
}

ParamMap SmartEditModel::all_params() const {
    ParamMap p;
    p.merge("", lm_.params());
    p.merge("", qformer_.params());
    p.merge("", bim_.params());
    p.merge("", unet_.params());
    if (cfg_.separate_image_encoder) p.merge("", separate_encoder_.params("image_encoder"));
    return p;
}

ParamMap SmartEditModel::trainable_params(int stage) const {
    ParamMap p;
    p.merge("", lm_.img_embedding_params());
    p.merge("", qformer_.params());
    if (stage == 2) {
        p.merge("", lm_.lora_params());
        p.merge("", bim_.params());
        p.merge("", unet_.params());
        if (cfg_.separate_image_encoder) p.merge("", separate_encoder_.params("image_encoder"));
    }
    return p;
}

ParamMap SmartEditModel::lm_base_params() const { return lm_.base_params(); }

void SmartEditModel::set_stage(int stage) {
    if (stage != 1 && stage != 2) throw ConfigError("set_stage: stage must be 1 or 2");
    all_params().set_requires_grad(false);
    trainable_params(stage).set_requires_grad(true);
}

void SmartEditModel::save(const std::string& path) const {
    save_checkpoint(path, all_params().items);
}

void SmartEditModel::load(const std::string& path) {
    auto params = all_params().items;
    load_checkpoint_into(path, params);
}

void SmartEditModel::load_matching(const std::string& path) {
    auto entries = load_checkpoint(path);
    std::map<std::string, Tensor> by_name(entries.begin(), entries.end());
    for (auto& [name, p] : all_params().items) {
        auto it = by_name.find(name);
        if (it == by_name.end()) continue;
        if (it->second.shape() != p.shape())
            throw ConfigError("checkpoint shape mismatch for " + name);
        p.raw() = it->second.values();
    }
}

}  // namespace smartedit
