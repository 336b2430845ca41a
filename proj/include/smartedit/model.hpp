#pragma once

#include <optional>

#include "smartedit/bim.hpp"
#include "smartedit/dataset.hpp"
#include "smartedit/diffusion.hpp"
#include "smartedit/lm.hpp"
#include "smartedit/qformer.hpp"

namespace smartedit {

struct ModelConfig {
    LmConfig lm;
    QFormerConfig qformer;
    UNetConfig unet;
    int bim_heads = 4;
    InteractionVariant variant = InteractionVariant::Bim;
    /// When true, v comes from a separately trained patch encoder instead of
    /// reusing the frozen LM patch embedding.
    bool separate_image_encoder = false;
    /// Probability of dropping each conditioning branch during training
    /// (enables classifier-free guidance at sampling time). 0 disables.
    double cond_dropout = 0.0;
    double lm_loss_weight = 1.0;
    double diffusion_loss_weight = 1.0;
};

/// The full editing stack: LM bridge -> QFormer -> interaction module ->
/// conditioned UNet over the toy latent codec.
class SmartEditModel {
public:
    SmartEditModel(const ModelConfig& cfg, uint64_t init_seed);

    const ModelConfig& config() const { return cfg_; }
    const LanguageModel& lm() const { return lm_; }
    LanguageModel& lm() { return lm_; }
    const QFormer& qformer() const { return qformer_; }
    const Bim& bim() const { return bim_; }
    const UNet& unet() const { return unet_; }
    const NoiseSchedule& schedule() const { return sched_; }

    /// v = E_phi(x): patch features for the interaction module.
    Tensor image_features(const Image& x) const;

    struct Bridge {
        TokenSequence seq;
        Tensor states;   // LM final states
        Tensor h;        // [r, d]
        Tensor f;        // [n_queries, d]
        Tensor v;        // [m, d]
        Tensor f_prime;  // [n_queries, d]
        Tensor v_prime;  // [m, d]
    };
    Bridge bridge(const Image& x, const std::string& instruction) const;

    struct LossParts {
        Tensor total;
        double lm_nll = 0.0;
        double diffusion = 0.0;
        int t = 0;
    };
    /// Draws t and eps from noise_rng, runs the full chain on the sample and
    /// returns mse(eps, eps_hat) * w_diff + img_token_nll * w_lm.
    LossParts compute_loss(const InstructionSample& sample, Rng& noise_rng) const;

    /// Stage-1 objective: mse(f, reference text embedding) + LM loss.
    struct Stage1Parts {
        Tensor total;
        double mse_part = 0.0;
        double lm_nll = 0.0;
    };
    Stage1Parts stage1_loss(const Image& x, const std::string& caption,
                            const ReferenceTextEncoder& ref, double mse_weight = 1.0,
                            double lm_weight = 1.0) const;

    /// Deterministic DDIM edit; same seed gives bit-identical output. The
    /// result is 8-bit quantized so in-memory and on-disk evaluations agree.
    Image edit(const Image& x, const std::string& instruction, int steps, uint64_t seed,
               double cfg_text = 1.0, double cfg_image = 1.0) const;

    ParamMap all_params() const;
    ParamMap trainable_params(int stage) const;
    ParamMap lm_base_params() const;
    /// Sets requires_grad so gradients flow exactly into that stage's
    /// trainable set.
    void set_stage(int stage);

    void save(const std::string& path) const;
    void load(const std::string& path);
    /// Loads every checkpoint entry whose name matches a model parameter;
    /// used to seed stage 2 from a stage-1 checkpoint.
    void load_matching(const std::string& path);

private:
    ModelConfig cfg_;
    LanguageModel lm_;
    QFormer qformer_;
    Bim bim_;
    UNet unet_;
    NoiseSchedule sched_;
    Linear separate_encoder_;  // defined only when configured
};

}  // namespace smartedit
