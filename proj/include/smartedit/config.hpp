#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>

#include "smartedit/model.hpp"

namespace smartedit {

/// One training/eval run, resolved from a flat INI-style file with sections.
/// Stage-dependent optimizer defaults: stage 1 uses lr 2e-4, wd 0; stage 2
/// uses lr 1e-5, wd 0, warm-up ratio 0.001.
struct ExperimentConfig {
    uint64_t global_seed = 0;
    int stage = 2;

    ModelConfig model;

    // batch-sampling weights: plain_edit, segmentation, understanding, reasoning
    std::array<double, 4> mix = {1.0, 1.0, 1.0, 1.0};

    int n_train = 476;
    int n_eval = 219;
    int image_size = 32;

    double lr = 1e-5;
    double weight_decay = 0.0;
    double warmup_ratio = 0.001;
    int64_t steps = 20000;
    int batch = 16;

    double lm_weight = 1.0;
    double diffusion_weight = 1.0;
    double stage1_mse_weight = 1.0;

    std::string data_dir = "data";
    std::string out_dir = "run";
    std::string stage1_checkpoint;
    int checkpoint_every = 1000;
    int stage1_corpus_size = 256;

    int eval_steps = 50;
    double cfg_text = 1.0;
    double cfg_image = 1.0;

    void validate() const;  // throws ConfigError
};

ExperimentConfig default_config(int stage);

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Canonical resolved dump; whitespace- and comment-insensitive inputs that
/// agree on every field serialize identically.
std::string serialize_config(const ExperimentConfig& cfg);

/// FNV-1a over the canonical serialization, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace smartedit
