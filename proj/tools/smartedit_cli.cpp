#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "smartedit/checkpoint.hpp"
#include "smartedit/errors.hpp"
#include "smartedit/train.hpp"

using namespace smartedit;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInvariant = 3;

struct CommonFlags {
    std::string config_path;
    int64_t seed = -1;
    std::string out_dir;
};

ExperimentConfig resolve_config(const CommonFlags& flags, int default_stage) {
    ExperimentConfig cfg =
        flags.config_path.empty() ? default_config(default_stage) : load_config(flags.config_path);
    if (flags.seed >= 0) cfg.global_seed = static_cast<uint64_t>(flags.seed);
    if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
    return cfg;
}

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "Experiment config file (INI)");
    cmd->add_option("--seed", flags.seed, "Override the global seed");
    cmd->add_option("--out", flags.out_dir, "Override the output directory");
}

void write_vocab(const ExperimentConfig& cfg, const std::string& dir) {
    Vocabulary vocab = Vocabulary::build(cfg.model.lm.base_vocab, cfg.model.lm.img_tokens);
    fs::create_directories(dir);
    atomic_write_file((fs::path(dir) / "vocab.txt").string(), vocab.serialize());
}

int run(int argc, char** argv) {
    CLI::App app{"smartedit: toy instruction-based image editing stack"};
    app.require_subcommand(1);

    CommonFlags gen_flags;
    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic paired dataset");
    add_common(gen, gen_flags);

    CommonFlags s1_flags;
    auto* s1 = app.add_subcommand("train-stage1", "Align IMG embeddings + QFormer");
    add_common(s1, s1_flags);

    CommonFlags s2_flags;
    auto* s2 = app.add_subcommand("train-stage2", "Train the full editing objective");
    add_common(s2, s2_flags);

    CommonFlags ab_flags, ad_flags;
    int ab_seeds = 3, ab_jobs = 1, ad_seeds = 3, ad_jobs = 1;
    auto* ab = app.add_subcommand("ablate-bim", "Plain/SimpleCA/BIM ablation (Table-2-shaped)");
    add_common(ab, ab_flags);
    ab->add_option("--seeds", ab_seeds, "Number of seeds per variant");
    ab->add_option("--jobs", ab_jobs, "Concurrent runs");
    auto* ad = app.add_subcommand("ablate-data", "Dataset-usage ablation (Table-3-shaped)");
    add_common(ad, ad_flags);
    ad->add_option("--seeds", ad_seeds, "Number of seeds per mix");
    ad->add_option("--jobs", ad_jobs, "Concurrent runs");

    CommonFlags ev_flags;
    std::string ev_checkpoint, ev_split = "eval", ev_embedder = "toyconv-v1";
    bool ev_use_gt = false;
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
    add_common(ev, ev_flags);
    ev->add_option("--checkpoint", ev_checkpoint, "Model checkpoint path");
    ev->add_option("--split", ev_split, "train | eval");
    ev->add_option("--embedder", ev_embedder, "Embedder id for the embed-score columns");
    ev->add_flag("--use-gt", ev_use_gt, "Evaluate ground-truth targets as if model output");

    CommonFlags sm_flags;
    std::string sm_checkpoint, sm_input, sm_instruction, sm_output = "edited.ppm";
    int sm_steps = 50;
    int64_t sm_sample_seed = 0;
    double sm_cfg_text = 1.0, sm_cfg_image = 1.0;
    auto* sm = app.add_subcommand("sample", "Edit one image with an instruction");
    add_common(sm, sm_flags);
    sm->add_option("--checkpoint", sm_checkpoint, "Model checkpoint path");
    sm->add_option("--input", sm_input, "Source image (PPM)")->required();
    sm->add_option("--instruction", sm_instruction, "Edit instruction")->required();
    sm->add_option("--output", sm_output, "Output image path (PPM)");
    sm->add_option("--steps", sm_steps, "DDIM steps");
    sm->add_option("--sample-seed", sm_sample_seed, "Sampler noise seed");
    sm->add_option("--cfg-text", sm_cfg_text, "Text guidance scale (1.0 = off)");
    sm->add_option("--cfg-image", sm_cfg_image, "Image guidance scale (1.0 = off)");

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        ExperimentConfig cfg = resolve_config(gen_flags, 2);
        const std::string out = gen_flags.out_dir.empty() ? cfg.data_dir : gen_flags.out_dir;
        DatasetSpec spec;
        spec.global_seed = cfg.global_seed;
        spec.n_train = cfg.n_train;
        spec.n_eval = cfg.n_eval;
        spec.image_size = cfg.image_size;
        write_dataset(spec, out);
        write_vocab(cfg, out);
        std::printf("wrote %d train + %d eval samples under %s\n", spec.n_train, spec.n_eval,
                    out.c_str());
        return kExitOk;
    }
    if (s1->parsed()) {
        ExperimentConfig cfg = resolve_config(s1_flags, 1);
        cfg.stage = 1;
        RunRecord rec = train_stage1(cfg);
        write_vocab(cfg, cfg.out_dir);
        std::printf("stage-1 done: %lld steps, final loss %.6f, checkpoint %s\n",
                    static_cast<long long>(cfg.steps), rec.trace.back().total,
                    rec.final_checkpoint.c_str());
        return kExitOk;
    }
    if (s2->parsed()) {
        ExperimentConfig cfg = resolve_config(s2_flags, 2);
        cfg.stage = 2;
        RunRecord rec = train_stage2(cfg);
        write_vocab(cfg, cfg.out_dir);
        std::printf("stage-2 done: %lld steps, final loss %.6f, checkpoint %s\n",
                    static_cast<long long>(cfg.steps), rec.trace.back().total,
                    rec.final_checkpoint.c_str());
        return kExitOk;
    }
    if (ab->parsed()) {
        ExperimentConfig cfg = resolve_config(ab_flags, 2);
        AblationResult result = run_ablation_bim(cfg, ab_seeds, ab_jobs);
        fs::create_directories(cfg.out_dir);
        atomic_write_file((fs::path(cfg.out_dir) / "ablation_bim.tsv").string(),
                          result.report_text);
        std::fputs(result.report_text.c_str(), stdout);
        if (!result.ordering_ok) {
            std::fprintf(stderr, "ablate-bim: BIM did not dominate on the reasoning split\n");
            return kExitInvariant;
        }
        return kExitOk;
    }
    if (ad->parsed()) {
        ExperimentConfig cfg = resolve_config(ad_flags, 2);
        AblationResult result = run_ablation_datasets(cfg, ad_seeds, ad_jobs);
        fs::create_directories(cfg.out_dir);
        atomic_write_file((fs::path(cfg.out_dir) / "ablation_data.tsv").string(),
                          result.report_text);
        std::fputs(result.report_text.c_str(), stdout);
        if (!result.ordering_ok) {
            std::fprintf(stderr, "ablate-data: full mix did not beat edit-only on reasoning\n");
            return kExitInvariant;
        }
        return kExitOk;
    }
    if (ev->parsed()) {
        ExperimentConfig cfg = resolve_config(ev_flags, 2);
        if (ev_checkpoint.empty() && !ev_use_gt)
            throw ConfigError("eval: --checkpoint is required unless --use-gt is given");
        const std::string prefix = (fs::path(cfg.out_dir) / "eval_report").string();
        MetricsReport report = evaluate_checkpoint(cfg, ev_checkpoint, parse_split(ev_split),
                                                   ev_embedder, prefix, ev_use_gt);
        std::fputs(report_tsv(report).c_str(), stdout);
        std::printf("reports written to %s.{tsv,md}\n", prefix.c_str());
        return kExitOk;
    }
    if (sm->parsed()) {
        ExperimentConfig cfg = resolve_config(sm_flags, 2);
        SmartEditModel model(cfg.model, cfg.global_seed);
        if (!sm_checkpoint.empty()) model.load(sm_checkpoint);
        Image source = read_ppm(sm_input);
        Image edited = model.edit(source, sm_instruction, sm_steps,
                                  static_cast<uint64_t>(sm_sample_seed), sm_cfg_text,
                                  sm_cfg_image);
        write_ppm(sm_output, edited);
        std::printf("edited image written to %s\n", sm_output.c_str());
        return kExitOk;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const InvariantViolation& e) {
        std::fprintf(stderr, "invariant violation: %s\n", e.what());
        return kExitInvariant;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
