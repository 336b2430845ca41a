#pragma once

#include <map>

#include "smartedit/config.hpp"
#include "smartedit/metrics.hpp"

namespace smartedit {

struct TracePoint {
    int64_t step;
    double total;
    double lm;
    double diffusion;  // stage 1 logs the alignment-mse component here
};

struct RunRecord {
    std::string config_hash;
    std::vector<TracePoint> trace;
    std::vector<std::string> checkpoint_paths;
    std::string final_checkpoint;
    std::string loss_trace_path;
    std::map<Task, int64_t> consumed_task_counts;
    double wall_seconds = 0.0;
};

/// Aligns the IMG-token embeddings and the QFormer against the frozen
/// reference text encoder on the synthetic caption corpus.
RunRecord train_stage1(const ExperimentConfig& cfg);

/// Full editing objective on the configured dataset mix. Verifies at every
/// checkpoint that the non-LoRA LM base weights are bit-identical to their
/// initial values and throws InvariantViolation on any drift.
RunRecord train_stage2(const ExperimentConfig& cfg);

/// Samples every item of the split with a fixed per-sample sampler seed and
/// computes the full metric set. With use_gt_as_output the ground-truth
/// targets stand in for model output (self-evaluation ceiling).
/// When out_prefix is non-empty writes <prefix>.tsv, <prefix>.md and
/// <prefix>_samples.tsv.
MetricsReport evaluate_checkpoint(const ExperimentConfig& cfg, const std::string& checkpoint_path,
                                  Split split, const std::string& embedder_id,
                                  const std::string& out_prefix = "",
                                  bool use_gt_as_output = false);

struct AblationRun {
    std::string label;
    uint64_t seed = 0;
    std::string config_hash;
    double understanding_ins_align = 0.0;
    double reasoning_ins_align = 0.0;
    MetricsReport report;  // both eval blocks in one pass
};

struct AblationResult {
    std::vector<AblationRun> runs;
    std::map<std::string, double> mean_understanding;
    std::map<std::string, double> mean_reasoning;
    bool ordering_ok = false;
    std::string report_text;
};

/// Trains Plain / SimpleCA / BIM with identical seeds and data order,
/// evaluates both eval blocks and emits a Table-2-shaped report. The
/// ordering flag records whether BIM's mean reasoning Ins-align is >= each
/// alternative. jobs > 1 runs independent experiments concurrently.
AblationResult run_ablation_bim(const ExperimentConfig& base, int n_seeds = 3, int jobs = 1);

/// Dataset-usage ablation: edit-only, edit+seg, edit+synthetic, full mix.
/// The ordering flag records whether the full mix beats edit-only on the
/// reasoning block.
AblationResult run_ablation_datasets(const ExperimentConfig& base, int n_seeds = 3, int jobs = 1);

}  // namespace smartedit
