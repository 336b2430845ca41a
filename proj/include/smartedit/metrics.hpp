#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "smartedit/image.hpp"

namespace smartedit {

/// Peak signal-to-noise ratio over the region, pixel range [0,1].
/// mse below 1e-12 clamps to 99.0 dB so aggregates stay finite.
double psnr(const Image& a, const Image& b, const Mask& region);

/// SSIM restricted to the region. Windows are 8x8 with stride 4; a window
/// with less than 50% region coverage is skipped. K1=0.01, K2=0.03, L=1,
/// population variance, per channel then averaged.
double ssim(const Image& a, const Image& b, const Mask& region);

/// Mean absolute difference over all pixels and channels.
double l1(const Image& a, const Image& b);

/// Mean absolute difference restricted to the region.
double l1_region(const Image& a, const Image& b, const Mask& region);

// ---------------------------------------------------------------------------
// pluggable embedding scores (stand-ins for CLIP score / LPIPS)
// ---------------------------------------------------------------------------

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::string id() const = 0;
    /// Feature vector of the region (off-region pixels are zeroed first).
    virtual std::vector<double> embed(const Image& img, const Mask& region) const = 0;
};

/// Fixed seeded random 3x3 conv bank + global mean pooling. Purely linear in
/// the pixels, so negating a region flips the cosine sign exactly.
class ToyConvEmbedder : public Embedder {
public:
    explicit ToyConvEmbedder(uint64_t seed = 0, int n_features = 8);
    std::string id() const override { return id_; }
    std::vector<double> embed(const Image& img, const Mask& region) const override;

private:
    std::string id_;
    int n_features_;
    std::vector<double> kernels_;  // [k][3][3][3]
};

const Embedder& get_embedder(const std::string& id);  // throws ConfigError on unknown id

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);
double embed_score(const Image& a, const Image& b, const Mask& region, const Embedder& e);
/// LPIPS-slot distance: 1 - cosine, lower is better.
double embed_distance(const Image& a, const Image& b, const Mask& region, const Embedder& e);

// ---------------------------------------------------------------------------
// instruction alignment
// ---------------------------------------------------------------------------

/// Programmatic success predicate: masked L1 to the ideal target below 0.1
/// and off-mask L1 to the source below 0.05.
inline constexpr double kInsAlignFgThreshold = 0.1;
inline constexpr double kInsAlignBgThreshold = 0.05;

int ins_align_oracle(const Image& edited, const Image& target, const Image& source,
                     const Mask& edit_mask);

struct VoteSheet {
    // sample_id -> one binary judgment per annotator
    std::map<std::string, std::vector<int>> votes;
};

double ins_align_votes(const VoteSheet& sheet);
VoteSheet parse_vote_sheet(const std::string& tsv_text);

// ---------------------------------------------------------------------------
// user study
// ---------------------------------------------------------------------------

struct Ballot {
    std::string group_id;
    std::string participant_id;
    std::string criterion;
    std::string method;
};

std::vector<Ballot> parse_ballots(const std::string& tsv_text);

/// criterion -> method -> share of picks. Shares sum to 1 per criterion.
std::map<std::string, std::map<std::string, double>> user_study_tally(
    const std::vector<Ballot>& ballots, const std::vector<std::string>& methods);

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

struct SampleMetrics {
    std::string sample_id;
    std::string task;
    double psnr_bg = 0.0;
    double ssim_bg = 0.0;
    double embed_dist_bg = 0.0;
    double embed_fg = 0.0;
    int ins_align = 0;
    double l1_full = 0.0;
};

struct AggregateRow {
    std::string block;  // understanding | reasoning | other
    std::string task;   // specific task or ALL
    int n = 0;
    double psnr_bg = 0.0;
    double ssim_bg = 0.0;
    double embed_dist_bg = 0.0;
    double embed_fg = 0.0;
    double ins_align = 0.0;
    double l1_full = 0.0;
};

struct MetricsReport {
    std::string model_tag;
    std::string variant;
    std::string embedder_id;
    std::string config_hash;
    uint64_t seed = 0;
    std::vector<SampleMetrics> rows;

    /// Deterministic fold in sample-id order: per-block ALL rows first,
    /// then per-task rows.
    std::vector<AggregateRow> aggregates() const;
};

std::string scenario_block(const std::string& task);

std::string report_header_tsv(const MetricsReport& r);  // golden-checked
std::string report_tsv(const MetricsReport& r);
std::string report_markdown(const MetricsReport& r);
std::string sample_rows_tsv(const MetricsReport& r);

/// Parse-back of the aggregate rows of report_tsv (used by the ablation
/// runner and round-trip tests).
std::vector<AggregateRow> parse_report_tsv(const std::string& text);

}  // namespace smartedit
