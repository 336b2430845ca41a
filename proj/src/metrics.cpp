#include "smartedit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "smartedit/errors.hpp"
#include "smartedit/rng.hpp"

namespace smartedit {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* op) {
    if (!a.same_shape(b)) throw ShapeError(std::string(op) + ": image shapes differ");
}

std::string fmt3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == '\t') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

double psnr(const Image& a, const Image& b, const Mask& region) {
    require_same_shape(a, b, "psnr");
    if (region.height != a.height || region.width != a.width)
        throw ShapeError("psnr: region shape mismatch");
    if (region.count() == 0) throw InvariantViolation("psnr: empty region");
    double acc = 0.0;
    int64_t n = 0;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            if (!region.at(y, x)) continue;
            for (int c = 0; c < 3; ++c) {
                const double d = a.at(c, y, x) - b.at(c, y, x);
                acc += d * d;
            }
            n += 3;
        }
    const double mse_v = acc / static_cast<double>(n);
    if (mse_v < 1e-12) return 99.0;
    return 10.0 * std::log10(1.0 / mse_v);
}

double ssim(const Image& a, const Image& b, const Mask& region) {
    require_same_shape(a, b, "ssim");
    if (region.height != a.height || region.width != a.width)
        throw ShapeError("ssim: region shape mismatch");
    constexpr int kWin = 8;
    constexpr int kStride = 4;
    constexpr double kC1 = 0.01 * 0.01;  // (K1*L)^2
    constexpr double kC2 = 0.03 * 0.03;  // (K2*L)^2

    double total = 0.0;
    int64_t n_windows = 0;
    for (int y0 = 0; y0 + kWin <= a.height; y0 += kStride) {
        for (int x0 = 0; x0 + kWin <= a.width; x0 += kStride) {
            int covered = 0;
            for (int y = y0; y < y0 + kWin; ++y)
                for (int x = x0; x < x0 + kWin; ++x) covered += region.at(y, x);
            if (2 * covered < kWin * kWin) continue;

            for (int c = 0; c < 3; ++c) {
                double ma = 0, mb = 0;
                for (int y = y0; y < y0 + kWin; ++y)
                    for (int x = x0; x < x0 + kWin; ++x) {
                        ma += a.at(c, y, x);
                        mb += b.at(c, y, x);
                    }
                const double inv = 1.0 / (kWin * kWin);
                ma *= inv;
                mb *= inv;
                double va = 0, vb = 0, cov = 0;
                for (int y = y0; y < y0 + kWin; ++y)
                    for (int x = x0; x < x0 + kWin; ++x) {
                        const double da = a.at(c, y, x) - ma;
                        const double db = b.at(c, y, x) - mb;
                        va += da * da;
                        vb += db * db;
                        cov += da * db;
                    }
                va *= inv;
                vb *= inv;
                cov *= inv;
                const double num = (2 * ma * mb + kC1) * (2 * cov + kC2);
                const double den = (ma * ma + mb * mb + kC1) * (va + vb + kC2);
                total += num / den;
                ++n_windows;
            }
        }
    }
    if (n_windows == 0) throw InvariantViolation("ssim: no window has enough region coverage");
    return total / static_cast<double>(n_windows);
}

double l1(const Image& a, const Image& b) {
    require_same_shape(a, b, "l1");
    double acc = 0.0;
    for (size_t i = 0; i < a.pix.size(); ++i) acc += std::fabs(a.pix[i] - b.pix[i]);
    return acc / static_cast<double>(a.pix.size());
}

double l1_region(const Image& a, const Image& b, const Mask& region) {
    require_same_shape(a, b, "l1_region");
    if (region.count() == 0) throw InvariantViolation("l1_region: empty region");
    double acc = 0.0;
    int64_t n = 0;
    for (int y = 0; y < a.height; ++y)
        for (int x = 0; x < a.width; ++x) {
            if (!region.at(y, x)) continue;
            for (int c = 0; c < 3; ++c) acc += std::fabs(a.at(c, y, x) - b.at(c, y, x));
            n += 3;
        }
    return acc / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// embedders
// ---------------------------------------------------------------------------

ToyConvEmbedder::ToyConvEmbedder(uint64_t seed, int n_features)
    : id_("toyconv-v1"), n_features_(n_features) {
    Rng rng(seed, "toy-embedder");
    kernels_.resize(static_cast<size_t>(n_features) * 3 * 3 * 3);
    for (double& k : kernels_) k = rng.normal();
}

std::vector<double> ToyConvEmbedder::embed(const Image& img, const Mask& region) const {
    const int h = img.height, w = img.width;
    std::vector<double> feat(static_cast<size_t>(n_features_), 0.0);
    for (int f = 0; f < n_features_; ++f) {
        double acc = 0.0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double v = 0.0;
                for (int c = 0; c < 3; ++c)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int iy = y + ky - 1, ix = x + kx - 1;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            if (!region.at(iy, ix)) continue;
                            v += kernels_[((static_cast<size_t>(f) * 3 + c) * 3 + ky) * 3 + kx] *
                                 img.at(c, iy, ix);
                        }
                acc += v;
            }
        feat[static_cast<size_t>(f)] = acc / static_cast<double>(h * w);
    }
    return feat;
}

const Embedder& get_embedder(const std::string& id) {
    static const ToyConvEmbedder toy;
    if (id == toy.id() || id == "toy") return toy;
    throw ConfigError("unknown embedder id: " + id);
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ShapeError("cosine_similarity: length mismatch");
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    constexpr double kTiny = 1e-24;
    if (na < kTiny && nb < kTiny) return 1.0;  // both empty: identical
    if (na < kTiny || nb < kTiny) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double embed_score(const Image& a, const Image& b, const Mask& region, const Embedder& e) {
    return cosine_similarity(e.embed(a, region), e.embed(b, region));
}

double embed_distance(const Image& a, const Image& b, const Mask& region, const Embedder& e) {
    return 1.0 - embed_score(a, b, region, e);
}

// ---------------------------------------------------------------------------
// instruction alignment
// ---------------------------------------------------------------------------

int ins_align_oracle(const Image& edited, const Image& target, const Image& source,
                     const Mask& edit_mask) {
    const Mask bg = mask_complement(edit_mask);
    const bool fg_ok =
        edit_mask.count() == 0 || l1_region(edited, target, edit_mask) < kInsAlignFgThreshold;
    const bool bg_ok = bg.count() == 0 || l1_region(edited, source, bg) < kInsAlignBgThreshold;
    return (fg_ok && bg_ok) ? 1 : 0;
}

double ins_align_votes(const VoteSheet& sheet) {
    if (sheet.votes.empty()) throw InvariantViolation("ins_align_votes: empty vote sheet");
    size_t expected = sheet.votes.begin()->second.size();
    double acc = 0.0;
    int64_t n = 0;
    for (const auto& [id, vs] : sheet.votes) {
        if (vs.empty() || vs.size() != expected)
            throw InvariantViolation("ins_align_votes: sample " + id +
                                     " does not have one judgment per annotator");
        for (int v : vs) {
            if (v != 0 && v != 1)
                throw InvariantViolation("ins_align_votes: judgment must be 0 or 1");
            acc += v;
            ++n;
        }
    }
    return acc / static_cast<double>(n);
}

VoteSheet parse_vote_sheet(const std::string& tsv_text) {
    VoteSheet sheet;
    std::istringstream in(tsv_text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto f = split_tabs(line);
        if (f.size() != 3) throw ConfigError("vote sheet: expected sample_id\\tannotator\\tjudgment");
        sheet.votes[f[0]].push_back(std::stoi(f[2]));
    }
    return sheet;
}

// ---------------------------------------------------------------------------
// user study
// ---------------------------------------------------------------------------

std::vector<Ballot> parse_ballots(const std::string& tsv_text) {
    std::vector<Ballot> out;
    std::istringstream in(tsv_text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto f = split_tabs(line);
        if (f.size() != 4)
            throw ConfigError("ballot: expected group\\tparticipant\\tcriterion\\tmethod");
        out.push_back(Ballot{f[0], f[1], f[2], f[3]});
    }
    return out;
}

std::map<std::string, std::map<std::string, double>> user_study_tally(
    const std::vector<Ballot>& ballots, const std::vector<std::string>& methods) {
    std::set<std::string> known(methods.begin(), methods.end());
    std::map<std::string, std::map<std::string, int64_t>> counts;
    std::map<std::string, int64_t> totals;
    for (const auto& b : ballots) {
        if (!known.count(b.method))
            throw InvariantViolation("user_study_tally: unknown method '" + b.method + "'");
        ++counts[b.criterion][b.method];
        ++totals[b.criterion];
    }
    std::map<std::string, std::map<std::string, double>> shares;
    for (auto& [criterion, per_method] : counts) {
        const double total = static_cast<double>(totals[criterion]);
        for (const auto& m : methods) {
            auto it = per_method.find(m);
            shares[criterion][m] = it == per_method.end() ? 0.0 : it->second / total;
        }
    }
    return shares;
}

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

std::string scenario_block(const std::string& task) {
    if (task.rfind("understand_", 0) == 0) return "understanding";
    if (task.rfind("reason_", 0) == 0) return "reasoning";
    return "other";
}

std::vector<AggregateRow> MetricsReport::aggregates() const {
    std::vector<SampleMetrics> sorted = rows;
    std::sort(sorted.begin(), sorted.end(),
              [](const SampleMetrics& a, const SampleMetrics& b) { return a.sample_id < b.sample_id; });

    auto fold = [](const std::vector<const SampleMetrics*>& group, const std::string& block,
                   const std::string& task) {
        AggregateRow row;
        row.block = block;
        row.task = task;
        row.n = static_cast<int>(group.size());
        for (const auto* s : group) {
            row.psnr_bg += s->psnr_bg;
            row.ssim_bg += s->ssim_bg;
            row.embed_dist_bg += s->embed_dist_bg;
            row.embed_fg += s->embed_fg;
            row.ins_align += s->ins_align;
            row.l1_full += s->l1_full;
        }
        if (row.n > 0) {
            const double inv = 1.0 / row.n;
            row.psnr_bg *= inv;
            row.ssim_bg *= inv;
            row.embed_dist_bg *= inv;
            row.embed_fg *= inv;
            row.ins_align *= inv;
            row.l1_full *= inv;
        }
        return row;
    };

    std::vector<std::string> block_order{"understanding", "reasoning", "other"};
    std::vector<AggregateRow> out;
    for (const auto& block : block_order) {
        std::vector<const SampleMetrics*> in_block;
        std::vector<std::string> task_order;
        for (const auto& s : sorted) {
            if (scenario_block(s.task) != block) continue;
            in_block.push_back(&s);
            if (std::find(task_order.begin(), task_order.end(), s.task) == task_order.end())
                task_order.push_back(s.task);
        }
        if (in_block.empty()) continue;
        out.push_back(fold(in_block, block, "ALL"));
        std::sort(task_order.begin(), task_order.end());
        for (const auto& task : task_order) {
            std::vector<const SampleMetrics*> in_task;
            for (const auto* s : in_block)
                if (s->task == task) in_task.push_back(s);
            out.push_back(fold(in_task, block, task));
        }
    }
    return out;
}

std::string report_header_tsv(const MetricsReport& r) {
    std::string h;
    h += "# smartedit metrics report\n";
    h += "# model=" + r.model_tag + "\tvariant=" + r.variant + "\tseed=" + std::to_string(r.seed) +
         "\tembedder=" + r.embedder_id + "\tconfig=" + r.config_hash + "\n";
    h += "block\ttask\tn\tpsnr_bg_db\tssim_bg\tembed_dist_bg[" + r.embedder_id + "]\tembed_fg[" +
         r.embedder_id + "]\tins_align\tl1_full\n";
    return h;
}

std::string report_tsv(const MetricsReport& r) {
    std::string out = report_header_tsv(r);
    for (const auto& a : r.aggregates()) {
        out += a.block + "\t" + a.task + "\t" + std::to_string(a.n) + "\t" + fmt3(a.psnr_bg) + "\t" +
               fmt3(a.ssim_bg) + "\t" + fmt3(a.embed_dist_bg) + "\t" + fmt3(a.embed_fg) + "\t" +
               fmt3(a.ins_align) + "\t" + fmt3(a.l1_full) + "\n";
    }
    return out;
}

std::string report_markdown(const MetricsReport& r) {
    std::string out;
    out += "### Metrics report — model " + r.model_tag + " (variant " + r.variant + ", seed " +
           std::to_string(r.seed) + ")\n\n";
    out += "Embedding columns use the pluggable embedder `" + r.embedder_id +
           "`, not real LPIPS/CLIP.\n\n";
    out += "| block | task | n | PSNR(dB) | SSIM | EmbedDist | EmbedScore | Ins-align | L1 |\n";
    out += "|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& a : r.aggregates()) {
        out += "| " + a.block + " | " + a.task + " | " + std::to_string(a.n) + " | " +
               fmt3(a.psnr_bg) + " | " + fmt3(a.ssim_bg) + " | " + fmt3(a.embed_dist_bg) + " | " +
               fmt3(a.embed_fg) + " | " + fmt3(a.ins_align) + " | " + fmt3(a.l1_full) + " |\n";
    }
    return out;
}

std::string sample_rows_tsv(const MetricsReport& r) {
    std::vector<SampleMetrics> sorted = r.rows;
    std::sort(sorted.begin(), sorted.end(),
              [](const SampleMetrics& a, const SampleMetrics& b) { return a.sample_id < b.sample_id; });
    std::string out = "sample_id\ttask\tpsnr_bg_db\tssim_bg\tembed_dist_bg\tembed_fg\tins_align\tl1_full\n";
    char buf[256];
    for (const auto& s : sorted) {
        std::snprintf(buf, sizeof(buf), "%s\t%s\t%.9f\t%.9f\t%.9f\t%.9f\t%d\t%.9f\n",
                      s.sample_id.c_str(), s.task.c_str(), s.psnr_bg, s.ssim_bg, s.embed_dist_bg,
                      s.embed_fg, s.ins_align, s.l1_full);
        out += buf;
    }
    return out;
}

std::vector<AggregateRow> parse_report_tsv(const std::string& text) {
    std::vector<AggregateRow> out;
    std::istringstream in(text);
    std::string line;
    bool past_header = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!past_header && line.rfind("block\t", 0) == 0) {
            past_header = true;
            continue;
        }
        auto f = split_tabs(line);
        if (f.size() != 9) continue;
        AggregateRow a;
        a.block = f[0];
        a.task = f[1];
        a.n = std::stoi(f[2]);
        a.psnr_bg = std::stod(f[3]);
        a.ssim_bg = std::stod(f[4]);
        a.embed_dist_bg = std::stod(f[5]);
        a.embed_fg = std::stod(f[6]);
        a.ins_align = std::stod(f[7]);
        a.l1_full = std::stod(f[8]);
        out.push_back(std::move(a));
    }
    return out;
}

}  // namespace smartedit
