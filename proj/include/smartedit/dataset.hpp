#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "smartedit/scene.hpp"

namespace smartedit {

enum class Task {
    UnderstandLocation,
    UnderstandColor,
    UnderstandSize,
    UnderstandMirror,
    ReasonKnowledge,
    Segmentation,
    PlainEdit,
};

std::string task_name(Task t);
Task parse_task(const std::string& s);

enum class Split { Train, ReasonEditEval };
std::string split_name(Split s);
Split parse_split(const std::string& s);

/// One training/eval pair. Off-mask pixels of source and target are
/// bit-identical by construction.
struct InstructionSample {
    std::string sample_id;
    Image source;
    std::string instruction;
    Image target;
    Mask edit_mask;
    Task task = Task::PlainEdit;
    Split split = Split::Train;
    uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// knowledge table (reasoning scenarios)
// ---------------------------------------------------------------------------

struct KnowledgeEntry {
    std::string phrase;  // "can tell the time"
    ShapeKind shape;
    int color;  // palette index
};

const std::vector<KnowledgeEntry>& knowledge_table();

/// Exhaustive attribute search: index of the unique object matching the
/// class, or nullopt when absent/ambiguous.
std::optional<int> find_unique_class_object(const Scene& scene, ShapeKind shape, int color);

// ---------------------------------------------------------------------------
// edits
// ---------------------------------------------------------------------------

enum class EditKind { Remove, Recolor, Replace, Resize, Add };
enum class SelectorKind {
    UniqueShape,
    Leftmost,
    Rightmost,
    Largest,
    Smallest,
    ColorShape,
    InsideMirror,
    OutsideMirror,
    Knowledge,
};

struct EditSpec {
    EditKind kind = EditKind::Remove;
    SelectorKind selector = SelectorKind::UniqueShape;
    ShapeKind shape = ShapeKind::Circle;  // shape the selector refers to
    int color = -1;                       // ColorShape selector
    int knowledge = -1;                   // knowledge_table index
    ShapeKind new_shape = ShapeKind::Circle;
    int new_color = -1;
    bool grow = false;  // Resize direction
};

/// Unique object index picked by the selector; nullopt when the selector is
/// ambiguous (ties) or matches nothing. Callers reseed on nullopt.
std::optional<int> resolve_selector(const Scene& scene, const EditSpec& spec);

std::string instruction_text(const EditSpec& spec);

/// Applies the edit; returns nullopt when the selector rejects or the edit
/// is infeasible (e.g. a resize would leave the canvas).
std::optional<InstructionSample> build_pair(const Scene& scene, const EditSpec& spec);

/// Mask-as-image sample: white object on black, full-canvas edit mask.
InstructionSample build_segmentation_sample(const Scene& scene, int idx, const EditSpec& spec);

// ---------------------------------------------------------------------------
// corpus generation
// ---------------------------------------------------------------------------

struct DatasetSpec {
    uint64_t global_seed = 0;
    int n_train = 476;
    int n_eval = 219;
    // generation weights: plain_edit, segmentation, understanding, reasoning
    std::array<double, 4> gen_mix = {1.0, 1.0, 1.0, 1.0};
    int image_size = 32;
};

/// Deterministic per (task, sample_seed); retries internally on rejection.
InstructionSample make_sample(Task task, uint64_t sample_seed, Split split, int image_size = 32);

std::vector<InstructionSample> generate_split(const DatasetSpec& spec, Split split);

struct ManifestEntry {
    std::string sample_id;
    Task task;
    Split split;
    uint64_t seed;
    std::string instruction;
    std::string source_path;  // relative to the manifest directory
    std::string target_path;
    std::string mask_path;
};

/// Writes images/ plus manifest_train.tsv and manifest_eval.tsv under out_dir.
void write_dataset(const DatasetSpec& spec, const std::string& out_dir);

std::vector<ManifestEntry> read_manifest(const std::string& manifest_path);
InstructionSample load_sample(const ManifestEntry& entry, const std::string& manifest_dir);

// ---------------------------------------------------------------------------
// text
// ---------------------------------------------------------------------------

/// All words that can ever appear in instructions or captions; the LM
/// vocabulary is built from exactly this list.
const std::vector<std::string>& instruction_lexicon();

/// Lowercased word split; punctuation is dropped.
std::vector<std::string> tokenize_words(const std::string& text);

/// Stage-1 caption, e.g. "a red circle and a blue square".
std::string scene_caption(const Scene& scene);

inline constexpr uint64_t kTrainSeedBase = 1'000'000;
inline constexpr uint64_t kEvalSeedBase = 2'000'000;

}  // namespace smartedit
