#include "smartedit/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "smartedit/checkpoint.hpp"
#include "smartedit/errors.hpp"
#include "smartedit/rng.hpp"

namespace smartedit {

namespace fs = std::filesystem;

std::string task_name(Task t) {
    switch (t) {
        case Task::UnderstandLocation: return "understand_location";
        case Task::UnderstandColor: return "understand_color";
        case Task::UnderstandSize: return "understand_size";
        case Task::UnderstandMirror: return "understand_mirror";
        case Task::ReasonKnowledge: return "reason_knowledge";
        case Task::Segmentation: return "segmentation";
        case Task::PlainEdit: return "plain_edit";
    }
    return "?";
}

Task parse_task(const std::string& s) {
    for (Task t : {Task::UnderstandLocation, Task::UnderstandColor, Task::UnderstandSize,
                   Task::UnderstandMirror, Task::ReasonKnowledge, Task::Segmentation,
                   Task::PlainEdit})
        if (task_name(t) == s) return t;
    throw ConfigError("unknown task: " + s);
}

std::string split_name(Split s) {
    return s == Split::Train ? "train" : "reason_edit_eval";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "reason_edit_eval" || s == "eval") return Split::ReasonEditEval;
    throw ConfigError("unknown split: " + s);
}

// ---------------------------------------------------------------------------
// knowledge table
// ---------------------------------------------------------------------------

const std::vector<KnowledgeEntry>& knowledge_table() {
    static const std::vector<KnowledgeEntry> table = {
        {"can tell the time", ShapeKind::Circle, palette_index("white")},
        {"has the most vitamins", ShapeKind::Circle, palette_index("orange")},
        {"warns about danger", ShapeKind::Triangle, palette_index("red")},
        {"is the color of the sky", ShapeKind::Square, palette_index("blue")},
        {"glows like the sun", ShapeKind::Circle, palette_index("yellow")},
        {"is the color of grass", ShapeKind::Square, palette_index("green")},
    };
    return table;
}

std::optional<int> find_unique_class_object(const Scene& scene, ShapeKind shape, int color) {
    int found = -1;
    for (size_t i = 0; i < scene.objects.size(); ++i) {
        const auto& o = scene.objects[i];
        if (o.kind == shape && o.color == color) {
            if (found >= 0) return std::nullopt;
            found = static_cast<int>(i);
        }
    }
    if (found < 0) return std::nullopt;
    return found;
}

// ---------------------------------------------------------------------------
// selectors
// ---------------------------------------------------------------------------

std::optional<int> resolve_selector(const Scene& scene, const EditSpec& spec) {
    std::vector<int> candidates;
    const int half = scene.size / 2;
    for (size_t i = 0; i < scene.objects.size(); ++i) {
        const auto& o = scene.objects[i];
        if (spec.selector == SelectorKind::Knowledge) continue;  // handled below
        if (o.kind != spec.shape) continue;
        switch (spec.selector) {
            case SelectorKind::ColorShape:
                if (o.color == spec.color) candidates.push_back(static_cast<int>(i));
                break;
            case SelectorKind::InsideMirror:
                if (o.cx >= half) candidates.push_back(static_cast<int>(i));
                break;
            case SelectorKind::OutsideMirror:
                if (o.cx < half) candidates.push_back(static_cast<int>(i));
                break;
            default:
                candidates.push_back(static_cast<int>(i));
        }
    }
    switch (spec.selector) {
        case SelectorKind::Knowledge: {
            if (spec.knowledge < 0 ||
                spec.knowledge >= static_cast<int>(knowledge_table().size()))
                throw InvariantViolation("resolve_selector: bad knowledge index");
            const auto& k = knowledge_table()[static_cast<size_t>(spec.knowledge)];
            return find_unique_class_object(scene, k.shape, k.color);
        }
        case SelectorKind::UniqueShape:
        case SelectorKind::ColorShape:
        case SelectorKind::InsideMirror:
        case SelectorKind::OutsideMirror:
            if (candidates.size() != 1) return std::nullopt;
            return candidates[0];
        case SelectorKind::Leftmost:
        case SelectorKind::Rightmost:
        case SelectorKind::Largest:
        case SelectorKind::Smallest: {
            if (candidates.empty()) return std::nullopt;
            auto key = [&](int i) {
                const auto& o = scene.objects[static_cast<size_t>(i)];
                switch (spec.selector) {
                    case SelectorKind::Leftmost: return -o.cx;
                    case SelectorKind::Rightmost: return o.cx;
                    case SelectorKind::Largest: return o.radius;
                    default: return -o.radius;  // Smallest
                }
            };
            int best = candidates[0];
            for (int c : candidates)
                if (key(c) > key(best)) best = c;
            for (int c : candidates)
                if (c != best && key(c) == key(best)) return std::nullopt;  // tie
            return best;
        }
    }
    return std::nullopt;
}

namespace {

std::string noun_phrase(const EditSpec& spec) {
    const std::string shape = shape_name(spec.shape);
    switch (spec.selector) {
        case SelectorKind::UniqueShape: return "the " + shape;
        case SelectorKind::Leftmost: return "the leftmost " + shape;
        case SelectorKind::Rightmost: return "the rightmost " + shape;
        case SelectorKind::Largest: return "the largest " + shape;
        case SelectorKind::Smallest: return "the smallest " + shape;
        case SelectorKind::ColorShape:
            return "the " + palette().at(static_cast<size_t>(spec.color)).name + " " + shape;
        case SelectorKind::InsideMirror: return "the " + shape + " inside the mirror";
        case SelectorKind::OutsideMirror: return "the " + shape + " outside the mirror";
        case SelectorKind::Knowledge: return "it";
    }
    return "the " + shape;
}

}  // namespace

std::string instruction_text(const EditSpec& spec) {
    if (spec.selector == SelectorKind::Knowledge) {
        const auto& k = knowledge_table().at(static_cast<size_t>(spec.knowledge));
        std::string base = "What " + k.phrase + "?";
        switch (spec.kind) {
            case EditKind::Remove: return base + " Remove it.";
            case EditKind::Recolor:
                return base + " Turn it " +
                       palette().at(static_cast<size_t>(spec.new_color)).name + ".";
            case EditKind::Replace:
                return base + " Replace it with a " + shape_name(spec.new_shape) + ".";
            default:
                throw InvariantViolation("instruction_text: unsupported knowledge edit");
        }
    }
    const std::string np = noun_phrase(spec);
    switch (spec.kind) {
        case EditKind::Remove: return "Remove " + np + ".";
        case EditKind::Recolor:
            return "Turn " + np + " " + palette().at(static_cast<size_t>(spec.new_color)).name +
                   ".";
        case EditKind::Replace:
            return "Replace " + np + " with a " + shape_name(spec.new_shape) + ".";
        case EditKind::Resize:
            return "Make " + np + (spec.grow ? " bigger." : " smaller.");
        case EditKind::Add:
            break;  // composed in build_pair from the object itself
    }
    throw InvariantViolation("instruction_text: unsupported edit kind");
}

// ---------------------------------------------------------------------------
// pair construction
// ---------------------------------------------------------------------------

std::optional<InstructionSample> build_pair(const Scene& scene, const EditSpec& spec) {
    auto idx_opt = resolve_selector(scene, spec);
    if (!idx_opt) return std::nullopt;
    const int idx = *idx_opt;
    const SceneObject& obj = scene.objects[static_cast<size_t>(idx)];

    InstructionSample s;
    s.task = Task::PlainEdit;  // caller overrides
    switch (spec.kind) {
        case EditKind::Remove: {
            s.source = render_scene(scene);
            s.target = render_scene(without_object(scene, idx));
            s.edit_mask = oracle_mask(scene, idx);
            s.instruction = instruction_text(spec);
            break;
        }
        case EditKind::Recolor: {
            if (spec.new_color < 0 || spec.new_color == obj.color) return std::nullopt;
            Scene tgt = scene;
            tgt.objects[static_cast<size_t>(idx)].color = spec.new_color;
            s.source = render_scene(scene);
            s.target = render_scene(tgt);
            s.edit_mask = oracle_mask(scene, idx);
            s.instruction = instruction_text(spec);
            break;
        }
        case EditKind::Replace: {
            Scene tgt = scene;
            tgt.objects[static_cast<size_t>(idx)].kind = spec.new_shape;
            if (spec.new_color >= 0) tgt.objects[static_cast<size_t>(idx)].color = spec.new_color;
            s.source = render_scene(scene);
            s.target = render_scene(tgt);
            s.edit_mask = mask_union(oracle_mask(scene, idx), oracle_mask(tgt, idx));
            s.instruction = instruction_text(spec);
            break;
        }
        case EditKind::Resize: {
            const int nr = spec.grow ? obj.radius * 2 : std::max(2, obj.radius / 2);
            if (nr == obj.radius) return std::nullopt;
            if (obj.cx - nr < 0 || obj.cx + nr >= scene.size || obj.cy - nr < 0 ||
                obj.cy + nr >= scene.size)
                return std::nullopt;
            Scene tgt = scene;
            tgt.objects[static_cast<size_t>(idx)].radius = nr;
            s.source = render_scene(scene);
            s.target = render_scene(tgt);
            s.edit_mask = mask_union(oracle_mask(scene, idx), oracle_mask(tgt, idx));
            s.instruction = instruction_text(spec);
            break;
        }
        case EditKind::Add: {
            s.source = render_scene(without_object(scene, idx));
            s.target = render_scene(scene);
            s.edit_mask = oracle_mask(scene, idx);
            const std::string side = obj.cx < scene.size / 2 ? "left" : "right";
            s.instruction = "Add a " + palette().at(static_cast<size_t>(obj.color)).name + " " +
                            shape_name(obj.kind) + " on the " + side + " side.";
            break;
        }
    }
    return s;
}

InstructionSample build_segmentation_sample(const Scene& scene, int idx, const EditSpec& spec) {
    const Mask m = oracle_mask(scene, idx);
    InstructionSample s;
    s.source = render_scene(scene);
    s.target = Image(scene.size, scene.size);
    for (int y = 0; y < scene.size; ++y)
        for (int x = 0; x < scene.size; ++x) {
            const double v = m.at(y, x) ? 1.0 : 0.0;
            s.target.at(0, y, x) = v;
            s.target.at(1, y, x) = v;
            s.target.at(2, y, x) = v;
        }
    s.edit_mask = full_mask(scene.size, scene.size);
    s.instruction = "Segment " + noun_phrase(spec) + ".";
    s.task = Task::Segmentation;
    return s;
}

// ---------------------------------------------------------------------------
// per-task sample recipes
// ---------------------------------------------------------------------------

namespace {

std::vector<ShapeKind> shapes_with_count(const Scene& scene, size_t minimum, size_t maximum = 99) {
    std::map<ShapeKind, size_t> counts;
    for (const auto& o : scene.objects) ++counts[o.kind];
    std::vector<ShapeKind> out;
    for (ShapeKind k : {ShapeKind::Circle, ShapeKind::Square, ShapeKind::Triangle})
        if (counts[k] >= minimum && counts[k] <= maximum) out.push_back(k);
    return out;
}

int pick_other_color(Rng& rng, int avoid) {
    while (true) {
        const int c = static_cast<int>(rng.uniform_int(0, 7));
        if (c != avoid) return c;
    }
}

ShapeKind pick_other_shape(Rng& rng, ShapeKind avoid) {
    while (true) {
        const auto s = static_cast<ShapeKind>(rng.uniform_int(0, 2));
        if (s != avoid) return s;
    }
}

template <typename T>
T pick(Rng& rng, const std::vector<T>& v) {
    return v.at(static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(v.size()) - 1)));
}

// Minimum visible pixels for an edit to be learnable/evaluable.
constexpr int64_t kMinEditPixels = 4;

}  // namespace

InstructionSample make_sample(Task task, uint64_t sample_seed, Split split, int image_size) {
    Rng rng(sample_seed, "edit");
    for (int attempt = 0; attempt < 100; ++attempt) {
        const uint64_t scene_seed = sample_seed * 128 + static_cast<uint64_t>(attempt);
        std::optional<InstructionSample> built;

        switch (task) {
            case Task::PlainEdit: {
                const int n = static_cast<int>(rng.uniform_int(1, 3));
                Scene scene = generate_scene(scene_seed, n, false, image_size);
                auto uniques = shapes_with_count(scene, 1, 1);
                if (uniques.empty()) break;
                EditSpec spec;
                spec.selector = SelectorKind::UniqueShape;
                spec.shape = pick(rng, uniques);
                auto idx = resolve_selector(scene, spec);
                if (!idx) break;
                const auto& obj = scene.objects[static_cast<size_t>(*idx)];
                const int kind = static_cast<int>(rng.uniform_int(0, 3));
                if (kind == 0) {
                    spec.kind = EditKind::Remove;
                } else if (kind == 1) {
                    spec.kind = EditKind::Recolor;
                    spec.new_color = pick_other_color(rng, obj.color);
                } else if (kind == 2) {
                    spec.kind = EditKind::Replace;
                    spec.new_shape = pick_other_shape(rng, obj.kind);
                } else {
                    spec.kind = EditKind::Add;
                }
                built = build_pair(scene, spec);
                break;
            }
            case Task::UnderstandLocation: {
                const int n = static_cast<int>(rng.uniform_int(3, 5));
                Scene scene = generate_scene(scene_seed, n, false, image_size);
                auto repeated = shapes_with_count(scene, 2);
                if (repeated.empty()) break;
                EditSpec spec;
                spec.shape = pick(rng, repeated);
                spec.selector =
                    rng.uniform_int(0, 1) ? SelectorKind::Leftmost : SelectorKind::Rightmost;
                auto idx = resolve_selector(scene, spec);
                if (!idx) break;
                const auto& obj = scene.objects[static_cast<size_t>(*idx)];
                const int kind = static_cast<int>(rng.uniform_int(0, 2));
                if (kind == 0) {
                    spec.kind = EditKind::Remove;
                } else if (kind == 1) {
                    spec.kind = EditKind::Recolor;
                    spec.new_color = pick_other_color(rng, obj.color);
                } else {
                    spec.kind = EditKind::Replace;
                    spec.new_shape = pick_other_shape(rng, obj.kind);
                }
                built = build_pair(scene, spec);
                break;
            }
            case Task::UnderstandColor: {
                const int n = static_cast<int>(rng.uniform_int(2, 5));
                Scene scene = generate_scene(scene_seed, n, false, image_size);
                std::vector<int> cands;
                for (size_t i = 0; i < scene.objects.size(); ++i) {
                    const auto& o = scene.objects[i];
                    size_t same_shape = 0, same_both = 0;
                    for (const auto& p : scene.objects) {
                        if (p.kind == o.kind) ++same_shape;
                        if (p.kind == o.kind && p.color == o.color) ++same_both;
                    }
                    if (same_shape >= 2 && same_both == 1) cands.push_back(static_cast<int>(i));
                }
                if (cands.empty()) break;
                const auto& obj = scene.objects[static_cast<size_t>(pick(rng, cands))];
                EditSpec spec;
                spec.selector = SelectorKind::ColorShape;
                spec.shape = obj.kind;
                spec.color = obj.color;
                const int kind = static_cast<int>(rng.uniform_int(0, 2));
                if (kind == 0) {
                    spec.kind = EditKind::Remove;
                } else if (kind == 1) {
                    spec.kind = EditKind::Recolor;
                    spec.new_color = pick_other_color(rng, obj.color);
                } else {
                    spec.kind = EditKind::Replace;
                    spec.new_shape = pick_other_shape(rng, obj.kind);
                }
                built = build_pair(scene, spec);
                break;
            }
            case Task::UnderstandSize: {
                const int n = static_cast<int>(rng.uniform_int(3, 5));
                Scene scene = generate_scene(scene_seed, n, false, image_size);
                auto repeated = shapes_with_count(scene, 2);
                if (repeated.empty()) break;
                EditSpec spec;
                spec.shape = pick(rng, repeated);
                spec.selector =
                    rng.uniform_int(0, 1) ? SelectorKind::Largest : SelectorKind::Smallest;
                auto idx = resolve_selector(scene, spec);
                if (!idx) break;
                const auto& obj = scene.objects[static_cast<size_t>(*idx)];
                const int kind = static_cast<int>(rng.uniform_int(0, 2));
                if (kind == 0) {
                    spec.kind = EditKind::Remove;
                } else if (kind == 1) {
                    spec.kind = EditKind::Recolor;
                    spec.new_color = pick_other_color(rng, obj.color);
                } else {
                    spec.kind = EditKind::Resize;
                    spec.grow = rng.uniform_int(0, 1) == 1;
                }
                built = build_pair(scene, spec);
                break;
            }
            case Task::UnderstandMirror: {
                const int n = static_cast<int>(rng.uniform_int(2, 4));
                Scene scene = generate_scene(scene_seed, n, true, image_size);
                EditSpec spec;
                spec.shape = scene.objects[1].kind;  // the mirrored twin
                spec.selector =
                    rng.uniform_int(0, 1) ? SelectorKind::InsideMirror : SelectorKind::OutsideMirror;
                auto idx = resolve_selector(scene, spec);
                if (!idx) break;
                const auto& obj = scene.objects[static_cast<size_t>(*idx)];
                if (rng.uniform_int(0, 1) == 0) {
                    spec.kind = EditKind::Remove;
                } else {
                    spec.kind = EditKind::Recolor;
                    spec.new_color = pick_other_color(rng, obj.color);
                }
                built = build_pair(scene, spec);
                break;
            }
            case Task::ReasonKnowledge: {
                const int k = static_cast<int>(
                    rng.uniform_int(0, static_cast<int64_t>(knowledge_table().size()) - 1));
                const auto& entry = knowledge_table()[static_cast<size_t>(k)];
                const int n = static_cast<int>(rng.uniform_int(2, 5));
                Scene scene = generate_scene(scene_seed, n, false, image_size);
                const int j = static_cast<int>(rng.uniform_int(0, n - 1));
                scene.objects[static_cast<size_t>(j)].kind = entry.shape;
                scene.objects[static_cast<size_t>(j)].color = entry.color;
                auto found = find_unique_class_object(scene, entry.shape, entry.color);
                if (!found || *found != j) break;
                EditSpec spec;
                spec.selector = SelectorKind::Knowledge;
                spec.knowledge = k;
                const int kind = static_cast<int>(rng.uniform_int(0, 2));
                if (kind == 0) {
                    spec.kind = EditKind::Remove;
                } else if (kind == 1) {
                    spec.kind = EditKind::Recolor;
                    spec.new_color = pick_other_color(rng, entry.color);
                } else {
                    spec.kind = EditKind::Replace;
                    spec.new_shape = pick_other_shape(rng, entry.shape);
                }
                built = build_pair(scene, spec);
                break;
            }
            case Task::Segmentation: {
                const int n = static_cast<int>(rng.uniform_int(1, 4));
                Scene scene = generate_scene(scene_seed, n, false, image_size);
                EditSpec spec;
                auto uniques = shapes_with_count(scene, 1, 1);
                if (!uniques.empty()) {
                    spec.selector = SelectorKind::UniqueShape;
                    spec.shape = pick(rng, uniques);
                } else {
                    auto repeated = shapes_with_count(scene, 2);
                    if (repeated.empty()) break;
                    spec.selector =
                        rng.uniform_int(0, 1) ? SelectorKind::Leftmost : SelectorKind::Rightmost;
                    spec.shape = pick(rng, repeated);
                }
                auto idx = resolve_selector(scene, spec);
                if (!idx) break;
                if (oracle_mask(scene, *idx).count() < kMinEditPixels) break;
                built = build_segmentation_sample(scene, *idx, spec);
                break;
            }
        }

        if (!built) continue;
        if (task != Task::Segmentation && built->edit_mask.count() < kMinEditPixels) continue;
        built->task = task;
        built->split = split;
        built->seed = sample_seed;
        return *built;
    }
    throw InvariantViolation("make_sample: no valid sample after 100 attempts (task " +
                             task_name(task) + ", seed " + std::to_string(sample_seed) + ")");
}

// ---------------------------------------------------------------------------
// corpus generation
// ---------------------------------------------------------------------------

namespace {

const std::array<Task, 4> kUnderstandingCycle = {Task::UnderstandLocation, Task::UnderstandColor,
                                                 Task::UnderstandSize, Task::UnderstandMirror};

std::string sample_id_for(Split split, int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s-%04d", split == Split::Train ? "train" : "eval", i);
    return buf;
}

}  // namespace

std::vector<InstructionSample> generate_split(const DatasetSpec& spec, Split split) {
    std::vector<InstructionSample> out;
    if (split == Split::Train) {
        Rng mix_rng(spec.global_seed, "gen-mix");
        double total = 0.0;
        for (double w : spec.gen_mix) total += w;
        if (total <= 0.0) throw ConfigError("generate_split: mix weights sum to zero");
        int understanding_count = 0;
        for (int i = 0; i < spec.n_train; ++i) {
            const double u = mix_rng.uniform() * total;
            double acc = 0.0;
            int cat = 0;
            for (int c = 0; c < 4; ++c) {
                acc += spec.gen_mix[static_cast<size_t>(c)];
                if (u < acc) {
                    cat = c;
                    break;
                }
            }
            Task task;
            if (cat == 0) {
                task = Task::PlainEdit;
            } else if (cat == 1) {
                task = Task::Segmentation;
            } else if (cat == 2) {
                task = kUnderstandingCycle[static_cast<size_t>(understanding_count++ % 4)];
            } else {
                task = Task::ReasonKnowledge;
            }
            auto s = make_sample(task, kTrainSeedBase + spec.global_seed * 10'000'000 +
                                           static_cast<uint64_t>(i),
                                 split, spec.image_size);
            s.sample_id = sample_id_for(split, i);
            out.push_back(std::move(s));
        }
    } else {
        const int n_under = static_cast<int>(static_cast<int64_t>(spec.n_eval) * 120 / 219);
        for (int i = 0; i < spec.n_eval; ++i) {
            const Task task = i < n_under
                                  ? kUnderstandingCycle[static_cast<size_t>(i % 4)]
                                  : Task::ReasonKnowledge;
            auto s = make_sample(task, kEvalSeedBase + spec.global_seed * 10'000'000 +
                                           static_cast<uint64_t>(i),
                                 split, spec.image_size);
            s.sample_id = sample_id_for(split, i);
            out.push_back(std::move(s));
        }
    }
    return out;
}

void write_dataset(const DatasetSpec& spec, const std::string& out_dir) {
    fs::create_directories(fs::path(out_dir) / "images");
    for (Split split : {Split::Train, Split::ReasonEditEval}) {
        auto samples = generate_split(spec, split);
        std::string manifest;
        for (const auto& s : samples) {
            const std::string src = "images/" + s.sample_id + "_src.ppm";
            const std::string tgt = "images/" + s.sample_id + "_tgt.ppm";
            const std::string msk = "images/" + s.sample_id + "_mask.pgm";
            write_ppm((fs::path(out_dir) / src).string(), s.source);
            write_ppm((fs::path(out_dir) / tgt).string(), s.target);
            write_pgm((fs::path(out_dir) / msk).string(), s.edit_mask);
            manifest += s.sample_id + "\t" + task_name(s.task) + "\t" + split_name(s.split) + "\t" +
                        std::to_string(s.seed) + "\t" + s.instruction + "\t" + src + "\t" + tgt +
                        "\t" + msk + "\n";
        }
        const std::string name =
            split == Split::Train ? "manifest_train.tsv" : "manifest_eval.tsv";
        atomic_write_file((fs::path(out_dir) / name).string(), manifest);
    }
}

std::vector<ManifestEntry> read_manifest(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw ConfigError("cannot open manifest: " + manifest_path);
    std::vector<ManifestEntry> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> f;
        std::string cur;
        for (char c : line) {
            if (c == '\t') {
                f.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        f.push_back(cur);
        if (f.size() != 8) throw ConfigError("manifest: expected 8 tab-separated fields");
        ManifestEntry e;
        e.sample_id = f[0];
        e.task = parse_task(f[1]);
        e.split = parse_split(f[2]);
        e.seed = std::stoull(f[3]);
        e.instruction = f[4];
        e.source_path = f[5];
        e.target_path = f[6];
        e.mask_path = f[7];
        out.push_back(std::move(e));
    }
    return out;
}

InstructionSample load_sample(const ManifestEntry& entry, const std::string& manifest_dir) {
    InstructionSample s;
    s.sample_id = entry.sample_id;
    s.instruction = entry.instruction;
    s.task = entry.task;
    s.split = entry.split;
    s.seed = entry.seed;
    s.source = read_ppm((fs::path(manifest_dir) / entry.source_path).string());
    s.target = read_ppm((fs::path(manifest_dir) / entry.target_path).string());
    s.edit_mask = read_pgm((fs::path(manifest_dir) / entry.mask_path).string());
    return s;
}

// ---------------------------------------------------------------------------
// text
// ---------------------------------------------------------------------------

const std::vector<std::string>& instruction_lexicon() {
    static const std::vector<std::string> words = [] {
        std::set<std::string> w;
        for (const auto& c : palette()) w.insert(c.name);
        for (ShapeKind k : {ShapeKind::Circle, ShapeKind::Square, ShapeKind::Triangle})
            w.insert(shape_name(k));
        for (const char* s :
             {"remove", "replace", "add",     "turn",     "change",   "make",    "segment",
              "the",    "a",       "with",    "to",       "of",       "color",   "bigger",
              "smaller", "leftmost", "rightmost", "largest", "smallest", "inside", "outside",
              "mirror", "left",    "right",   "side",     "what",     "it",      "on",
              "and"})
            w.insert(s);
        for (const auto& k : knowledge_table())
            for (const auto& word : tokenize_words(k.phrase)) w.insert(word);
        return std::vector<std::string>(w.begin(), w.end());
    }();
    return words;
}

std::vector<std::string> tokenize_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isalpha(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::string scene_caption(const Scene& scene) {
    std::string caption;
    for (size_t i = 0; i < scene.objects.size(); ++i) {
        if (i) caption += " and ";
        const auto& o = scene.objects[i];
        caption += "a " + palette().at(static_cast<size_t>(o.color)).name + " " + shape_name(o.kind);
    }
    return caption;
}

}  // namespace smartedit
