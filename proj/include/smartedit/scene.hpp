#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "smartedit/image.hpp"

namespace smartedit {

enum class ShapeKind { Circle, Square, Triangle };

std::string shape_name(ShapeKind k);

struct PaletteColor {
    std::string name;
    double r, g, b;  // 8-bit levels over 255, so PPM round-trips losslessly
};

/// The fixed 8-color object palette.
const std::vector<PaletteColor>& palette();
int palette_index(const std::string& name);

/// Background fills, distinct from the object palette.
const std::vector<PaletteColor>& background_palette();

struct SceneObject {
    ShapeKind kind = ShapeKind::Circle;
    int color = 0;  // palette index
    int cx = 0, cy = 0;
    int radius = 1;
    int z_order = 0;  // higher draws on top
    bool mirrored = false;
};

struct Scene {
    int size = 32;
    int background = 0;  // background_palette index
    bool has_mirror = false;
    std::vector<SceneObject> objects;
};

/// Exact per-pixel membership for the raw footprint (no occlusion).
bool object_contains(const SceneObject& o, int x, int y);

Mask object_footprint(const SceneObject& o, int size);

/// Painter's algorithm: background, mirror divider, objects by ascending
/// z-order.
Image render_scene(const Scene& scene);

/// Visible footprint of one object, i.e. its pixels not hidden by any
/// higher-z object.
Mask oracle_mask(const Scene& scene, int object_index);

Scene without_object(const Scene& scene, int idx);

/// Re-renders the scene minus the object: an exact inpainting stand-in.
/// Returns the new image and the removal mask (the visible footprint).
std::pair<Image, Mask> remove_object(const Scene& scene, int idx);

struct PasteResult {
    Image image;
    Mask pasted;  // footprint of the scaled donor object in the output
};

/// Nearest-neighbor rescale of the donor object's visible pixels onto the
/// placement mask's bounding box, alpha-composited over y1.
PasteResult paste_object(const Image& y1, const Scene& donor, int donor_idx,
                         const Mask& placement);

/// Per-channel mean/variance transfer of the masked pixels toward the
/// reference image statistics, clamped to [0,1]. Zero in-mask variance
/// degrades to a pure mean shift.
Image harmonize(const Image& y3, const Mask& mask, const Image& reference);

/// Deterministic non-degenerate layout: pairwise center distance >= 6 px,
/// objects fully inside the canvas, radius in [2,5]. With a mirror pair the
/// first two objects are a twin pair reflected across the vertical center
/// line and the twin is the only object inside the mirror half.
/// Throws InvariantViolation if no layout is found in 100 attempts.
Scene generate_scene(uint64_t seed, int n_objects, bool with_mirror_pair = false, int size = 32);

inline constexpr int kMinCenterDistance = 6;
inline constexpr int kMaxPlacementAttempts = 100;

}  // namespace smartedit
