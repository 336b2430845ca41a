#include "smartedit/scene.hpp"

#include <algorithm>
#include <cmath>

#include "smartedit/errors.hpp"
#include "smartedit/rng.hpp"

namespace smartedit {

namespace {

PaletteColor make_color(const std::string& name, int r, int g, int b) {
    return PaletteColor{name, r / 255.0, g / 255.0, b / 255.0};
}

struct BBox {
    int y0, y1, x0, x1;  // inclusive
    int h() const { return y1 - y0 + 1; }
    int w() const { return x1 - x0 + 1; }
};

std::optional<BBox> mask_bbox(const Mask& m) {
    BBox b{m.height, -1, m.width, -1};
    for (int y = 0; y < m.height; ++y)
        for (int x = 0; x < m.width; ++x)
            if (m.at(y, x)) {
                b.y0 = std::min(b.y0, y);
                b.y1 = std::max(b.y1, y);
                b.x0 = std::min(b.x0, x);
                b.x1 = std::max(b.x1, x);
            }
    if (b.y1 < 0) return std::nullopt;
    return b;
}

}  // namespace

std::string shape_name(ShapeKind k) {
    switch (k) {
        case ShapeKind::Circle: return "circle";
        case ShapeKind::Square: return "square";
        case ShapeKind::Triangle: return "triangle";
    }
    return "?";
}

const std::vector<PaletteColor>& palette() {
    static const std::vector<PaletteColor> p = {
        make_color("red", 220, 40, 40),    make_color("green", 40, 180, 70),
        make_color("blue", 50, 90, 220),   make_color("yellow", 240, 220, 60),
        make_color("orange", 245, 150, 40), make_color("purple", 160, 70, 200),
        make_color("cyan", 70, 210, 220),  make_color("white", 255, 255, 255),
    };
    return p;
}

int palette_index(const std::string& name) {
    const auto& p = palette();
    for (size_t i = 0; i < p.size(); ++i)
        if (p[i].name == name) return static_cast<int>(i);
    throw ConfigError("unknown palette color: " + name);
}

const std::vector<PaletteColor>& background_palette() {
    static const std::vector<PaletteColor> p = {
        make_color("near-black", 16, 16, 16),
        make_color("dark-gray", 72, 72, 72),
        make_color("slate", 100, 110, 120),
        make_color("mid-gray", 140, 140, 140),
    };
    return p;
}

bool object_contains(const SceneObject& o, int x, int y) {
    const int dx = x - o.cx;
    const int dy = y - o.cy;
    switch (o.kind) {
        case ShapeKind::Circle:
            return dx * dx + dy * dy <= o.radius * o.radius;
        case ShapeKind::Square:
            return std::max(std::abs(dx), std::abs(dy)) <= o.radius;
        case ShapeKind::Triangle: {
            // upward triangle: apex (cx, cy-r), base corners (cx +- r, cy+r)
            const int t = y - (o.cy - o.radius);
            if (t < 0 || t > 2 * o.radius) return false;
            return 2 * std::abs(dx) <= t;
        }
    }
    return false;
}

Mask object_footprint(const SceneObject& o, int size) {
    Mask m(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            if (object_contains(o, x, y)) m.at(y, x) = 1;
    return m;
}

Image render_scene(const Scene& scene) {
    const int n = scene.size;
    Image img(n, n);
    const PaletteColor& bg = background_palette().at(static_cast<size_t>(scene.background));
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            img.at(0, y, x) = bg.r;
            img.at(1, y, x) = bg.g;
            img.at(2, y, x) = bg.b;
        }
    if (scene.has_mirror) {
        // mirror divider: fixed light column at the half split
        const int mx = n / 2;
        const double dv = 200 / 255.0;
        for (int y = 0; y < n; ++y) {
            img.at(0, y, mx) = dv;
            img.at(1, y, mx) = dv;
            img.at(2, y, mx) = dv;
        }
    }
    std::vector<const SceneObject*> order;
    for (const auto& o : scene.objects) order.push_back(&o);
    std::stable_sort(order.begin(), order.end(),
                     [](const SceneObject* a, const SceneObject* b) { return a->z_order < b->z_order; });
    for (const SceneObject* o : order) {
        const PaletteColor& c = palette().at(static_cast<size_t>(o->color));
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x)
                if (object_contains(*o, x, y)) {
                    img.at(0, y, x) = c.r;
                    img.at(1, y, x) = c.g;
                    img.at(2, y, x) = c.b;
                }
    }
    return img;
}

Mask oracle_mask(const Scene& scene, int object_index) {
    if (object_index < 0 || object_index >= static_cast<int>(scene.objects.size()))
        throw InvariantViolation("oracle_mask: object index out of range");
    const SceneObject& target = scene.objects[static_cast<size_t>(object_index)];
    Mask m(scene.size, scene.size);
    for (int y = 0; y < scene.size; ++y)
        for (int x = 0; x < scene.size; ++x) {
            if (!object_contains(target, x, y)) continue;
            bool hidden = false;
            for (const auto& o : scene.objects) {
                if (&o == &target) continue;
                if (o.z_order > target.z_order && object_contains(o, x, y)) {
                    hidden = true;
                    break;
                }
            }
            if (!hidden) m.at(y, x) = 1;
        }
    return m;
}

Scene without_object(const Scene& scene, int idx) {
    if (idx < 0 || idx >= static_cast<int>(scene.objects.size()))
        throw InvariantViolation("without_object: index out of range");
    Scene out = scene;
    out.objects.erase(out.objects.begin() + idx);
    return out;
}

std::pair<Image, Mask> remove_object(const Scene& scene, int idx) {
    Mask removal = oracle_mask(scene, idx);
    return {render_scene(without_object(scene, idx)), std::move(removal)};
}

PasteResult paste_object(const Image& y1, const Scene& donor, int donor_idx,
                         const Mask& placement) {
    auto dst_box = mask_bbox(placement);
    if (!dst_box) throw InvariantViolation("paste_object: empty placement mask");
    const Mask donor_mask = oracle_mask(donor, donor_idx);
    auto src_box = mask_bbox(donor_mask);
    if (!src_box) throw InvariantViolation("paste_object: donor object has no visible pixels");
    const Image donor_img = render_scene(donor);

    PasteResult out{y1, Mask(y1.height, y1.width)};
    const double sy_scale = static_cast<double>(src_box->h()) / dst_box->h();
    const double sx_scale = static_cast<double>(src_box->w()) / dst_box->w();
    for (int y = dst_box->y0; y <= dst_box->y1; ++y) {
        for (int x = dst_box->x0; x <= dst_box->x1; ++x) {
            int sy = src_box->y0 +
                     static_cast<int>(std::floor((y - dst_box->y0 + 0.5) * sy_scale));
            int sx = src_box->x0 +
                     static_cast<int>(std::floor((x - dst_box->x0 + 0.5) * sx_scale));
            sy = std::clamp(sy, src_box->y0, src_box->y1);
            sx = std::clamp(sx, src_box->x0, src_box->x1);
            if (!donor_mask.at(sy, sx)) continue;
            for (int c = 0; c < 3; ++c) out.image.at(c, y, x) = donor_img.at(c, sy, sx);
            out.pasted.at(y, x) = 1;
        }
    }
    return out;
}

Image harmonize(const Image& y3, const Mask& mask, const Image& reference) {
    if (mask.count() == 0) throw InvariantViolation("harmonize: empty mask");
    if (!y3.same_shape(reference)) throw ShapeError("harmonize: reference shape mismatch");
    Image out = y3;
    const int64_t n_ref = static_cast<int64_t>(reference.height) * reference.width;
    const int64_t n_in = mask.count();
    for (int c = 0; c < 3; ++c) {
        double mu_ref = 0.0, var_ref = 0.0;
        for (int y = 0; y < reference.height; ++y)
            for (int x = 0; x < reference.width; ++x) mu_ref += reference.at(c, y, x);
        mu_ref /= static_cast<double>(n_ref);
        for (int y = 0; y < reference.height; ++y)
            for (int x = 0; x < reference.width; ++x) {
                const double d = reference.at(c, y, x) - mu_ref;
                var_ref += d * d;
            }
        var_ref /= static_cast<double>(n_ref);

        double mu_in = 0.0, var_in = 0.0;
        for (int y = 0; y < y3.height; ++y)
            for (int x = 0; x < y3.width; ++x)
                if (mask.at(y, x)) mu_in += y3.at(c, y, x);
        mu_in /= static_cast<double>(n_in);
        for (int y = 0; y < y3.height; ++y)
            for (int x = 0; x < y3.width; ++x)
                if (mask.at(y, x)) {
                    const double d = y3.at(c, y, x) - mu_in;
                    var_in += d * d;
                }
        var_in /= static_cast<double>(n_in);

        const bool mean_shift_only = var_in < 1e-24;
        const double gain = mean_shift_only ? 1.0 : std::sqrt(var_ref / var_in);
        for (int y = 0; y < y3.height; ++y)
            for (int x = 0; x < y3.width; ++x)
                if (mask.at(y, x)) {
                    const double v = (y3.at(c, y, x) - mu_in) * gain + mu_ref;
                    out.at(c, y, x) = std::clamp(v, 0.0, 1.0);
                }
    }
    return out;
}

Scene generate_scene(uint64_t seed, int n_objects, bool with_mirror_pair, int size) {
    if (n_objects < 1 || n_objects > 5)
        throw InvariantViolation("generate_scene: n_objects must be in [1,5]");
    if (with_mirror_pair && n_objects < 2)
        throw InvariantViolation("generate_scene: a mirror pair needs at least 2 objects");
    Rng rng(seed, "scene");
    Scene scene;
    scene.size = size;
    scene.has_mirror = with_mirror_pair;
    scene.background = static_cast<int>(
        rng.uniform_int(0, static_cast<int64_t>(background_palette().size()) - 1));

    auto far_enough = [&](int cx, int cy) {
        for (const auto& o : scene.objects) {
            const int dx = cx - o.cx, dy = cy - o.cy;
            if (dx * dx + dy * dy < kMinCenterDistance * kMinCenterDistance) return false;
        }
        return true;
    };

    const int half = size / 2;
    int placed = 0;
    while (placed < n_objects) {
        bool ok = false;
        for (int attempt = 0; attempt < kMaxPlacementAttempts; ++attempt) {
            SceneObject o;
            o.kind = static_cast<ShapeKind>(rng.uniform_int(0, 2));
            o.color = static_cast<int>(rng.uniform_int(0, 7));
            o.radius = static_cast<int>(rng.uniform_int(2, 5));
            int x_lo = o.radius, x_hi = size - 1 - o.radius;
            if (with_mirror_pair) {
                // non-mirrored objects stay in the left half; the same bound
                // keeps the reflected twin fully inside the mirror half
                x_hi = half - 1 - o.radius;
            }
            if (x_hi < x_lo) continue;
            o.cx = static_cast<int>(rng.uniform_int(x_lo, x_hi));
            o.cy = static_cast<int>(rng.uniform_int(o.radius, size - 1 - o.radius));
            if (!far_enough(o.cx, o.cy)) continue;

            if (with_mirror_pair && placed == 0) {
                SceneObject twin = o;
                twin.cx = size - 1 - o.cx;
                twin.mirrored = true;
                if (!far_enough(twin.cx, twin.cy)) continue;
                o.z_order = 0;
                twin.z_order = 1;
                scene.objects.push_back(o);
                scene.objects.push_back(twin);
                placed += 2;
            } else {
                o.z_order = static_cast<int>(scene.objects.size());
                scene.objects.push_back(o);
                ++placed;
            }
            ok = true;
            break;
        }
        if (!ok)
            throw InvariantViolation("generate_scene: no feasible layout after " +
                                     std::to_string(kMaxPlacementAttempts) + " attempts");
    }
    return scene;
}

}  // namespace smartedit
