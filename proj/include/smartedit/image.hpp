#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smartedit/tensor.hpp"

namespace smartedit {

/// RGB image, channel-major [3][h][w], values nominally in [0,1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> pix;

    Image() = default;
    Image(int h, int w) : height(h), width(w), pix(static_cast<size_t>(3 * h * w), 0.0) {}

    double& at(int c, int y, int x) { return pix[(static_cast<size_t>(c) * height + y) * width + x]; }
    double at(int c, int y, int x) const {
        return pix[(static_cast<size_t>(c) * height + y) * width + x];
    }
    int64_t numel() const { return static_cast<int64_t>(pix.size()); }

    bool same_shape(const Image& o) const { return height == o.height && width == o.width; }
};

/// Binary mask, [h][w], entries 0/1.
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> m;

    Mask() = default;
    Mask(int h, int w) : height(h), width(w), m(static_cast<size_t>(h * w), 0) {}

    uint8_t& at(int y, int x) { return m[static_cast<size_t>(y) * width + x]; }
    uint8_t at(int y, int x) const { return m[static_cast<size_t>(y) * width + x]; }
    int64_t count() const;

    bool same_shape(const Mask& o) const { return height == o.height && width == o.width; }
};

Mask full_mask(int h, int w);
Mask mask_complement(const Mask& m);
Mask mask_union(const Mask& a, const Mask& b);

/// P6, maxval 255. Values are clamped and rounded to the nearest 8-bit level.
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

/// P5, 0/255.
void write_pgm(const std::string& path, const Mask& mask);
Mask read_pgm(const std::string& path);

/// Snap every channel to the nearest 8-bit level, as a PPM round trip would.
Image quantize_8bit(const Image& img);

Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t, bool clamp01 = true);

}  // namespace smartedit
