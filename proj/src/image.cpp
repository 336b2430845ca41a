#include "smartedit/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "smartedit/checkpoint.hpp"
#include "smartedit/errors.hpp"

namespace smartedit {

int64_t Mask::count() const {
    int64_t n = 0;
    for (uint8_t v : m) n += v;
    return n;
}

Mask full_mask(int h, int w) {
    Mask out(h, w);
    std::fill(out.m.begin(), out.m.end(), uint8_t{1});
    return out;
}

Mask mask_complement(const Mask& m) {
    Mask out(m.height, m.width);
    for (size_t i = 0; i < m.m.size(); ++i) out.m[i] = m.m[i] ? 0 : 1;
    return out;
}

Mask mask_union(const Mask& a, const Mask& b) {
    if (!a.same_shape(b)) throw ShapeError("mask_union: shape mismatch");
    Mask out(a.height, a.width);
    for (size_t i = 0; i < a.m.size(); ++i) out.m[i] = (a.m[i] | b.m[i]) ? 1 : 0;
    return out;
}

namespace {

uint8_t to_byte(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<uint8_t>(std::lround(c * 255.0));
}

// Reads one whitespace-delimited token, skipping '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    char c;
    while (in.get(c)) {
        if (c == '#') {
            while (in.get(c) && c != '\n') {
            }
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(c);
    }
    return tok;
}

}  // namespace

void write_ppm(const std::string& path, const Image& img) {
    std::string buf = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    buf.reserve(buf.size() + static_cast<size_t>(3 * img.height * img.width));
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) buf.push_back(static_cast<char>(to_byte(img.at(c, y, x))));
    atomic_write_file(path, buf);
}

Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open image: " + path);
    if (next_token(in) != "P6") throw ConfigError("not a P6 PPM: " + path);
    const int w = std::stoi(next_token(in));
    const int h = std::stoi(next_token(in));
    const int maxval = std::stoi(next_token(in));
    if (maxval != 255) throw ConfigError("unsupported PPM maxval in " + path);
    Image img(h, w);
    std::vector<char> raw(static_cast<size_t>(3 * h * w));
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (!in) throw ConfigError("truncated PPM: " + path);
    size_t i = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = static_cast<unsigned char>(raw[i++]) / 255.0;
    return img;
}

void write_pgm(const std::string& path, const Mask& mask) {
    std::string buf =
        "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
    for (uint8_t v : mask.m) buf.push_back(static_cast<char>(v ? 255 : 0));
    atomic_write_file(path, buf);
}

Mask read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open mask: " + path);
    if (next_token(in) != "P5") throw ConfigError("not a P5 PGM: " + path);
    const int w = std::stoi(next_token(in));
    const int h = std::stoi(next_token(in));
    const int maxval = std::stoi(next_token(in));
    if (maxval != 255) throw ConfigError("unsupported PGM maxval in " + path);
    Mask mask(h, w);
    std::vector<char> raw(static_cast<size_t>(h * w));
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (!in) throw ConfigError("truncated PGM: " + path);
    for (size_t i = 0; i < raw.size(); ++i)
        mask.m[i] = static_cast<unsigned char>(raw[i]) >= 128 ? 1 : 0;
    return mask;
}

Image quantize_8bit(const Image& img) {
    Image out(img.height, img.width);
    for (size_t i = 0; i < img.pix.size(); ++i) out.pix[i] = to_byte(img.pix[i]) / 255.0;
    return out;
}

Tensor image_to_tensor(const Image& img) {
    return Tensor({3, img.height, img.width}, img.pix);
}

Image tensor_to_image(const Tensor& t, bool clamp01) {
    if (t.rank() != 3 || t.dim(0) != 3) throw ShapeError("tensor_to_image: expects [3,h,w]");
    Image img(static_cast<int>(t.dim(1)), static_cast<int>(t.dim(2)));
    img.pix = t.values();
    if (clamp01)
        for (double& v : img.pix) v = std::clamp(v, 0.0, 1.0);
    return img;
}

}  // namespace smartedit
