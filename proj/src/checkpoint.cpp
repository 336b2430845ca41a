#include "smartedit/checkpoint.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

#include "smartedit/errors.hpp"

namespace smartedit {

namespace {

void put_u64(std::string& buf, uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& buf, double d) {
    uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(buf, v);
}

uint64_t get_u64(const std::string& buf, size_t& off) {
    if (off + 8 > buf.size()) throw ConfigError("checkpoint: truncated file");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[off + i])) << (8 * i);
    off += 8;
    return v;
}

double get_f64(const std::string& buf, size_t& off) {
    uint64_t v = get_u64(buf, off);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
}

}  // namespace

void atomic_write_file(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot open for writing: " + tmp);
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw ConfigError("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw ConfigError("rename failed: " + tmp + " -> " + path);
}

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& entries) {
    std::string buf;
    buf.append(kCheckpointMagic, 8);
    for (const auto& [name, t] : entries) {
        put_u64(buf, name.size());
        buf.append(name);
        put_u64(buf, t.shape().size());
        for (int64_t d : t.shape()) put_u64(buf, static_cast<uint64_t>(d));
        for (double v : t.values()) put_f64(buf, v);
    }
    atomic_write_file(path, buf);
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 8 || std::memcmp(buf.data(), kCheckpointMagic, 8) != 0)
        throw ConfigError("bad checkpoint magic: " + path);

    std::vector<std::pair<std::string, Tensor>> out;
    size_t off = 8;
    while (off < buf.size()) {
        const uint64_t name_len = get_u64(buf, off);
        if (off + name_len > buf.size()) throw ConfigError("checkpoint: truncated name");
        std::string name(buf.data() + off, name_len);
        off += name_len;
        const uint64_t rank = get_u64(buf, off);
        Shape shape(rank);
        for (uint64_t i = 0; i < rank; ++i) shape[i] = static_cast<int64_t>(get_u64(buf, off));
        const int64_t numel = shape_numel(shape);
        std::vector<double> values(static_cast<size_t>(numel));
        for (int64_t i = 0; i < numel; ++i) values[static_cast<size_t>(i)] = get_f64(buf, off);
        out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
    }
    return out;
}

void load_checkpoint_into(const std::string& path,
                          std::vector<std::pair<std::string, Tensor>>& params) {
    auto entries = load_checkpoint(path);
    std::map<std::string, Tensor> by_name;
    for (auto& [name, t] : entries) by_name.emplace(name, t);
    for (auto& [name, p] : params) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ConfigError("checkpoint missing tensor: " + name);
        if (it->second.shape() != p.shape())
            throw ConfigError("checkpoint shape mismatch for " + name + ": file has " +
                              shape_str(it->second.shape()) + ", model expects " +
                              shape_str(p.shape()));
        p.raw() = it->second.values();
    }
}

}  // namespace smartedit
