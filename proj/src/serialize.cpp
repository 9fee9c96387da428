#include "d24fad/serialize.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "d24fad/rng.hpp"

namespace d24fad {

namespace {

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw StateError("checkpoint/weight file truncated or corrupt: " + path);
    return v;
}

}  // namespace

void write_tensor_file(const std::string& path, const std::map<std::string, Tensor>& tensors,
                       const std::string& meta_json) {
    namespace fs = std::filesystem;
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for write: " + tmp);
        out.write(kTensorFileMagic, sizeof(kTensorFileMagic));
        put<uint32_t>(out, kTensorFileVersion);
        put<uint64_t>(out, meta_json.size());
        out.write(meta_json.data(), static_cast<std::streamsize>(meta_json.size()));
        put<uint64_t>(out, tensors.size());
        for (const auto& [name, t] : tensors) {
            put<uint32_t>(out, static_cast<uint32_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            put<uint32_t>(out, static_cast<uint32_t>(t.ndim()));
            for (int d : t.shape()) put<int32_t>(out, d);
            out.write(reinterpret_cast<const char*>(t.data()),
                      static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(double))));
        }
        if (!out) throw IoError("short write: " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot finalize file " + path + ": " + ec.message());
}

TensorFile read_tensor_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    char magic[sizeof(kTensorFileMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kTensorFileMagic, sizeof(magic)) != 0)
        throw StateError("not a tensor container (bad magic): " + path);
    const uint32_t version = take<uint32_t>(in, path);
    if (version != kTensorFileVersion)
        throw StateError("incompatible container version " + std::to_string(version) + " (expected " +
                         std::to_string(kTensorFileVersion) + "): " + path);
    TensorFile tf;
    const uint64_t meta_len = take<uint64_t>(in, path);
    if (meta_len > (1ULL << 30)) throw StateError("corrupt metadata length: " + path);
    tf.meta_json.resize(meta_len);
    in.read(tf.meta_json.data(), static_cast<std::streamsize>(meta_len));
    if (!in) throw StateError("checkpoint/weight file truncated or corrupt: " + path);
    const uint64_t n = take<uint64_t>(in, path);
    for (uint64_t i = 0; i < n; ++i) {
        const uint32_t name_len = take<uint32_t>(in, path);
        if (name_len > (1U << 20)) throw StateError("corrupt tensor name: " + path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) throw StateError("checkpoint/weight file truncated or corrupt: " + path);
        const uint32_t ndim = take<uint32_t>(in, path);
        if (ndim > 8) throw StateError("corrupt tensor rank: " + path);
        std::vector<int> shape(ndim);
        for (uint32_t d = 0; d < ndim; ++d) shape[d] = take<int32_t>(in, path);
        Tensor t(shape);
        in.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(double))));
        if (!in) throw StateError("checkpoint/weight file truncated or corrupt: " + path);
        tf.tensors.emplace(std::move(name), std::move(t));
    }
    return tf;
}

uint64_t file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    uint64_t h = 1469598103934665603ULL;
    char buf[65536];
    while (in) {
        in.read(buf, sizeof(buf));
        h = fnv1a(buf, static_cast<size_t>(in.gcount()), h);
    }
    return h;
}

void write_text_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for write: " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("short write: " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot finalize file " + path + ": " + ec.message());
}

}  // namespace d24fad
