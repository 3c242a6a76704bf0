#include "vseg/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

namespace vseg {

namespace {

constexpr char kMagic[8] = {'V', 'S', 'E', 'G', 'C', 'K', 'P', '1'};
constexpr uint32_t kVersion = 1;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void put(std::FILE* f, const void* p, size_t n, const std::string& path) {
    if (std::fwrite(p, 1, n, f) != n) throw FormatError("short write to " + path);
}

void get(std::FILE* f, void* p, size_t n, const std::string& path) {
    if (std::fread(p, 1, n, f) != n) throw FormatError(path + ": truncated checkpoint");
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore<float>& params,
                     const std::string& config_echo) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw FormatError("cannot open " + path + " for writing");
    put(f.get(), kMagic, 8, path);
    put(f.get(), &kVersion, 4, path);
    const uint32_t clen = static_cast<uint32_t>(config_echo.size());
    put(f.get(), &clen, 4, path);
    put(f.get(), config_echo.data(), config_echo.size(), path);
    const uint32_t count = static_cast<uint32_t>(params.entries().size());
    put(f.get(), &count, 4, path);
    for (const auto& e : params.entries()) {
        const uint16_t nlen = static_cast<uint16_t>(e.name.size());
        put(f.get(), &nlen, 2, path);
        put(f.get(), e.name.data(), e.name.size(), path);
        const uint8_t dtype = 0;
        put(f.get(), &dtype, 1, path);
        const uint8_t rank = static_cast<uint8_t>(e.tensor.shape().size());
        put(f.get(), &rank, 1, path);
        for (int64_t d : e.tensor.shape()) {
            const uint32_t v = static_cast<uint32_t>(d);
            put(f.get(), &v, 4, path);
        }
        const uint64_t bytes = static_cast<uint64_t>(e.tensor.numel()) * sizeof(float);
        put(f.get(), &bytes, 8, path);
        put(f.get(), e.tensor.data().data(), bytes, path);
    }
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw FormatError("cannot open checkpoint " + path);
    char magic[8];
    get(f.get(), magic, 8, path);
    if (std::memcmp(magic, kMagic, 8) != 0) throw FormatError(path + ": bad checkpoint magic");
    uint32_t version = 0;
    get(f.get(), &version, 4, path);
    if (version != kVersion) {
        throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
    }
    uint32_t clen = 0;
    get(f.get(), &clen, 4, path);
    LoadedCheckpoint out;
    out.config_echo.resize(clen);
    get(f.get(), out.config_echo.data(), clen, path);
    uint32_t count = 0;
    get(f.get(), &count, 4, path);
    for (uint32_t i = 0; i < count; ++i) {
        uint16_t nlen = 0;
        get(f.get(), &nlen, 2, path);
        std::string name(nlen, '\0');
        get(f.get(), name.data(), nlen, path);
        uint8_t dtype = 0, rank = 0;
        get(f.get(), &dtype, 1, path);
        if (dtype != 0) throw FormatError(path + ": unsupported tensor dtype in checkpoint");
        get(f.get(), &rank, 1, path);
        Shape shape(rank);
        for (uint8_t r = 0; r < rank; ++r) {
            uint32_t v = 0;
            get(f.get(), &v, 4, path);
            shape[r] = v;
        }
        uint64_t bytes = 0;
        get(f.get(), &bytes, 8, path);
        if (bytes != static_cast<uint64_t>(numel_of(shape)) * sizeof(float)) {
            throw FormatError(path + ": payload size mismatch for tensor '" + name + "'");
        }
        std::vector<float> data(static_cast<size_t>(numel_of(shape)));
        get(f.get(), data.data(), bytes, path);
        out.tensors.emplace(std::move(name), std::make_pair(std::move(shape), std::move(data)));
    }
    return out;
}

void restore_params(ParamStore<float>& params, const LoadedCheckpoint& ckpt) {
    for (auto& e : params.entries()) {
        auto it = ckpt.tensors.find(e.name);
        if (it == ckpt.tensors.end()) {
            throw FormatError("checkpoint/config mismatch: missing tensor '" + e.name + "'");
        }
        if (it->second.first != e.tensor.shape()) {
            throw FormatError("checkpoint/config mismatch: tensor '" + e.name + "' has shape " +
                              shape_str(it->second.first) + ", model expects " +
                              shape_str(e.tensor.shape()));
        }
        e.tensor.mutable_data() = it->second.second;
    }
}

}  // namespace vseg
