#include "vseg/volume.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

namespace vseg {

namespace {

constexpr char kMagic[8] = {'V', 'V', 'O', 'L', 'F', '1', '\0', '\0'};
constexpr uint32_t kVersion = 1;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_exact(std::FILE* f, const void* data, size_t n, const std::string& path) {
    if (std::fwrite(data, 1, n, f) != n) throw FormatError("short write to " + path);
}

void read_exact(std::FILE* f, void* data, size_t n, const std::string& path, long offset) {
    if (std::fread(data, 1, n, f) != n) {
        throw FormatError(path + ": truncated at offset " + std::to_string(offset));
    }
}

void write_header(std::FILE* f, uint8_t dtype, const std::array<int64_t, 3>& dims,
                  const std::array<float, 3>& spacing, const std::string& path) {
    write_exact(f, kMagic, 8, path);
    write_exact(f, &kVersion, 4, path);
    write_exact(f, &dtype, 1, path);
    for (int64_t d : dims) {
        const uint32_t v = static_cast<uint32_t>(d);
        write_exact(f, &v, 4, path);
    }
    for (float s : spacing) write_exact(f, &s, 4, path);
}

struct Header {
    uint8_t dtype;
    std::array<int64_t, 3> dims;
    std::array<float, 3> spacing;
};

Header read_header(std::FILE* f, const std::string& path) {
    char magic[8];
    read_exact(f, magic, 8, path, 0);
    if (std::memcmp(magic, kMagic, 8) != 0) {
        throw FormatError(path + ": bad magic at offset 0");
    }
    uint32_t version = 0;
    read_exact(f, &version, 4, path, 8);
    if (version != kVersion) {
        throw FormatError(path + ": unsupported version " + std::to_string(version) +
                          " at offset 8");
    }
    Header h{};
    read_exact(f, &h.dtype, 1, path, 12);
    if (h.dtype > 1) throw FormatError(path + ": unknown dtype code at offset 12");
    for (int i = 0; i < 3; ++i) {
        uint32_t v = 0;
        read_exact(f, &v, 4, path, 13 + 4 * i);
        if (v == 0) throw FormatError(path + ": zero extent at offset " + std::to_string(13 + 4 * i));
        h.dims[static_cast<size_t>(i)] = v;
    }
    for (int i = 0; i < 3; ++i) read_exact(f, &h.spacing[static_cast<size_t>(i)], 4, path, 25 + 4 * i);
    return h;
}

constexpr long kPayloadOffset = 8 + 4 + 1 + 12 + 12;

void check_payload_size(std::FILE* f, int64_t expect_bytes, const std::string& path) {
    const long pos = std::ftell(f);
    std::fseek(f, 0, SEEK_END);
    const long end = std::ftell(f);
    std::fseek(f, pos, SEEK_SET);
    if (end - kPayloadOffset != expect_bytes) {
        throw FormatError(path + ": header dims expect " + std::to_string(expect_bytes) +
                          " payload bytes, file has " + std::to_string(end - kPayloadOffset));
    }
}

}  // namespace

void save_volume(const Volume& v, const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw FormatError("cannot open " + path + " for writing");
    write_header(f.get(), 0, v.dims, v.spacing, path);
    write_exact(f.get(), v.voxels.data(), v.voxels.size() * sizeof(float), path);
}

void save_volume(const LabelVolume& v, const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw FormatError("cannot open " + path + " for writing");
    write_header(f.get(), 1, v.dims, v.spacing, path);
    write_exact(f.get(), v.labels.data(), v.labels.size(), path);
}

Volume load_volume(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw FormatError("cannot open " + path);
    const Header h = read_header(f.get(), path);
    if (h.dtype != 0) throw FormatError(path + ": expected f32 volume, found label dtype");
    Volume v;
    v.dims = h.dims;
    v.spacing = h.spacing;
    check_payload_size(f.get(), v.numel() * static_cast<int64_t>(sizeof(float)), path);
    v.voxels.resize(static_cast<size_t>(v.numel()));
    read_exact(f.get(), v.voxels.data(), v.voxels.size() * sizeof(float), path, kPayloadOffset);
    return v;
}

LabelVolume load_label_volume(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw FormatError("cannot open " + path);
    const Header h = read_header(f.get(), path);
    if (h.dtype != 1) throw FormatError(path + ": expected u8 labels, found f32 dtype");
    LabelVolume v;
    v.dims = h.dims;
    v.spacing = h.spacing;
    check_payload_size(f.get(), v.numel(), path);
    v.labels.resize(static_cast<size_t>(v.numel()));
    read_exact(f.get(), v.labels.data(), v.labels.size(), path, kPayloadOffset);
    return v;
}

uint64_t file_hash(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw FormatError("cannot open " + path);
    uint64_t h = 0xcbf29ce484222325ULL;
    unsigned char buf[65536];
    size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), f.get())) > 0) {
        for (size_t i = 0; i < n; ++i) {
            h ^= buf[i];
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace vseg
