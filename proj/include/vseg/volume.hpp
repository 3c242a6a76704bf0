#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vseg/errors.hpp"

namespace vseg {

// 3-D image grid with physical voxel spacing in mm. Dims are (D, H, W),
// voxels row-major in that order.
struct Volume {
    std::array<int64_t, 3> dims{0, 0, 0};
    std::array<float, 3> spacing{1.f, 1.f, 1.f};
    std::vector<float> voxels;

    int64_t numel() const { return dims[0] * dims[1] * dims[2]; }
    float& at(int64_t z, int64_t y, int64_t x) {
        return voxels[static_cast<size_t>((z * dims[1] + y) * dims[2] + x)];
    }
    float at(int64_t z, int64_t y, int64_t x) const {
        return voxels[static_cast<size_t>((z * dims[1] + y) * dims[2] + x)];
    }
};

struct LabelVolume {
    std::array<int64_t, 3> dims{0, 0, 0};
    std::array<float, 3> spacing{1.f, 1.f, 1.f};
    std::vector<uint8_t> labels;  // {0, 1}

    int64_t numel() const { return dims[0] * dims[1] * dims[2]; }
    uint8_t& at(int64_t z, int64_t y, int64_t x) {
        return labels[static_cast<size_t>((z * dims[1] + y) * dims[2] + x)];
    }
    uint8_t at(int64_t z, int64_t y, int64_t x) const {
        return labels[static_cast<size_t>((z * dims[1] + y) * dims[2] + x)];
    }
    int64_t foreground_count() const {
        int64_t n = 0;
        for (uint8_t v : labels) n += v != 0;
        return n;
    }
};

// "VVF1" container: 8-byte magic "VVOLF1\0\0", u32 version, u8 dtype code
// (0 = f32, 1 = u8), u32 dims D,H,W, f32 spacing x3, row-major little-endian
// payload, no compression.
void save_volume(const Volume& v, const std::string& path);
void save_volume(const LabelVolume& v, const std::string& path);
Volume load_volume(const std::string& path);
LabelVolume load_label_volume(const std::string& path);

// FNV-1a over the file bytes; used for manifests and determinism checks.
uint64_t file_hash(const std::string& path);

}  // namespace vseg
