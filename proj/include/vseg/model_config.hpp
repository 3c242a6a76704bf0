#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "vseg/errors.hpp"

namespace vseg {

struct ViTConfig {
    int64_t patch_size = 8;
    int64_t embed_dim = 96;
    int64_t depth = 6;
    int64_t heads = 4;
    int64_t trainable_tail = 2;  // only the final blocks learn
};

struct CNNEncoderConfig {
    int64_t base_channels = 4;
    int64_t num_scales = 4;  // fixed by the four-scale fusion chain
};

// Network variants: net1 (f,f,f), net2 (t,f,f), net3 (t,t,f), net4 (f,f,t),
// ours (t,t,t). cvf == true with enhanced_vit == false is rejected: the
// variational fusion needs both branches.
struct AblationFlags {
    bool enhanced_vit = true;
    bool cvf = true;
    bool eur = true;
};

AblationFlags ablation_from_name(const std::string& name);
std::string ablation_name(const AblationFlags& f);

struct ModelConfig {
    ViTConfig vit;
    CNNEncoderConfig cnn;
    int64_t num_classes = 2;
    int64_t fusion_width = 8;  // common channel width of the multi-scale fusion
    std::array<int64_t, 3> crop = {64, 64, 64};  // canonical input grid
    AblationFlags ablation;

    int64_t deepest_channels() const {
        return cnn.base_channels << (cnn.num_scales - 1);
    }
    void validate() const;
};

}  // namespace vseg
