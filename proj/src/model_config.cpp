#include "vseg/model_config.hpp"

namespace vseg {

AblationFlags ablation_from_name(const std::string& name) {
    if (name == "net1") return {false, false, false};
    if (name == "net2") return {true, false, false};
    if (name == "net3") return {true, true, false};
    if (name == "net4") return {false, false, true};
    if (name == "ours") return {true, true, true};
    throw ConfigError("unknown ablation '" + name + "' (expected net1..net4 or ours)");
}

std::string ablation_name(const AblationFlags& f) {
    if (!f.enhanced_vit && !f.cvf && !f.eur) return "net1";
    if (f.enhanced_vit && !f.cvf && !f.eur) return "net2";
    if (f.enhanced_vit && f.cvf && !f.eur) return "net3";
    if (!f.enhanced_vit && !f.cvf && f.eur) return "net4";
    if (f.enhanced_vit && f.cvf && f.eur) return "ours";
    return "custom";
}

void ModelConfig::validate() const {
    if (vit.embed_dim % vit.heads != 0)
        throw ConfigError("embed_dim " + std::to_string(vit.embed_dim) +
                          " not divisible by heads " + std::to_string(vit.heads));
    if (vit.trainable_tail < 1 || vit.trainable_tail > vit.depth)
        throw ConfigError("trainable_tail must be in [1, depth]");
    if (cnn.num_scales != 4)
        throw ConfigError("num_scales must be 4 to match the fusion chain");
    if (cnn.base_channels < 1) throw ConfigError("base_channels must be positive");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (fusion_width < 1) throw ConfigError("fusion_width must be positive");
    if (ablation.cvf && !ablation.enhanced_vit)
        throw ConfigError("cvf fusion requires the enhanced ViT branch");
    const int64_t div = int64_t{1} << (cnn.num_scales - 1);
    for (int64_t c : crop) {
        if (c % div != 0)
            throw ConfigError("crop extent " + std::to_string(c) + " not divisible by " +
                              std::to_string(div));
        if (ablation.enhanced_vit && c % vit.patch_size != 0)
            throw ConfigError("crop extent " + std::to_string(c) + " not divisible by patch size " +
                              std::to_string(vit.patch_size));
    }
}

}  // namespace vseg
