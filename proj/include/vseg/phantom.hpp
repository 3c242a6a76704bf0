#pragma once

#include "vseg/rng.hpp"
#include "vseg/volume.hpp"

namespace vseg {

// Synthetic branching-tube phantom. The seed fully determines the output:
// identical specs give bitwise-identical volumes.
struct PhantomSpec {
    std::array<int64_t, 3> dims{64, 64, 64};
    int64_t num_trees = 2;
    int64_t branch_depth = 3;
    double radius_root = 3.0;        // voxels, >= 1
    double radius_decay = 0.82;      // per branching generation
    double tortuosity = 0.25;        // random turning strength per step
    double vessel_contrast = 0.35;   // intensity added inside vessels
    double noise_sigma = 0.08;
    double background_texture = 0.08;
    std::array<float, 3> spacing{1.f, 1.f, 1.f};
    uint64_t seed = 1;
};

std::pair<Volume, LabelVolume> generate_phantom(const PhantomSpec& spec);

// Uniform crop offset in [0, dims - crop] per axis.
std::array<int64_t, 3> draw_crop_offset(const std::array<int64_t, 3>& dims,
                                        const std::array<int64_t, 3>& crop, Rng& rng);

struct CropRule {
    bool bias_foreground = true;  // with probability bias_prob redraw until fg present
    double bias_prob = 0.7;
    int max_tries = 10;
};

// Identical offsets applied to image and labels. crop == dims is the
// identity crop.
std::pair<Volume, LabelVolume> random_crop(const Volume& image, const LabelVolume& labels,
                                           const std::array<int64_t, 3>& crop, Rng& rng,
                                           const CropRule& rule = {});

}  // namespace vseg
