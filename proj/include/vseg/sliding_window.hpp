#pragma once

#include "vseg/network.hpp"
#include "vseg/volume.hpp"

namespace vseg {

// Start positions {0, s, 2s, ...} with s = window/2; the final start is
// clamped to dim - window and deduplicated. Every voxel is covered.
std::vector<int64_t> window_starts(int64_t dim, int64_t window);

struct WindowInference {
    std::array<int64_t, 3> dims{0, 0, 0};
    int64_t num_classes = 2;
    std::vector<float> probs;        // [K, D, H, W], overlap-averaged
    std::vector<float> uncertainty;  // [D, H, W]
};

// Tiles the volume at half-window stride, averages overlapping softmax
// probabilities (and uncertainty maps) with uniform weights.
WindowInference sliding_window_infer(const Network<float>& net, const Volume& vol,
                                     const std::array<int64_t, 3>& window);

LabelVolume argmax_mask(const WindowInference& inf, const std::array<float, 3>& spacing);

Volume foreground_prob_volume(const WindowInference& inf, const std::array<float, 3>& spacing);
Volume uncertainty_volume(const WindowInference& inf, const std::array<float, 3>& spacing);

}  // namespace vseg
