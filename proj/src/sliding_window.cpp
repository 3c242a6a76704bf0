#include "vseg/sliding_window.hpp"

namespace vseg {

std::vector<int64_t> window_starts(int64_t dim, int64_t window) {
    if (window < 1 || window > dim) {
        throw ConfigError("window " + std::to_string(window) + " exceeds volume extent " +
                          std::to_string(dim));
    }
    std::vector<int64_t> starts;
    const int64_t step = std::max<int64_t>(1, window / 2);
    for (int64_t v = 0;; v += step) {
        if (v >= dim - window) {
            starts.push_back(dim - window);
            break;
        }
        starts.push_back(v);
    }
    return starts;
}

WindowInference sliding_window_infer(const Network<float>& net, const Volume& vol,
                                     const std::array<int64_t, 3>& window) {
    NoGradGuard ng;
    const auto zs = window_starts(vol.dims[0], window[0]);
    const auto ys = window_starts(vol.dims[1], window[1]);
    const auto xs = window_starts(vol.dims[2], window[2]);
    const int64_t k = net.config().num_classes;
    const int64_t sp = vol.numel();

    WindowInference out;
    out.dims = vol.dims;
    out.num_classes = k;
    out.probs.assign(static_cast<size_t>(k * sp), 0.f);
    out.uncertainty.assign(static_cast<size_t>(sp), 0.f);
    std::vector<float> count(static_cast<size_t>(sp), 0.f);

    std::vector<float> crop(static_cast<size_t>(window[0] * window[1] * window[2]));
    for (const int64_t z0 : zs)
        for (const int64_t y0 : ys)
            for (const int64_t x0 : xs) {
                size_t idx = 0;
                for (int64_t z = 0; z < window[0]; ++z)
                    for (int64_t y = 0; y < window[1]; ++y)
                        for (int64_t x = 0; x < window[2]; ++x, ++idx)
                            crop[idx] = vol.at(z0 + z, y0 + y, x0 + x);
                auto input = Tensor<float>::from_data({1, 1, window[0], window[1], window[2]}, crop);
                auto fw = net.forward(input);  // eps = 0, deterministic

                const int64_t wsp = window[0] * window[1] * window[2];
                for (int64_t c = 0; c < k; ++c) {
                    const float* src = fw.probs.ptr() + c * wsp;
                    size_t widx = 0;
                    for (int64_t z = 0; z < window[0]; ++z)
                        for (int64_t y = 0; y < window[1]; ++y)
                            for (int64_t x = 0; x < window[2]; ++x, ++widx) {
                                out.probs[static_cast<size_t>(
                                    c * sp + ((z0 + z) * vol.dims[1] + y0 + y) * vol.dims[2] + x0 +
                                    x)] += src[widx];
                            }
                }
                const float* usrc = fw.belief.uncertainty.ptr();
                size_t widx = 0;
                for (int64_t z = 0; z < window[0]; ++z)
                    for (int64_t y = 0; y < window[1]; ++y)
                        for (int64_t x = 0; x < window[2]; ++x, ++widx) {
                            const size_t o = static_cast<size_t>(
                                ((z0 + z) * vol.dims[1] + y0 + y) * vol.dims[2] + x0 + x);
                            out.uncertainty[o] += usrc[widx];
                            count[o] += 1.f;
                        }
            }

    for (int64_t i = 0; i < sp; ++i) {
        const float c = count[static_cast<size_t>(i)];
        out.uncertainty[static_cast<size_t>(i)] /= c;
        for (int64_t cl = 0; cl < k; ++cl) out.probs[static_cast<size_t>(cl * sp + i)] /= c;
    }
    return out;
}

LabelVolume argmax_mask(const WindowInference& inf, const std::array<float, 3>& spacing) {
    LabelVolume m;
    m.dims = inf.dims;
    m.spacing = spacing;
    const int64_t sp = m.numel();
    m.labels.assign(static_cast<size_t>(sp), 0);
    for (int64_t i = 0; i < sp; ++i) {
        int64_t best = 0;
        float bv = inf.probs[static_cast<size_t>(i)];
        for (int64_t c = 1; c < inf.num_classes; ++c) {
            const float v = inf.probs[static_cast<size_t>(c * sp + i)];
            if (v > bv) {
                bv = v;
                best = c;
            }
        }
        m.labels[static_cast<size_t>(i)] = static_cast<uint8_t>(best);
    }
    return m;
}

Volume foreground_prob_volume(const WindowInference& inf, const std::array<float, 3>& spacing) {
    Volume v;
    v.dims = inf.dims;
    v.spacing = spacing;
    const int64_t sp = v.numel();
    v.voxels.assign(inf.probs.begin() + (inf.num_classes - 1) * sp,
                    inf.probs.begin() + inf.num_classes * sp);
    return v;
}

Volume uncertainty_volume(const WindowInference& inf, const std::array<float, 3>& spacing) {
    Volume v;
    v.dims = inf.dims;
    v.spacing = spacing;
    v.voxels = inf.uncertainty;
    return v;
}

}  // namespace vseg
