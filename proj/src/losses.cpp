#include "vseg/losses.hpp"

#include <cmath>

#include "vseg/ops.hpp"

namespace vseg {

template <typename T>
Tensor<T> dice_loss(const Tensor<T>& probs, const Tensor<T>& onehot, T smooth) {
    if (!same_shape(probs.shape(), onehot.shape())) {
        throw ShapeError("dice_loss: shape mismatch " + shape_str(probs.shape()) + " vs " +
                         shape_str(onehot.shape()));
    }
    const std::vector<int> all_but_class{0, 2, 3, 4};
    auto inter = reduce_sum(mul(probs, onehot), all_but_class);          // [K]
    auto psum = reduce_sum(probs, all_but_class);
    auto ysum = reduce_sum(onehot, all_but_class);
    auto num = add_scalar(mul_scalar(inter, T(2)), smooth);
    auto den = add_scalar(add(psum, ysum), smooth);
    return add_scalar(neg(mean_all(div(num, den))), T(1));
}

template <typename T>
std::vector<double> class_weights_for(const Tensor<T>& onehot, ClassWeightMode mode) {
    const int64_t k = onehot.dim(1);
    std::vector<double> w(static_cast<size_t>(k), 1.0);
    if (mode == ClassWeightMode::Uniform) return w;

    const int64_t n = onehot.dim(0);
    const int64_t spatial = onehot.numel() / (n * k);
    const double total = static_cast<double>(n * spatial);
    const T* py = onehot.ptr();
    for (int64_t c = 0; c < k; ++c) {
        double count = 0.0;
        for (int64_t b = 0; b < n; ++b) {
            const T* plane = py + (b * k + c) * spatial;
            for (int64_t s = 0; s < spatial; ++s) count += static_cast<double>(plane[s]);
        }
        const double freq = count / total;
        const double raw = freq > 0.0 ? 1.0 / freq : 10.0;
        w[static_cast<size_t>(c)] = std::min(10.0, std::max(0.1, raw));
    }
    double mean = 0.0;
    for (double v : w) mean += v;
    mean /= static_cast<double>(k);
    for (double& v : w) v /= mean;
    return w;
}

template <typename T>
Tensor<T> wce_loss(const Tensor<T>& probs, const Tensor<T>& onehot,
                   const std::vector<double>& class_weights) {
    if (!same_shape(probs.shape(), onehot.shape())) {
        throw ShapeError("wce_loss: shape mismatch " + shape_str(probs.shape()) + " vs " +
                         shape_str(onehot.shape()));
    }
    const int64_t k = probs.dim(1);
    if (static_cast<int64_t>(class_weights.size()) != k) {
        throw ShapeError("wce_loss: expected " + std::to_string(k) + " class weights");
    }
    // normalize to mean 1 so scaling all weights cancels
    double mean = 0.0;
    for (double v : class_weights) mean += v;
    mean /= static_cast<double>(k);
    std::vector<T> wdata(static_cast<size_t>(k));
    for (int64_t c = 0; c < k; ++c)
        wdata[static_cast<size_t>(c)] = static_cast<T>(class_weights[static_cast<size_t>(c)] / mean);

    Shape wshape(probs.shape().size(), 1);
    wshape[1] = k;
    auto wt = expand(Tensor<T>::from_data(wshape, wdata), probs.shape());

    auto logp = log(clamp(probs, static_cast<T>(1e-7), T(1)));
    auto weighted = mul(wt, mul(onehot, logp));
    const int64_t voxels = probs.numel() / k;
    return mul_scalar(sum_all(weighted), static_cast<T>(-1.0 / static_cast<double>(voxels)));
}

template <typename T>
Tensor<T> seg_loss(const Tensor<T>& probs, const Tensor<T>& onehot, const LossConfig& cfg) {
    auto weights = class_weights_for(onehot, cfg.class_weight_mode);
    auto dice = dice_loss(probs, onehot, static_cast<T>(cfg.smooth));
    auto wce = wce_loss(probs, onehot, weights);
    return add(mul_scalar(dice, static_cast<T>(cfg.gamma)),
               mul_scalar(wce, static_cast<T>(1.0 - cfg.gamma)));
}

template <typename T>
Tensor<T> evidential_kl_loss(const Tensor<T>& alpha, const Tensor<T>& onehot, int64_t epoch,
                             const LossConfig& cfg) {
    if (!same_shape(alpha.shape(), onehot.shape())) {
        throw ShapeError("evidential_kl_loss: shape mismatch " + shape_str(alpha.shape()) + " vs " +
                         shape_str(onehot.shape()));
    }
    for (const T v : alpha.data()) {
        if (v < T(1)) {
            throw NumericsError("evidential_kl_loss: alpha < 1 violates the Dirichlet contract");
        }
    }
    const int64_t k = alpha.dim(1);
    const double anneal = cfg.anneal_epochs > 0
                              ? std::min(1.0, static_cast<double>(epoch) /
                                                  static_cast<double>(cfg.anneal_epochs))
                              : 1.0;

    // remove true-class evidence: alpha~ = Y + (1 - Y) * alpha
    auto ones = Tensor<T>::full(onehot.shape(), T(1));
    auto y = onehot.detach();
    auto alpha_t = add(y, mul(sub(ones, y), alpha));

    auto strength = reduce_sum(alpha_t, {1}, true);  // [N,1,D,H,W]
    auto lg_strength = activation(strength, Act::LGamma);
    auto sum_lg = reduce_sum(activation(alpha_t, Act::LGamma), {1}, true);
    auto dg_diff = sub(activation(alpha_t, Act::Digamma),
                       expand(activation(strength, Act::Digamma), alpha_t.shape()));
    auto interaction = reduce_sum(mul(add_scalar(alpha_t, T(-1)), dg_diff), {1}, true);

    const T lg_k = static_cast<T>(std::lgamma(static_cast<double>(k)));
    auto kl_map = add(sub(add_scalar(lg_strength, -lg_k), sum_lg), interaction);
    return mul_scalar(mean_all(kl_map), static_cast<T>(anneal));
}

template <typename T>
LossParts<T> total_loss(const Tensor<T>& probs, const Tensor<T>& alpha, const Tensor<T>& onehot,
                        int64_t epoch, const LossConfig& cfg) {
    LossParts<T> parts;
    auto weights = class_weights_for(onehot, cfg.class_weight_mode);
    auto dice = dice_loss(probs, onehot, static_cast<T>(cfg.smooth));
    auto wce = wce_loss(probs, onehot, weights);
    parts.dice = static_cast<double>(dice.item());
    parts.wce = static_cast<double>(wce.item());
    auto seg = add(mul_scalar(dice, static_cast<T>(cfg.gamma)),
                   mul_scalar(wce, static_cast<T>(1.0 - cfg.gamma)));
    if (alpha.defined()) {
        auto kl = evidential_kl_loss(alpha, onehot, epoch, cfg);
        parts.kl = static_cast<double>(kl.item());
        parts.total = add(seg, kl);
    } else {
        parts.total = seg;
    }
    if (!std::isfinite(parts.dice) || !std::isfinite(parts.wce) || !std::isfinite(parts.kl) ||
        !std::isfinite(static_cast<double>(parts.total.item()))) {
        throw NumericsError("total_loss: non-finite component (dice=" + std::to_string(parts.dice) +
                            ", wce=" + std::to_string(parts.wce) + ", kl=" + std::to_string(parts.kl) +
                            ")");
    }
    return parts;
}

#define VSEG_INSTANTIATE(T)                                                                        \
    template Tensor<T> dice_loss(const Tensor<T>&, const Tensor<T>&, T);                           \
    template std::vector<double> class_weights_for(const Tensor<T>&, ClassWeightMode);             \
    template Tensor<T> wce_loss(const Tensor<T>&, const Tensor<T>&, const std::vector<double>&);   \
    template Tensor<T> seg_loss(const Tensor<T>&, const Tensor<T>&, const LossConfig&);            \
    template Tensor<T> evidential_kl_loss(const Tensor<T>&, const Tensor<T>&, int64_t,            \
                                          const LossConfig&);                                      \
    template LossParts<T> total_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                     int64_t, const LossConfig&);

VSEG_INSTANTIATE(float)
VSEG_INSTANTIATE(double)
#undef VSEG_INSTANTIATE

}  // namespace vseg
