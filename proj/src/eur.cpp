#include "vseg/eur.hpp"

namespace vseg {

template <typename T>
Tensor<T> evidence_from_logits(const Tensor<T>& logits) {
    if (logits.ndim() != 5 || logits.dim(1) < 2) {
        throw ShapeError("evidence_from_logits: expected [N,K>=2,D,H,W], got " +
                         shape_str(logits.shape()));
    }
    return softplus(logits);
}

template <typename T>
DirichletBelief<T> dirichlet_params(const Tensor<T>& evidence) {
    DirichletBelief<T> b;
    b.evidence = evidence;
    b.alpha = add_scalar(evidence, T(1));
    b.strength = reduce_sum(b.alpha, {1}, true);
    const T k = static_cast<T>(evidence.dim(1));
    b.uncertainty = div(Tensor<T>::full(b.strength.shape(), k), b.strength);
    return b;
}

template <typename T>
EurModule<T>::EurModule(ParamStore<T>& ps, const std::string& name, int64_t base_channels,
                        int64_t num_scales, int64_t width, int64_t num_classes, Rng& rng) {
    width_ = width;
    for (int64_t s = 0; s < num_scales; ++s) {
        lateral_.emplace_back(ps, name + ".lat" + std::to_string(s), base_channels << s, width, 1,
                              1, 0, rng);
    }
    sab_conv_ = Conv3dLayer<T>(ps, name + ".sab", 2, 1, 7, 1, 3, rng);
    p_proj_ = Conv3dLayer<T>(ps, name + ".p_proj", num_classes, width * num_scales, 1, 1, 0, rng);
    gate_conv_ = Conv3dLayer<T>(ps, name + ".gate", width * num_scales, 1, 1, 1, 0, rng);
    head_ = Conv3dLayer<T>(ps, name + ".head", width * num_scales, num_classes, 1, 1, 0, rng);
}

template <typename T>
Tensor<T> EurModule<T>::spatial_attention(const Tensor<T>& f) const {
    auto mean_c = reduce_mean(f, {1}, true);
    auto max_c = reduce_max(f, {1}, true);
    auto gate = sigmoid(sab_conv_.forward(concat<T>({mean_c, max_c}, 1)));
    return mul(expand(gate, f.shape()), f);
}

template <typename T>
std::vector<Tensor<T>> EurModule<T>::merged_laterals(const std::vector<Tensor<T>>& feats) const {
    if (feats.size() != lateral_.size()) {
        throw ShapeError("multiscale_fuse: expected " + std::to_string(lateral_.size()) +
                         " scales, got " + std::to_string(feats.size()));
    }
    const size_t n = feats.size();
    for (size_t i = 0; i + 1 < n; ++i) {
        for (int a = 2; a < 5; ++a) {
            if (feats[i].shape()[static_cast<size_t>(a)] !=
                2 * feats[i + 1].shape()[static_cast<size_t>(a)]) {
                throw ShapeError("multiscale_fuse: resolution chain broken between scales " +
                                 std::to_string(i) + " and " + std::to_string(i + 1) + ": " +
                                 shape_str(feats[i].shape()) + " vs " +
                                 shape_str(feats[i + 1].shape()));
            }
        }
    }
    std::vector<Tensor<T>> merged(n);
    merged[n - 1] = lateral_[n - 1].forward(feats[n - 1]);
    for (size_t i = n - 1; i-- > 0;) {
        merged[i] = add(lateral_[i].forward(feats[i]), upsample(merged[i + 1], 2, Resize::Nearest));
    }
    return merged;
}

template <typename T>
Tensor<T> EurModule<T>::multiscale_fuse(const std::vector<Tensor<T>>& feats) const {
    auto merged = merged_laterals(feats);
    const size_t n = merged.size();
    // lift every scale to full resolution and concatenate
    std::vector<Tensor<T>> lifted;
    lifted.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        lifted.push_back(upsample(merged[i], int64_t{1} << i, Resize::Nearest));
    }
    auto cat = concat(lifted, 1);
    return add(cat, spatial_attention(cat));
}

template <typename T>
Tensor<T> EurModule<T>::project_initial(const Tensor<T>& probs) const {
    return p_proj_.forward(probs);
}

template <typename T>
Tensor<T> EurModule<T>::reliable_mask(const Tensor<T>& p_proj, const Tensor<T>& fusion,
                                      const Tensor<T>& uncertainty) const {
    if (!same_shape(p_proj.shape(), fusion.shape())) {
        throw ShapeError("reliable_mask: shape mismatch " + shape_str(p_proj.shape()) + " vs " +
                         shape_str(fusion.shape()));
    }
    auto damp = expand(exp(neg(uncertainty)), fusion.shape());
    return mul(add(p_proj, fusion), damp);
}

template <typename T>
typename EurModule<T>::Refined EurModule<T>::refine(const Tensor<T>& p_proj,
                                                    const Tensor<T>& fusion,
                                                    const Tensor<T>& reliable) const {
    Refined r;
    r.gate = sigmoid(gate_conv_.forward(relu(reliable)));  // [N,1,D,H,W]
    auto lam = expand(r.gate, fusion.shape());
    auto one_minus = expand(add_scalar(neg(r.gate), T(1)), fusion.shape());
    r.refined = add(mul(lam, p_proj), mul(one_minus, fusion));
    return r;
}

template <typename T>
Tensor<T> EurModule<T>::head(const Tensor<T>& refined) const {
    return head_.forward(refined);
}

template <typename T>
typename EurModule<T>::Out EurModule<T>::forward(const Tensor<T>& probs,
                                                 const std::vector<Tensor<T>>& decoder_feats,
                                                 const Tensor<T>& uncertainty) const {
    Out out;
    out.fusion = multiscale_fuse(decoder_feats);
    out.p_proj = project_initial(probs);
    out.reliable = reliable_mask(out.p_proj, out.fusion, uncertainty);
    auto r = refine(out.p_proj, out.fusion, out.reliable);
    out.gate = r.gate;
    out.refined = r.refined;
    out.logits = head(out.refined);
    return out;
}

#define VSEG_INSTANTIATE(T)                                       \
    template Tensor<T> evidence_from_logits(const Tensor<T>&);    \
    template DirichletBelief<T> dirichlet_params(const Tensor<T>&); \
    template class EurModule<T>;

VSEG_INSTANTIATE(float)
VSEG_INSTANTIATE(double)
#undef VSEG_INSTANTIATE

}  // namespace vseg
