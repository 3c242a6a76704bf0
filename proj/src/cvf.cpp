#include "vseg/cvf.hpp"

namespace vseg {

template <typename T>
Tensor<T> reparameterize(const LatentGaussian<T>& g, const Tensor<T>& eps) {
    if (!same_shape(g.mu.shape(), eps.shape())) {
        throw ShapeError("reparameterize: eps shape " + shape_str(eps.shape()) +
                         " does not match latent " + shape_str(g.mu.shape()));
    }
    return add(g.mu, mul(g.sigma, eps.detach()));
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> fusion_weights(const Tensor<T>& z_att_v, const Tensor<T>& z_att_c) {
    if (!same_shape(z_att_v.shape(), z_att_c.shape())) {
        throw ShapeError("fusion_weights: shape mismatch " + shape_str(z_att_v.shape()) + " vs " +
                         shape_str(z_att_c.shape()));
    }
    auto stacked = stack<T>({z_att_v, z_att_c}, 1);  // [N, 2, C, d, h, w]
    auto weights = softmax(stacked, 1);
    auto shape = z_att_v.shape();
    auto beta_v = reshape(slice(weights, 1, 0, 1), shape);
    auto beta_c = reshape(slice(weights, 1, 1, 1), shape);
    return {beta_v, beta_c};
}

template <typename T>
LatentEncoder<T>::LatentEncoder(ParamStore<T>& ps, const std::string& name, int64_t channels,
                                Rng& rng) {
    hidden_ = Conv3dLayer<T>(ps, name + ".hidden", channels, channels, 1, 1, 0, rng);
    mu_head_ = Conv3dLayer<T>(ps, name + ".mu", channels, channels, 1, 1, 0, rng);
    logsigma_head_ = Conv3dLayer<T>(ps, name + ".logsigma", channels, channels, 1, 1, 0, rng);
    // start near-deterministic: sigma = exp(-3) ~ 0.05
    auto& b = logsigma_head_.bias.mutable_data();
    std::fill(b.begin(), b.end(), T(-3));
}

template <typename T>
LatentGaussian<T> LatentEncoder<T>::encode(const Tensor<T>& f) const {
    auto h = gelu(hidden_.forward(f));
    LatentGaussian<T> g;
    g.mu = mu_head_.forward(h);
    g.sigma = exp(clamp(logsigma_head_.forward(h), T(-10), T(10)));
    return g;
}

template <typename T>
CvfModule<T>::CvfModule(ParamStore<T>& ps, const std::string& name, int64_t channels, Rng& rng) {
    enc_v_ = LatentEncoder<T>(ps, name + ".enc_v", channels, rng);
    enc_c_ = LatentEncoder<T>(ps, name + ".enc_c", channels, rng);
    enc_att_v_ = LatentEncoder<T>(ps, name + ".enc_att_v", channels, rng);
    enc_att_c_ = LatentEncoder<T>(ps, name + ".enc_att_c", channels, rng);
    mix_proj_ = Conv3dLayer<T>(ps, name + ".mix", channels, channels, 1, 1, 0, rng,
                               /*with_bias=*/false, /*trainable=*/true, Init::Identity);
}

template <typename T>
Tensor<T> CvfModule<T>::fuse(const Tensor<T>& z_v, const Tensor<T>& z_c, const Tensor<T>& beta_v,
                             const Tensor<T>& beta_c) const {
    auto mixed = add(mul(beta_v, z_v), mul(beta_c, z_c));
    return mix_proj_.forward(mixed);
}

template <typename T>
Tensor<T> CvfModule<T>::forward(const Tensor<T>& feat_vit, const Tensor<T>& feat_cnn,
                                const CvfNoise<T>* noise) const {
    if (!same_shape(feat_vit.shape(), feat_cnn.shape())) {
        throw ShapeError("cvf: branch features differ " + shape_str(feat_vit.shape()) + " vs " +
                         shape_str(feat_cnn.shape()));
    }
    auto eps_or_zero = [&](const Tensor<T>& e, const Shape& shape) {
        return e.defined() ? e : Tensor<T>::zeros(shape);
    };
    const Shape& shape = feat_vit.shape();
    static const CvfNoise<T> kNoNoise{};
    const CvfNoise<T>& nz = noise ? *noise : kNoNoise;

    auto g_v = enc_v_.encode(feat_vit);
    auto g_c = enc_c_.encode(feat_cnn);
    auto z_v = reparameterize(g_v, eps_or_zero(nz.branch_v, shape));
    auto z_c = reparameterize(g_c, eps_or_zero(nz.branch_c, shape));

    auto z_att_v = reparameterize(enc_att_v_.encode(z_v), eps_or_zero(nz.att_v, shape));
    auto z_att_c = reparameterize(enc_att_c_.encode(z_c), eps_or_zero(nz.att_c, shape));
    auto [beta_v, beta_c] = fusion_weights(z_att_v, z_att_c);
    return fuse(z_v, z_c, beta_v, beta_c);
}

#define VSEG_INSTANTIATE(T)                                                              \
    template Tensor<T> reparameterize(const LatentGaussian<T>&, const Tensor<T>&);      \
    template std::pair<Tensor<T>, Tensor<T>> fusion_weights(const Tensor<T>&, const Tensor<T>&); \
    template class LatentEncoder<T>;                                                     \
    template class CvfModule<T>;

VSEG_INSTANTIATE(float)
VSEG_INSTANTIATE(double)
#undef VSEG_INSTANTIATE

}  // namespace vseg
