#pragma once

#include "vseg/nn.hpp"

namespace vseg {

// Diagonal Gaussian over channels at every voxel; sigma is strictly positive
// by construction (exp of a clamped log-std head).
template <typename T>
struct LatentGaussian {
    Tensor<T> mu;
    Tensor<T> sigma;
};

// Z = mu + sigma * eps. Gradient flows to mu and sigma, never to eps.
template <typename T>
Tensor<T> reparameterize(const LatentGaussian<T>& g, const Tensor<T>& eps);

// Stack the two attention latents on a fresh branch axis, softmax over it,
// unstack: weights are positive and sum to one at every voxel and channel.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> fusion_weights(const Tensor<T>& z_att_v, const Tensor<T>& z_att_c);

// Per-voxel MLP over channels emitting mu / log-sigma heads. The log-sigma
// bias starts at -3 so early training is nearly deterministic; an explicitly
// zeroed encoder still gives mu = 0, sigma = 1.
template <typename T>
class LatentEncoder {
  public:
    LatentEncoder() = default;
    LatentEncoder(ParamStore<T>& ps, const std::string& name, int64_t channels, Rng& rng);

    LatentGaussian<T> encode(const Tensor<T>& f) const;

  private:
    Conv3dLayer<T> hidden_, mu_head_, logsigma_head_;
};

// Fixed noise for one forward pass; undefined tensors mean eps = 0, which is
// the deterministic evaluation mode.
template <typename T>
struct CvfNoise {
    Tensor<T> branch_v, branch_c, att_v, att_c;
};

// Cross-branch variational fusion: latent-encode both branches, sample via
// reparameterization, derive softmax fusion weights from attention latents,
// and mix through a learnable channel projection.
template <typename T>
class CvfModule {
  public:
    CvfModule() = default;
    CvfModule(ParamStore<T>& ps, const std::string& name, int64_t channels, Rng& rng);

    Tensor<T> forward(const Tensor<T>& feat_vit, const Tensor<T>& feat_cnn,
                      const CvfNoise<T>* noise = nullptr) const;

    const LatentEncoder<T>& encoder_v() const { return enc_v_; }
    const LatentEncoder<T>& encoder_c() const { return enc_c_; }
    const LatentEncoder<T>& encoder_att_v() const { return enc_att_v_; }
    const LatentEncoder<T>& encoder_att_c() const { return enc_att_c_; }
    const Conv3dLayer<T>& mix_proj() const { return mix_proj_; }

    // Weighted mix + projection (Eq. 2 given precomputed weights).
    Tensor<T> fuse(const Tensor<T>& z_v, const Tensor<T>& z_c, const Tensor<T>& beta_v,
                   const Tensor<T>& beta_c) const;

  private:
    LatentEncoder<T> enc_v_, enc_c_, enc_att_v_, enc_att_c_;
    Conv3dLayer<T> mix_proj_;  // W_m, 1x1x1, identity init, no bias
};

extern template class LatentEncoder<float>;
extern template class LatentEncoder<double>;
extern template class CvfModule<float>;
extern template class CvfModule<double>;

}  // namespace vseg
