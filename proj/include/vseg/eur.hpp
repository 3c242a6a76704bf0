#pragma once

#include "vseg/nn.hpp"

namespace vseg {

// Subjective-logic state per voxel: alpha = evidence + 1, S = sum_k alpha,
// U = K / S. Belief mass b_k = e_k / S satisfies sum_k b_k + U = 1.
template <typename T>
struct DirichletBelief {
    Tensor<T> evidence;     // [N,K,D,H,W], >= 0
    Tensor<T> alpha;        // evidence + 1
    Tensor<T> strength;     // [N,1,D,H,W]
    Tensor<T> uncertainty;  // [N,1,D,H,W], in (0,1]
};

template <typename T>
Tensor<T> evidence_from_logits(const Tensor<T>& logits);

template <typename T>
DirichletBelief<T> dirichlet_params(const Tensor<T>& evidence);

// Uncertainty-guided refinement tail: multi-scale decoder-feature fusion with
// a spatial attention block, evidential masking, and a gated mix of the
// initial prediction with the fused features.
template <typename T>
class EurModule {
  public:
    EurModule() = default;
    EurModule(ParamStore<T>& ps, const std::string& name, int64_t base_channels,
              int64_t num_scales, int64_t width, int64_t num_classes, Rng& rng);

    // gate(F) * F; the caller adds the residual.
    Tensor<T> spatial_attention(const Tensor<T>& f) const;

    // feats[0] full resolution ... feats[3] deepest. Top-down 1x1x1 lateral
    // convs with nearest x2 upsampling, all scales lifted to full resolution,
    // concatenated, then the spatial-attention residual.
    Tensor<T> multiscale_fuse(const std::vector<Tensor<T>>& feats) const;

    // Intermediate top-down chain (index 0 = finest); merged[i] telescopes to
    // the sum of all coarser laterals upsampled onto scale i.
    std::vector<Tensor<T>> merged_laterals(const std::vector<Tensor<T>>& feats) const;
    const std::vector<Conv3dLayer<T>>& lateral_convs() const { return lateral_; }

    // Initial prediction projected to the fusion width.
    Tensor<T> project_initial(const Tensor<T>& probs) const;

    // (P~ + F_fusion) * exp(-U); U broadcast across channels.
    Tensor<T> reliable_mask(const Tensor<T>& p_proj, const Tensor<T>& fusion,
                            const Tensor<T>& uncertainty) const;

    struct Refined {
        Tensor<T> gate;     // lambda, [N,1,D,H,W], in [0,1]
        Tensor<T> refined;  // lambda*P~ + (1-lambda)*F_fusion
    };
    Refined refine(const Tensor<T>& p_proj, const Tensor<T>& fusion,
                   const Tensor<T>& reliable) const;

    Tensor<T> head(const Tensor<T>& refined) const;  // -> K-channel logits

    struct Out {
        Tensor<T> fusion, p_proj, reliable, gate, refined, logits;
    };
    Out forward(const Tensor<T>& probs, const std::vector<Tensor<T>>& decoder_feats,
                const Tensor<T>& uncertainty) const;

  private:
    std::vector<Conv3dLayer<T>> lateral_;
    Conv3dLayer<T> sab_conv_, p_proj_, gate_conv_, head_;
    int64_t width_ = 8;
};

extern template class EurModule<float>;
extern template class EurModule<double>;

}  // namespace vseg
