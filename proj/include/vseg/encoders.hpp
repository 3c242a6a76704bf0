#pragma once

#include "vseg/model_config.hpp"
#include "vseg/nn.hpp"

namespace vseg {

// Multi-scale CNN features: skips[0] at full resolution through skips[3] at
// 1/8; spatial extents halve exactly between consecutive scales.
template <typename T>
struct FeaturePyramid {
    std::vector<Tensor<T>> skips;
    const Tensor<T>& deepest() const { return skips.back(); }
};

// Non-overlapping patch tokenization plus a learned positional field kept in
// grid form so it can be resized when the input grid differs from the
// canonical one. Both the projection and the positional field belong to the
// frozen backbone prefix.
template <typename T>
class PatchEmbed3d {
  public:
    PatchEmbed3d() = default;
    PatchEmbed3d(ParamStore<T>& ps, const std::string& name, const ViTConfig& cfg,
                 const std::array<int64_t, 3>& canonical_grid, Rng& rng);

    // [N,1,D,H,W] -> [N, T, E]; extents must divide by patch_size.
    Tensor<T> forward(const Tensor<T>& volume) const;

    static int64_t token_count(const std::array<int64_t, 3>& vol_dims, int64_t patch);

  private:
    Conv3dLayer<T> proj_;
    Tensor<T> pos_;  // [1, E, gd, gh, gw]
    int64_t patch_ = 8;
    std::array<int64_t, 3> canonical_grid_{};
};

template <typename T>
class MultiHeadAttention {
  public:
    MultiHeadAttention() = default;
    MultiHeadAttention(ParamStore<T>& ps, const std::string& name, int64_t embed, int64_t heads,
                       Rng& rng, bool trainable);

    // probs_out, when non-null, receives the [N*heads, T, T] attention rows.
    Tensor<T> forward(const Tensor<T>& tokens, Tensor<T>* probs_out = nullptr) const;

  private:
    LinearLayer<T> qkv_, proj_;
    int64_t heads_ = 1;
};

template <typename T>
class ViTBlock {
  public:
    ViTBlock() = default;
    ViTBlock(ParamStore<T>& ps, const std::string& name, int64_t embed, int64_t heads, Rng& rng,
             bool trainable);

    Tensor<T> forward(const Tensor<T>& tokens) const;
    const MultiHeadAttention<T>& attention() const { return attn_; }

  private:
    Tensor<T> ln1_g_, ln1_b_, ln2_g_, ln2_b_;
    MultiHeadAttention<T> attn_;
    LinearLayer<T> fc1_, fc2_;
};

// Pre-norm transformer encoder; only the final `trainable_tail` blocks carry
// trainable parameters. The frozen prefix (patch embed, positions, early
// blocks) is a pure function of the input and can be evaluated once per
// volume and cached.
template <typename T>
class ViTEncoder {
  public:
    ViTEncoder() = default;
    ViTEncoder(ParamStore<T>& ps, const std::string& name, const ViTConfig& cfg,
               const std::array<int64_t, 3>& canonical_grid, Rng& rng);

    Tensor<T> prefix(const Tensor<T>& volume) const;      // frozen part
    Tensor<T> tail(const Tensor<T>& prefix_tokens) const;  // trainable part
    Tensor<T> forward(const Tensor<T>& volume) const { return tail(prefix(volume)); }

    const std::vector<ViTBlock<T>>& blocks() const { return blocks_; }
    int64_t frozen_depth() const { return static_cast<int64_t>(blocks_.size()) - tail_; }

  private:
    PatchEmbed3d<T> patch_;
    std::vector<ViTBlock<T>> blocks_;
    int64_t tail_ = 2;
};

// Attention-guided enhancement: F + Conv1(CA(F) * SA(F) * F). The fusion
// conv starts at zero, so the module begins as the identity.
template <typename T>
class AgeModule {
  public:
    AgeModule() = default;
    AgeModule(ParamStore<T>& ps, const std::string& name, int64_t channels, Rng& rng);

    Tensor<T> channel_gate(const Tensor<T>& f) const;  // [N,C,1,1,1], values in (0,1)
    Tensor<T> spatial_gate(const Tensor<T>& f) const;  // [N,1,d,h,w], values in (0,1)
    Tensor<T> forward(const Tensor<T>& f) const;

  private:
    Conv3dLayer<T> ca_fc1_, ca_fc2_, sa_conv_, fuse_conv_;
};

template <typename T>
class ConvBlock {
  public:
    ConvBlock() = default;
    ConvBlock(ParamStore<T>& ps, const std::string& name, int64_t in_ch, int64_t out_ch, Rng& rng);

    Tensor<T> forward(const Tensor<T>& x) const;

  private:
    Conv3dLayer<T> conv_;
    GroupNormLayer<T> norm_;
};

template <typename T>
class CnnEncoder {
  public:
    CnnEncoder() = default;
    CnnEncoder(ParamStore<T>& ps, const std::string& name, const CNNEncoderConfig& cfg, Rng& rng);

    FeaturePyramid<T> forward(const Tensor<T>& volume) const;

  private:
    std::vector<ConvBlock<T>> blocks_a_, blocks_b_;
    std::vector<Conv3dLayer<T>> down_;
    int64_t num_scales_ = 4;
};

template <typename T>
struct DecoderOut {
    Tensor<T> logits;               // [N, K, D, H, W]
    std::vector<Tensor<T>> feats;   // [0]=full res ... [3]=deepest (the fused input)
};

template <typename T>
class Decoder {
  public:
    Decoder() = default;
    Decoder(ParamStore<T>& ps, const std::string& name, const CNNEncoderConfig& cfg,
            int64_t num_classes, Rng& rng);

    DecoderOut<T> forward(const Tensor<T>& fused, const FeaturePyramid<T>& pyramid) const;

  private:
    std::vector<ConvBlock<T>> up_a_, up_b_;
    Conv3dLayer<T> head_;
};

// ViT branch glue: tokens -> spatial grid -> resize to the CNN's deepest
// grid -> channel projection -> AGE. The projection is trainable (unlike the
// backbone prefix): frozen at random it would pin the branch's output basis.
template <typename T>
class VitBranch {
  public:
    VitBranch() = default;
    VitBranch(ParamStore<T>& ps, const ModelConfig& cfg, Rng& rng);

    // cached_prefix, when provided, must equal vit().prefix(volume).
    Tensor<T> forward(const Tensor<T>& volume, const std::array<int64_t, 3>& target_grid,
                      const Tensor<T>* cached_prefix = nullptr) const;

    const ViTEncoder<T>& vit() const { return vit_; }
    const AgeModule<T>& age() const { return age_; }

  private:
    ViTEncoder<T> vit_;
    Conv3dLayer<T> grid_proj_;
    AgeModule<T> age_;
    int64_t patch_ = 8;
};

extern template class PatchEmbed3d<float>;
extern template class PatchEmbed3d<double>;
extern template class MultiHeadAttention<float>;
extern template class MultiHeadAttention<double>;
extern template class ViTBlock<float>;
extern template class ViTBlock<double>;
extern template class ViTEncoder<float>;
extern template class ViTEncoder<double>;
extern template class AgeModule<float>;
extern template class AgeModule<double>;
extern template class ConvBlock<float>;
extern template class ConvBlock<double>;
extern template class CnnEncoder<float>;
extern template class CnnEncoder<double>;
extern template class Decoder<float>;
extern template class Decoder<double>;
extern template class VitBranch<float>;
extern template class VitBranch<double>;

}  // namespace vseg
