#include "vseg/encoders.hpp"

#include <cmath>

namespace vseg {

// ---------------------------------------------------------------------------
// PatchEmbed3d
// ---------------------------------------------------------------------------

template <typename T>
PatchEmbed3d<T>::PatchEmbed3d(ParamStore<T>& ps, const std::string& name, const ViTConfig& cfg,
                              const std::array<int64_t, 3>& canonical_grid, Rng& rng) {
    patch_ = cfg.patch_size;
    canonical_grid_ = canonical_grid;
    proj_ = Conv3dLayer<T>(ps, name + ".proj", 1, cfg.embed_dim, cfg.patch_size, cfg.patch_size, 0,
                           rng, /*with_bias=*/true, /*trainable=*/false);
    pos_ = ps.add(name + ".pos",
                  Tensor<T>::randn({1, cfg.embed_dim, canonical_grid[0], canonical_grid[1],
                                    canonical_grid[2]},
                                   rng, static_cast<T>(0.02)),
                  /*trainable=*/false);
}

template <typename T>
int64_t PatchEmbed3d<T>::token_count(const std::array<int64_t, 3>& vol_dims, int64_t patch) {
    return (vol_dims[0] / patch) * (vol_dims[1] / patch) * (vol_dims[2] / patch);
}

template <typename T>
Tensor<T> PatchEmbed3d<T>::forward(const Tensor<T>& volume) const {
    if (volume.ndim() != 5 || volume.dim(1) != 1) {
        throw ShapeError("patch embed expects [N,1,D,H,W], got " + shape_str(volume.shape()));
    }
    for (int i = 0; i < 3; ++i) {
        if (volume.dim(2 + i) % patch_ != 0) {
            throw ConfigError("volume extent " + std::to_string(volume.dim(2 + i)) +
                              " not divisible by patch size " + std::to_string(patch_));
        }
    }
    auto grid = proj_.forward(volume);  // [N, E, gd, gh, gw]
    const int64_t n = grid.dim(0), e = grid.dim(1);
    const int64_t gd = grid.dim(2), gh = grid.dim(3), gw = grid.dim(4);

    Tensor<T> pos = pos_;
    if (gd != canonical_grid_[0] || gh != canonical_grid_[1] || gw != canonical_grid_[2]) {
        pos = interp3d(pos, gd, gh, gw);
    }
    grid = add(grid, expand(pos, grid.shape()));
    return permute(reshape(grid, {n, e, gd * gh * gw}), {0, 2, 1});  // [N, T, E]
}

// ---------------------------------------------------------------------------
// Attention / blocks
// ---------------------------------------------------------------------------

template <typename T>
MultiHeadAttention<T>::MultiHeadAttention(ParamStore<T>& ps, const std::string& name, int64_t embed,
                                          int64_t heads, Rng& rng, bool trainable) {
    heads_ = heads;
    qkv_ = LinearLayer<T>(ps, name + ".qkv", embed, 3 * embed, rng, trainable);
    proj_ = LinearLayer<T>(ps, name + ".proj", embed, embed, rng, trainable);
}

template <typename T>
Tensor<T> MultiHeadAttention<T>::forward(const Tensor<T>& tokens, Tensor<T>* probs_out) const {
    const int64_t n = tokens.dim(0), t = tokens.dim(1), e = tokens.dim(2);
    const int64_t dh = e / heads_;
    auto qkv = qkv_.forward(reshape(tokens, {n * t, e}));  // [N*T, 3E]

    auto split_head = [&](int64_t which) {
        auto part = slice(qkv, 1, which * e, e);                       // [N*T, E]
        auto shaped = reshape(part, {n, t, heads_, dh});
        return reshape(permute(shaped, {0, 2, 1, 3}), {n * heads_, t, dh});
    };
    auto q = split_head(0);
    auto k = split_head(1);
    auto v = split_head(2);

    auto scores = mul_scalar(bmm(q, permute(k, {0, 2, 1})),
                             static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh))));
    auto probs = softmax(scores, 2);  // rows sum to 1
    if (probs_out) *probs_out = probs;
    auto ctx = bmm(probs, v);  // [N*heads, T, dh]
    auto merged = reshape(permute(reshape(ctx, {n, heads_, t, dh}), {0, 2, 1, 3}), {n * t, e});
    return reshape(proj_.forward(merged), {n, t, e});
}

template <typename T>
ViTBlock<T>::ViTBlock(ParamStore<T>& ps, const std::string& name, int64_t embed, int64_t heads,
                      Rng& rng, bool trainable) {
    ln1_g_ = ps.add(name + ".ln1.gamma", Tensor<T>::full({embed}, T(1)), trainable);
    ln1_b_ = ps.add(name + ".ln1.beta", Tensor<T>::zeros({embed}), trainable);
    attn_ = MultiHeadAttention<T>(ps, name + ".attn", embed, heads, rng, trainable);
    ln2_g_ = ps.add(name + ".ln2.gamma", Tensor<T>::full({embed}, T(1)), trainable);
    ln2_b_ = ps.add(name + ".ln2.beta", Tensor<T>::zeros({embed}), trainable);
    fc1_ = LinearLayer<T>(ps, name + ".mlp.fc1", embed, 4 * embed, rng, trainable);
    fc2_ = LinearLayer<T>(ps, name + ".mlp.fc2", 4 * embed, embed, rng, trainable);
}

template <typename T>
Tensor<T> ViTBlock<T>::forward(const Tensor<T>& tokens) const {
    const int64_t n = tokens.dim(0), t = tokens.dim(1), e = tokens.dim(2);
    auto x = add(tokens, attn_.forward(layer_norm_tokens(tokens, ln1_g_, ln1_b_)));
    auto h = layer_norm_tokens(x, ln2_g_, ln2_b_);
    auto m = fc2_.forward(gelu(fc1_.forward(reshape(h, {n * t, e}))));
    return add(x, reshape(m, {n, t, e}));
}

template <typename T>
ViTEncoder<T>::ViTEncoder(ParamStore<T>& ps, const std::string& name, const ViTConfig& cfg,
                          const std::array<int64_t, 3>& canonical_grid, Rng& rng) {
    tail_ = cfg.trainable_tail;
    patch_ = PatchEmbed3d<T>(ps, name + ".patch", cfg, canonical_grid, rng);
    for (int64_t i = 0; i < cfg.depth; ++i) {
        const bool trainable = i >= cfg.depth - cfg.trainable_tail;
        blocks_.emplace_back(ps, name + ".block" + std::to_string(i), cfg.embed_dim, cfg.heads, rng,
                             trainable);
    }
}

template <typename T>
Tensor<T> ViTEncoder<T>::prefix(const Tensor<T>& volume) const {
    auto x = patch_.forward(volume);
    const int64_t frozen = frozen_depth();
    for (int64_t i = 0; i < frozen; ++i) x = blocks_[static_cast<size_t>(i)].forward(x);
    return x;
}

template <typename T>
Tensor<T> ViTEncoder<T>::tail(const Tensor<T>& prefix_tokens) const {
    auto x = prefix_tokens;
    for (size_t i = static_cast<size_t>(frozen_depth()); i < blocks_.size(); ++i)
        x = blocks_[i].forward(x);
    return x;
}

// ---------------------------------------------------------------------------
// AGE
// ---------------------------------------------------------------------------

template <typename T>
AgeModule<T>::AgeModule(ParamStore<T>& ps, const std::string& name, int64_t channels, Rng& rng) {
    const int64_t hidden = std::max<int64_t>(channels / 4, 4);
    ca_fc1_ = Conv3dLayer<T>(ps, name + ".ca_fc1", channels, hidden, 1, 1, 0, rng);
    ca_fc2_ = Conv3dLayer<T>(ps, name + ".ca_fc2", hidden, channels, 1, 1, 0, rng);
    sa_conv_ = Conv3dLayer<T>(ps, name + ".sa_conv", 2, 1, 7, 1, 3, rng);
    fuse_conv_ = Conv3dLayer<T>(ps, name + ".fuse", channels, channels, 1, 1, 0, rng,
                                /*with_bias=*/true, /*trainable=*/true, Init::Zero);
}

template <typename T>
Tensor<T> AgeModule<T>::channel_gate(const Tensor<T>& f) const {
    auto pooled = reduce_mean(f, {2, 3, 4}, true);  // [N,C,1,1,1]
    return sigmoid(ca_fc2_.forward(relu(ca_fc1_.forward(pooled))));
}

template <typename T>
Tensor<T> AgeModule<T>::spatial_gate(const Tensor<T>& f) const {
    auto mean_c = reduce_mean(f, {1}, true);
    auto max_c = reduce_max(f, {1}, true);
    return sigmoid(sa_conv_.forward(concat<T>({mean_c, max_c}, 1)));
}

template <typename T>
Tensor<T> AgeModule<T>::forward(const Tensor<T>& f) const {
    auto ca = expand(channel_gate(f), f.shape());
    auto sa = expand(spatial_gate(f), f.shape());
    auto enhanced = fuse_conv_.forward(mul(mul(ca, sa), f));
    return add(f, enhanced);
}

// ---------------------------------------------------------------------------
// CNN encoder / decoder
// ---------------------------------------------------------------------------

template <typename T>
ConvBlock<T>::ConvBlock(ParamStore<T>& ps, const std::string& name, int64_t in_ch, int64_t out_ch,
                        Rng& rng) {
    conv_ = Conv3dLayer<T>(ps, name + ".conv", in_ch, out_ch, 3, 1, 1, rng);
    norm_ = GroupNormLayer<T>(ps, name + ".norm", out_ch);
}

template <typename T>
Tensor<T> ConvBlock<T>::forward(const Tensor<T>& x) const {
    return relu(norm_.forward(conv_.forward(x)));
}

template <typename T>
CnnEncoder<T>::CnnEncoder(ParamStore<T>& ps, const std::string& name, const CNNEncoderConfig& cfg,
                          Rng& rng) {
    num_scales_ = cfg.num_scales;
    int64_t in_ch = 1;
    for (int64_t s = 0; s < cfg.num_scales; ++s) {
        const int64_t ch = cfg.base_channels << s;
        const std::string scale = name + ".s" + std::to_string(s);
        blocks_a_.emplace_back(ps, scale + ".a", in_ch, ch, rng);
        blocks_b_.emplace_back(ps, scale + ".b", ch, ch, rng);
        if (s + 1 < cfg.num_scales) {
            down_.emplace_back(ps, scale + ".down", ch, ch * 2, 2, 2, 0, rng);
            in_ch = ch * 2;
        }
    }
}

template <typename T>
FeaturePyramid<T> CnnEncoder<T>::forward(const Tensor<T>& volume) const {
    const int64_t div = int64_t{1} << (num_scales_ - 1);
    for (int i = 0; i < 3; ++i) {
        if (volume.dim(2 + i) % div != 0) {
            throw ConfigError("volume extent " + std::to_string(volume.dim(2 + i)) +
                              " not divisible by " + std::to_string(div));
        }
    }
    FeaturePyramid<T> pyr;
    auto x = volume;
    for (size_t s = 0; s < blocks_a_.size(); ++s) {
        x = blocks_b_[s].forward(blocks_a_[s].forward(x));
        pyr.skips.push_back(x);
        if (s < down_.size()) x = down_[s].forward(x);
    }
    return pyr;
}

template <typename T>
Decoder<T>::Decoder(ParamStore<T>& ps, const std::string& name, const CNNEncoderConfig& cfg,
                    int64_t num_classes, Rng& rng) {
    for (int64_t s = cfg.num_scales - 2; s >= 0; --s) {
        const int64_t ch = cfg.base_channels << s;
        const int64_t up_ch = ch * 2;
        const std::string stage = name + ".u" + std::to_string(s);
        up_a_.emplace_back(ps, stage + ".a", up_ch + ch, ch, rng);
        up_b_.emplace_back(ps, stage + ".b", ch, ch, rng);
    }
    head_ = Conv3dLayer<T>(ps, name + ".head", cfg.base_channels, num_classes, 1, 1, 0, rng);
}

template <typename T>
DecoderOut<T> Decoder<T>::forward(const Tensor<T>& fused, const FeaturePyramid<T>& pyramid) const {
    DecoderOut<T> out;
    const size_t scales = pyramid.skips.size();
    out.feats.assign(scales, Tensor<T>());
    out.feats[scales - 1] = fused;

    auto cur = fused;
    for (size_t stage = 0; stage < up_a_.size(); ++stage) {
        const size_t s = scales - 2 - stage;  // target scale index
        const auto& skip = pyramid.skips[s];
        auto up = interp3d(cur, skip.dim(2), skip.dim(3), skip.dim(4));
        cur = up_b_[stage].forward(up_a_[stage].forward(concat<T>({up, skip}, 1)));
        out.feats[s] = cur;
    }
    out.logits = head_.forward(cur);
    return out;
}

// ---------------------------------------------------------------------------
// ViT branch glue
// ---------------------------------------------------------------------------

template <typename T>
VitBranch<T>::VitBranch(ParamStore<T>& ps, const ModelConfig& cfg, Rng& rng) {
    patch_ = cfg.vit.patch_size;
    const std::array<int64_t, 3> grid = {cfg.crop[0] / cfg.vit.patch_size,
                                         cfg.crop[1] / cfg.vit.patch_size,
                                         cfg.crop[2] / cfg.vit.patch_size};
    vit_ = ViTEncoder<T>(ps, "vit", cfg.vit, grid, rng);
    // Trainable fusion-side projection; zero init so the branch ramps in.
    grid_proj_ = Conv3dLayer<T>(ps, "fuse.vit_proj", cfg.vit.embed_dim, cfg.deepest_channels(), 1,
                                1, 0, rng, /*with_bias=*/true, /*trainable=*/true, Init::Zero);
    age_ = AgeModule<T>(ps, "age", cfg.deepest_channels(), rng);
}

template <typename T>
Tensor<T> VitBranch<T>::forward(const Tensor<T>& volume, const std::array<int64_t, 3>& target_grid,
                                const Tensor<T>* cached_prefix) const {
    Tensor<T> tokens = cached_prefix ? vit_.tail(*cached_prefix) : vit_.forward(volume);
    const int64_t n = tokens.dim(0), e = tokens.dim(2);
    const int64_t gd = volume.dim(2) / patch_, gh = volume.dim(3) / patch_,
                  gw = volume.dim(4) / patch_;
    auto grid = reshape(permute(tokens, {0, 2, 1}), {n, e, gd, gh, gw});
    if (gd != target_grid[0] || gh != target_grid[1] || gw != target_grid[2]) {
        grid = interp3d(grid, target_grid[0], target_grid[1], target_grid[2]);
    }
    return age_.forward(grid_proj_.forward(grid));
}

#define VSEG_INSTANTIATE(T)                  \
    template class PatchEmbed3d<T>;          \
    template class MultiHeadAttention<T>;    \
    template class ViTBlock<T>;              \
    template class ViTEncoder<T>;            \
    template class AgeModule<T>;             \
    template class ConvBlock<T>;             \
    template class CnnEncoder<T>;            \
    template class Decoder<T>;               \
    template class VitBranch<T>;

VSEG_INSTANTIATE(float)
VSEG_INSTANTIATE(double)
#undef VSEG_INSTANTIATE

}  // namespace vseg
