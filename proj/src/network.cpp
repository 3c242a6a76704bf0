#include "vseg/network.hpp"

namespace vseg {

template <typename T>
Network<T>::Network(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(init_seed);
    cnn_ = CnnEncoder<T>(params_, "cnn", cfg_.cnn, rng);
    if (cfg_.ablation.enhanced_vit) {
        vit_branch_ = VitBranch<T>(params_, cfg_, rng);
        if (cfg_.ablation.cvf) {
            cvf_ = CvfModule<T>(params_, "cvf", cfg_.deepest_channels(), rng);
        }
    }
    decoder_ = Decoder<T>(params_, "dec", cfg_.cnn, cfg_.num_classes, rng);
    if (cfg_.ablation.eur) {
        eur_ = EurModule<T>(params_, "eur", cfg_.cnn.base_channels, cfg_.cnn.num_scales,
                            cfg_.fusion_width, cfg_.num_classes, rng);
    }
}

template <typename T>
Tensor<T> Network<T>::vit_prefix(const Tensor<T>& volume) const {
    if (!cfg_.ablation.enhanced_vit) throw ConfigError("vit_prefix: ViT branch disabled");
    return vit_branch_.vit().prefix(volume);
}

template <typename T>
CvfNoise<T> Network<T>::sample_noise(const Shape& latent_shape, Rng& rng) const {
    CvfNoise<T> nz;
    nz.branch_v = Tensor<T>::randn(latent_shape, rng);
    nz.branch_c = Tensor<T>::randn(latent_shape, rng);
    nz.att_v = Tensor<T>::randn(latent_shape, rng);
    nz.att_c = Tensor<T>::randn(latent_shape, rng);
    return nz;
}

template <typename T>
ForwardOut<T> Network<T>::forward(const Tensor<T>& volume, const ForwardOptions<T>& opts) const {
    auto pyramid = cnn_.forward(volume);
    const auto& deep = pyramid.deepest();

    Tensor<T> fused;
    if (cfg_.ablation.enhanced_vit) {
        const std::array<int64_t, 3> grid = {deep.dim(2), deep.dim(3), deep.dim(4)};
        auto feat_vit = vit_branch_.forward(volume, grid, opts.vit_prefix_cache);
        fused = cfg_.ablation.cvf ? cvf_.forward(feat_vit, deep, opts.noise)
                                  : add(feat_vit, deep);
    } else {
        fused = deep;
    }

    auto dec = decoder_.forward(fused, pyramid);
    ForwardOut<T> out;
    out.initial_logits = dec.logits;
    out.decoder_feats = dec.feats;

    const bool need_belief = cfg_.ablation.eur || opts.want_uncertainty;
    if (need_belief) {
        out.belief = dirichlet_params(evidence_from_logits(dec.logits));
    }
    if (cfg_.ablation.eur) {
        auto p_initial = softmax(dec.logits, 1);
        auto refined = eur_.forward(p_initial, dec.feats, out.belief.uncertainty);
        out.final_logits = refined.logits;
    } else {
        out.final_logits = dec.logits;
    }
    out.probs = softmax(out.final_logits, 1);
    return out;
}

template class Network<float>;
template class Network<double>;

}  // namespace vseg
