#pragma once

#include "vseg/cvf.hpp"
#include "vseg/encoders.hpp"
#include "vseg/eur.hpp"

namespace vseg {

template <typename T>
struct ForwardOut {
    Tensor<T> initial_logits;  // decoder head; defines P and the evidence
    Tensor<T> final_logits;    // refined head when EUR is on, else initial
    Tensor<T> probs;           // softmax(final_logits) over the class axis
    DirichletBelief<T> belief; // populated when requested or EUR is on
    std::vector<Tensor<T>> decoder_feats;
};

template <typename T>
struct ForwardOptions {
    const CvfNoise<T>* noise = nullptr;          // nullptr -> deterministic (eps = 0)
    const Tensor<T>* vit_prefix_cache = nullptr; // precomputed frozen-prefix tokens
    bool want_uncertainty = true;                // evidence maps even without EUR
};

// Full parallel-encoding segmentation network. Which branches exist is
// driven by the ablation flags:
//   enhanced_vit: ViT branch (frozen prefix + trainable tail + AGE)
//   cvf:          variational fusion of the two branches (else: sum)
//   eur:          evidential refinement tail
template <typename T>
class Network {
  public:
    Network(const ModelConfig& cfg, uint64_t init_seed);

    ForwardOut<T> forward(const Tensor<T>& volume, const ForwardOptions<T>& opts = {}) const;

    // Frozen ViT prefix for caching; call under NoGradGuard.
    Tensor<T> vit_prefix(const Tensor<T>& volume) const;

    CvfNoise<T> sample_noise(const Shape& latent_shape, Rng& rng) const;

    ParamStore<T>& params() { return params_; }
    const ParamStore<T>& params() const { return params_; }
    const ModelConfig& config() const { return cfg_; }

    const CnnEncoder<T>& cnn() const { return cnn_; }
    const Decoder<T>& decoder() const { return decoder_; }
    const VitBranch<T>& vit_branch() const { return vit_branch_; }
    const CvfModule<T>& cvf() const { return cvf_; }
    const EurModule<T>& eur() const { return eur_; }

  private:
    ModelConfig cfg_;
    ParamStore<T> params_;
    CnnEncoder<T> cnn_;
    VitBranch<T> vit_branch_;
    CvfModule<T> cvf_;
    Decoder<T> decoder_;
    EurModule<T> eur_;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace vseg
