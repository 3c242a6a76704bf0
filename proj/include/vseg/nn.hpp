#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "vseg/ops.hpp"

namespace vseg {

// Named parameter registry. Registration order is deterministic and defines
// both initialization order and checkpoint layout. `trainable == false`
// parameters never enter the optimizer and never require grad.
template <typename T>
class ParamStore {
  public:
    struct Entry {
        std::string name;
        Tensor<T> tensor;
        bool trainable;
    };

    Tensor<T> add(const std::string& name, Tensor<T> t, bool trainable) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
        t.set_requires_grad(trainable);
        index_[name] = entries_.size();
        entries_.push_back({name, t, trainable});
        return t;
    }

    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }

    Tensor<T>* find(const std::string& name) {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &entries_[it->second].tensor;
    }

    std::vector<Tensor<T>> trainable() const {
        std::vector<Tensor<T>> out;
        for (const auto& e : entries_)
            if (e.trainable) out.push_back(e.tensor);
        return out;
    }

    void zero_grad() {
        for (auto& e : entries_) e.tensor.zero_grad();
    }

    int64_t total_count() const {
        int64_t n = 0;
        for (const auto& e : entries_) n += e.tensor.numel();
        return n;
    }

  private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, size_t> index_;
};

enum class Init { Kaiming, Zero, Identity };

template <typename T>
Tensor<T> init_weight(const Shape& shape, int64_t fan_in, Init kind, Rng& rng);

// Largest group count <= 8 dividing C; batch statistics are useless at
// batch size 2, so everything normalizes per-group.
int64_t norm_groups(int64_t channels);

template <typename T>
class Conv3dLayer {
  public:
    Conv3dLayer() = default;
    Conv3dLayer(ParamStore<T>& ps, const std::string& name, int64_t in_ch, int64_t out_ch,
                int64_t kernel, int64_t stride, int64_t pad, Rng& rng, bool with_bias = true,
                bool trainable = true, Init init = Init::Kaiming);

    Tensor<T> forward(const Tensor<T>& x) const;

    Tensor<T> weight, bias;  // bias undefined when with_bias == false

  private:
    std::array<int64_t, 3> stride_{1, 1, 1};
    std::array<int64_t, 3> pad_{0, 0, 0};
};

template <typename T>
class LinearLayer {
  public:
    LinearLayer() = default;
    LinearLayer(ParamStore<T>& ps, const std::string& name, int64_t in_dim, int64_t out_dim,
                Rng& rng, bool trainable = true, Init init = Init::Kaiming);

    // x: [M, in] -> [M, out]
    Tensor<T> forward(const Tensor<T>& x) const;

    Tensor<T> weight, bias;
};

template <typename T>
class GroupNormLayer {
  public:
    GroupNormLayer() = default;
    GroupNormLayer(ParamStore<T>& ps, const std::string& name, int64_t channels,
                   bool trainable = true);

    Tensor<T> forward(const Tensor<T>& x) const;

    Tensor<T> gamma, beta;

  private:
    int64_t groups_ = 1;
};

// Per-token LayerNorm over the channel axis of [N, T, E].
template <typename T>
Tensor<T> layer_norm_tokens(const Tensor<T>& tokens, const Tensor<T>& gamma, const Tensor<T>& beta);

template <typename T>
class Adam {
  public:
    Adam(std::vector<Tensor<T>> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8);

    void step();
    void zero_grad();
    double lr() const { return lr_; }

  private:
    std::vector<Tensor<T>> params_;
    std::vector<std::vector<T>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class Conv3dLayer<float>;
extern template class Conv3dLayer<double>;
extern template class LinearLayer<float>;
extern template class LinearLayer<double>;
extern template class GroupNormLayer<float>;
extern template class GroupNormLayer<double>;
extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace vseg
