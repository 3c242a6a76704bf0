#include "vseg/nn.hpp"

#include <cmath>

namespace vseg {

int64_t norm_groups(int64_t channels) {
    for (int64_t g = std::min<int64_t>(8, channels); g > 1; --g) {
        if (channels % g == 0) return g;
    }
    return 1;
}

template <typename T>
Tensor<T> init_weight(const Shape& shape, int64_t fan_in, Init kind, Rng& rng) {
    switch (kind) {
        case Init::Zero:
            return Tensor<T>::zeros(shape);
        case Init::Identity: {
            // 1x1x1 conv or square matrix identity
            auto t = Tensor<T>::zeros(shape);
            const int64_t rows = shape[0];
            int64_t cols = 1;
            for (size_t i = 1; i < shape.size(); ++i) cols *= shape[i];
            if (rows != shape[1] || cols != shape[1]) {
                throw ConfigError("identity init requires square channel map, got " + shape_str(shape));
            }
            for (int64_t i = 0; i < rows; ++i) t.mutable_data()[static_cast<size_t>(i * cols + i)] = T(1);
            return t;
        }
        case Init::Kaiming: {
            const T bound = static_cast<T>(std::sqrt(6.0 / static_cast<double>(fan_in)));
            return Tensor<T>::uniform(shape, rng, -bound, bound);
        }
    }
    return Tensor<T>::zeros(shape);
}

template <typename T>
Conv3dLayer<T>::Conv3dLayer(ParamStore<T>& ps, const std::string& name, int64_t in_ch,
                            int64_t out_ch, int64_t kernel, int64_t stride, int64_t pad, Rng& rng,
                            bool with_bias, bool trainable, Init init) {
    stride_ = {stride, stride, stride};
    pad_ = {pad, pad, pad};
    const int64_t fan_in = in_ch * kernel * kernel * kernel;
    weight = ps.add(name + ".w",
                    init_weight<T>({out_ch, in_ch, kernel, kernel, kernel}, fan_in, init, rng),
                    trainable);
    if (with_bias) bias = ps.add(name + ".b", Tensor<T>::zeros({out_ch}), trainable);
}

template <typename T>
Tensor<T> Conv3dLayer<T>::forward(const Tensor<T>& x) const {
    return conv3d(x, weight, bias, stride_, pad_);
}

template <typename T>
LinearLayer<T>::LinearLayer(ParamStore<T>& ps, const std::string& name, int64_t in_dim,
                            int64_t out_dim, Rng& rng, bool trainable, Init init) {
    weight = ps.add(name + ".w", init_weight<T>({in_dim, out_dim}, in_dim, init, rng), trainable);
    bias = ps.add(name + ".b", Tensor<T>::zeros({out_dim}), trainable);
}

template <typename T>
Tensor<T> LinearLayer<T>::forward(const Tensor<T>& x) const {
    auto y = matmul(x, weight);
    auto b = expand(reshape(bias, {1, bias.numel()}), y.shape());
    return add(y, b);
}

template <typename T>
GroupNormLayer<T>::GroupNormLayer(ParamStore<T>& ps, const std::string& name, int64_t channels,
                                  bool trainable) {
    groups_ = norm_groups(channels);
    gamma = ps.add(name + ".gamma", Tensor<T>::full({channels}, T(1)), trainable);
    beta = ps.add(name + ".beta", Tensor<T>::zeros({channels}), trainable);
}

template <typename T>
Tensor<T> GroupNormLayer<T>::forward(const Tensor<T>& x) const {
    return group_norm(x, groups_, gamma, beta, static_cast<T>(1e-5));
}

template <typename T>
Tensor<T> layer_norm_tokens(const Tensor<T>& tokens, const Tensor<T>& gamma, const Tensor<T>& beta) {
    const int64_t n = tokens.dim(0), t = tokens.dim(1), e = tokens.dim(2);
    auto flat = reshape(tokens, {n * t, e, 1, 1, 1});
    auto normed = group_norm(flat, int64_t{1}, gamma, beta, static_cast<T>(1e-5));
    return reshape(normed, {n, t, e});
}

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
        m_.emplace_back(static_cast<size_t>(p.numel()), T(0));
        v_.emplace_back(static_cast<size_t>(p.numel()), T(0));
    }
}

template <typename T>
void Adam<T>::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        auto& p = params_[pi];
        const auto& g = p.grad();
        auto& data = p.mutable_data();
        auto& m = m_[pi];
        auto& v = v_[pi];
        const int64_t n = p.numel();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) {
            const double gi = g.empty() ? 0.0 : static_cast<double>(g[static_cast<size_t>(i)]);
            const double mi = beta1_ * static_cast<double>(m[static_cast<size_t>(i)]) + (1.0 - beta1_) * gi;
            const double vi = beta2_ * static_cast<double>(v[static_cast<size_t>(i)]) + (1.0 - beta2_) * gi * gi;
            m[static_cast<size_t>(i)] = static_cast<T>(mi);
            v[static_cast<size_t>(i)] = static_cast<T>(vi);
            const double update = lr_ * (mi / bc1) / (std::sqrt(vi / bc2) + eps_);
            data[static_cast<size_t>(i)] -= static_cast<T>(update);
        }
    }
}

template <typename T>
void Adam<T>::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

template class ParamStore<float>;
template class ParamStore<double>;
template Tensor<float> init_weight<float>(const Shape&, int64_t, Init, Rng&);
template Tensor<double> init_weight<double>(const Shape&, int64_t, Init, Rng&);
template class Conv3dLayer<float>;
template class Conv3dLayer<double>;
template class LinearLayer<float>;
template class LinearLayer<double>;
template class GroupNormLayer<float>;
template class GroupNormLayer<double>;
template Tensor<float> layer_norm_tokens(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> layer_norm_tokens(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);
template class Adam<float>;
template class Adam<double>;

}  // namespace vseg
