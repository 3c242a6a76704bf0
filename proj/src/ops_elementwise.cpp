#include <cmath>

#include "vseg/ops.hpp"

namespace vseg {

namespace {

template <typename T>
void check_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (!same_shape(a.shape(), b.shape())) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    }
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    check_same(a, b, "add");
    const int64_t n = a.numel();
    std::vector<T> out(static_cast<size_t>(n));
    const T* pa = a.ptr();
    const T* pb = b.ptr();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = pa[i] + pb[i];
    auto ai = a.impl(), bi = b.impl();
    return make_result<T>(a.shape(), std::move(out), {a, b}, [ai, bi](TensorImpl<T>& self) {
        const int64_t m = self.numel();
        const T* g = self.grad.data();
        if (ai->requires_grad) {
            ai->ensure_grad();
            T* ga = ai->grad.data();
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < m; ++i) ga[i] += g[i];
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            T* gb = bi->grad.data();
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < m; ++i) gb[i] += g[i];
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    check_same(a, b, "sub");
    const int64_t n = a.numel();
    std::vector<T> out(static_cast<size_t>(n));
    const T* pa = a.ptr();
    const T* pb = b.ptr();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = pa[i] - pb[i];
    auto ai = a.impl(), bi = b.impl();
    return make_result<T>(a.shape(), std::move(out), {a, b}, [ai, bi](TensorImpl<T>& self) {
        const int64_t m = self.numel();
        const T* g = self.grad.data();
        if (ai->requires_grad) {
            ai->ensure_grad();
            T* ga = ai->grad.data();
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < m; ++i) ga[i] += g[i];
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            T* gb = bi->grad.data();
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < m; ++i) gb[i] -= g[i];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    check_same(a, b, "mul");
    const int64_t n = a.numel();
    std::vector<T> out(static_cast<size_t>(n));
    const T* pa = a.ptr();
    const T* pb = b.ptr();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = pa[i] * pb[i];
    auto ai = a.impl(), bi = b.impl();
    return make_result<T>(a.shape(), std::move(out), {a, b}, [ai, bi](TensorImpl<T>& self) {
        const int64_t m = self.numel();
        const T* g = self.grad.data();
        if (ai->requires_grad) {
            ai->ensure_grad();
            T* ga = ai->grad.data();
            const T* pb2 = bi->data.data();
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < m; ++i) ga[i] += g[i] * pb2[i];
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            T* gb = bi->grad.data();
            const T* pa2 = ai->data.data();
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < m; ++i) gb[i] += g[i] * pa2[i];
        }
    });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    check_same(a, b, "div");
    const int64_t n = a.numel();
    std::vector<T> out(static_cast<size_t>(n));
    const T* pa = a.ptr();
    const T* pb = b.ptr();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = pa[i] / pb[i];
    auto ai = a.impl(), bi = b.impl();
    return make_result<T>(a.shape(), std::move(out), {a, b}, [ai, bi](TensorImpl<T>& self) {
        const int64_t m = self.numel();
        const T* g = self.grad.data();
        const T* pa2 = ai->data.data();
        const T* pb2 = bi->data.data();
        if (ai->requires_grad) {
            ai->ensure_grad();
            T* ga = ai->grad.data();
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < m; ++i) ga[i] += g[i] / pb2[i];
        }
        if (bi->requires_grad) {
            bi->ensure_grad();
            T* gb = bi->grad.data();
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < m; ++i) gb[i] -= g[i] * pa2[i] / (pb2[i] * pb2[i]);
        }
    });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
    const int64_t n = a.numel();
    std::vector<T> out(static_cast<size_t>(n));
    const T* pa = a.ptr();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = pa[i] + s;
    auto ai = a.impl();
    return make_result<T>(a.shape(), std::move(out), {a}, [ai](TensorImpl<T>& self) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        const int64_t m = self.numel();
        const T* g = self.grad.data();
        T* ga = ai->grad.data();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < m; ++i) ga[i] += g[i];
    });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
    const int64_t n = a.numel();
    std::vector<T> out(static_cast<size_t>(n));
    const T* pa = a.ptr();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = pa[i] * s;
    auto ai = a.impl();
    return make_result<T>(a.shape(), std::move(out), {a}, [ai, s](TensorImpl<T>& self) {
        if (!ai->requires_grad) return;
        ai->ensure_grad();
        const int64_t m = self.numel();
        const T* g = self.grad.data();
        T* ga = ai->grad.data();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < m; ++i) ga[i] += g[i] * s;
    });
}

// --------------------------------------------------------------------------
// Digamma / trigamma: recurrence shift to x >= 6, then the asymptotic
// Bernoulli expansion. Arguments here are always >= 1 (Dirichlet alphas).
// --------------------------------------------------------------------------
double digamma_scalar(double x) {
    double result = 0.0;
    while (x < 10.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    result += std::log(x) - 0.5 * inv -
              inv2 * (1.0 / 12.0 -
                      inv2 * (1.0 / 120.0 -
                              inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    return result;
}

double trigamma_scalar(double x) {
    double result = 0.0;
    while (x < 10.0) {
        result += 1.0 / (x * x);
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    result += inv * (1.0 + inv * (0.5 + inv * (1.0 / 6.0 -
                                               inv2 * (1.0 / 30.0 -
                                                       inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0))))));
    return result;
}

namespace {

template <typename T>
T act_forward(T x, Act kind) {
    switch (kind) {
        case Act::Softplus:
            // max(x,0) + log1p(exp(-|x|)) is overflow-free on both tails.
            return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
        case Act::Sigmoid:
            if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
            {
                const T e = std::exp(x);
                return e / (T(1) + e);
            }
        case Act::Relu: return x > T(0) ? x : T(0);
        case Act::Exp: return std::exp(x);
        case Act::Neg: return -x;
        case Act::Log: return std::log(x);
        case Act::Gelu: return T(0.5) * x * (T(1) + std::erf(x * T(0.7071067811865476)));
        case Act::Recip: return T(1) / x;
        case Act::LGamma: return static_cast<T>(std::lgamma(static_cast<double>(x)));
        case Act::Digamma: return static_cast<T>(digamma_scalar(static_cast<double>(x)));
    }
    return T(0);
}

template <typename T>
T act_backward(T x, T y, Act kind) {
    switch (kind) {
        case Act::Softplus: return act_forward(x, Act::Sigmoid);
        case Act::Sigmoid: return y * (T(1) - y);
        case Act::Relu: return x > T(0) ? T(1) : T(0);  // subgradient 0 at the kink
        case Act::Exp: return y;
        case Act::Neg: return T(-1);
        case Act::Log: return T(1) / x;
        case Act::Gelu: {
            const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865476)));
            const T pdf = std::exp(T(-0.5) * x * x) * T(0.3989422804014327);
            return cdf + x * pdf;
        }
        case Act::Recip: return -y * y;
        case Act::LGamma: return static_cast<T>(digamma_scalar(static_cast<double>(x)));
        case Act::Digamma: return static_cast<T>(trigamma_scalar(static_cast<double>(x)));
    }
    return T(0);
}

}  // namespace

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Act kind) {
    const int64_t n = x.numel();
    std::vector<T> out(static_cast<size_t>(n));
    const T* px = x.ptr();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = act_forward(px[i], kind);
    auto xi = x.impl();
    return make_result<T>(x.shape(), std::move(out), {x}, [xi, kind](TensorImpl<T>& self) {
        if (!xi->requires_grad) return;
        xi->ensure_grad();
        const int64_t m = self.numel();
        const T* g = self.grad.data();
        const T* px2 = xi->data.data();
        const T* py = self.data.data();
        T* gx = xi->grad.data();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < m; ++i) gx[i] += g[i] * act_backward(px2[i], py[i], kind);
    });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
    const int64_t n = x.numel();
    std::vector<T> out(static_cast<size_t>(n));
    const T* px = x.ptr();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) out[static_cast<size_t>(i)] = std::min(std::max(px[i], lo), hi);
    auto xi = x.impl();
    return make_result<T>(x.shape(), std::move(out), {x}, [xi, lo, hi](TensorImpl<T>& self) {
        if (!xi->requires_grad) return;
        xi->ensure_grad();
        const int64_t m = self.numel();
        const T* g = self.grad.data();
        const T* px2 = xi->data.data();
        T* gx = xi->grad.data();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < m; ++i) {
            if (px2[i] >= lo && px2[i] <= hi) gx[i] += g[i];
        }
    });
}

#define VSEG_INSTANTIATE(T)                                          \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);      \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);      \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);      \
    template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);      \
    template Tensor<T> add_scalar(const Tensor<T>&, T);              \
    template Tensor<T> mul_scalar(const Tensor<T>&, T);              \
    template Tensor<T> activation(const Tensor<T>&, Act);            \
    template Tensor<T> clamp(const Tensor<T>&, T, T);

VSEG_INSTANTIATE(float)
VSEG_INSTANTIATE(double)
#undef VSEG_INSTANTIATE

}  // namespace vseg
