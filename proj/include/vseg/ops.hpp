#pragma once

#include <array>
#include <vector>

#include "vseg/tensor.hpp"

namespace vseg {

// ---------------------------------------------------------------------------
// Elementwise arithmetic. Binary ops require identical shapes; broadcasting
// is deliberately explicit via expand()/reshape() so every gradient path
// stays auditable.
// ---------------------------------------------------------------------------
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& a, T s);

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T> Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }
template <typename T> Tensor<T> operator+(const Tensor<T>& a, T s) { return add_scalar(a, s); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, T s) { return mul_scalar(a, s); }
template <typename T> Tensor<T> operator*(T s, const Tensor<T>& a) { return mul_scalar(a, s); }

// ---------------------------------------------------------------------------
// Elementwise nonlinearities. Relu takes subgradient 0 at the kink.
// Digamma's derivative (trigamma) is evaluated internally for backward.
// ---------------------------------------------------------------------------
enum class Act { Softplus, Sigmoid, Relu, Exp, Neg, Log, Gelu, Recip, LGamma, Digamma };

template <typename T> Tensor<T> activation(const Tensor<T>& x, Act kind);

template <typename T> Tensor<T> softplus(const Tensor<T>& x) { return activation(x, Act::Softplus); }
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x)  { return activation(x, Act::Sigmoid); }
template <typename T> Tensor<T> relu(const Tensor<T>& x)     { return activation(x, Act::Relu); }
template <typename T> Tensor<T> exp(const Tensor<T>& x)      { return activation(x, Act::Exp); }
template <typename T> Tensor<T> neg(const Tensor<T>& x)      { return activation(x, Act::Neg); }
template <typename T> Tensor<T> log(const Tensor<T>& x)      { return activation(x, Act::Log); }
template <typename T> Tensor<T> gelu(const Tensor<T>& x)     { return activation(x, Act::Gelu); }

// Gradient passes through where lo <= x <= hi (pre-clamp value).
template <typename T> Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);

// Scalar reference implementations shared with tests and metric code.
double digamma_scalar(double x);
double trigamma_scalar(double x);

// ---------------------------------------------------------------------------
// Shape surgery. All views materialize; backward maps gradients exactly.
// ---------------------------------------------------------------------------
template <typename T> Tensor<T> reshape(const Tensor<T>& x, const Shape& shape);
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm);
// Expands size-1 axes of x up to `target` (materialized repeat).
template <typename T> Tensor<T> expand(const Tensor<T>& x, const Shape& target);
template <typename T> Tensor<T> slice(const Tensor<T>& x, int axis, int64_t start, int64_t len);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);

// ---------------------------------------------------------------------------
// Linear algebra (BLAS-backed inner kernels).
// ---------------------------------------------------------------------------
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);  // [m,k]x[k,n]
template <typename T> Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b);     // [B,m,k]x[B,k,n]

// ---------------------------------------------------------------------------
// Neural-network primitives.
// ---------------------------------------------------------------------------
// x: [N,C,D,H,W], w: [Co,C,kd,kh,kw], bias: [Co] or undefined.
// out extents: (in + 2*pad - k) / stride + 1 (floor), each must be positive.
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 const std::array<int64_t, 3>& stride, const std::array<int64_t, 3>& pad);

enum class Resize { Nearest, Trilinear };

// Integer-factor upsampling; factor 1 is the identity. Trilinear uses the
// align-corners-false convention.
template <typename T>
Tensor<T> upsample(const Tensor<T>& x, int64_t factor, Resize mode);

// General trilinear resize of [N,C,D,H,W] to an arbitrary output grid.
template <typename T>
Tensor<T> interp3d(const Tensor<T>& x, int64_t out_d, int64_t out_h, int64_t out_w);

// Numerically stabilized by max subtraction along `axis`.
template <typename T> Tensor<T> softmax(const Tensor<T>& x, int axis);

// x: [N,C,D,H,W]; gamma/beta: [C]; `groups` must divide C.
template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, int64_t groups, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps);

// ---------------------------------------------------------------------------
// Reductions. Axes must be distinct and valid; keepdims retains size-1 axes.
// Max routes gradient to the first occurrence of the maximum.
// ---------------------------------------------------------------------------
enum class Reduce { Sum, Mean, Max };

template <typename T>
Tensor<T> reduce(const Tensor<T>& x, Reduce op, const std::vector<int>& axes, bool keepdims);

template <typename T> Tensor<T> reduce_sum(const Tensor<T>& x, const std::vector<int>& axes, bool keepdims = false) {
    return reduce(x, Reduce::Sum, axes, keepdims);
}
template <typename T> Tensor<T> reduce_mean(const Tensor<T>& x, const std::vector<int>& axes, bool keepdims = false) {
    return reduce(x, Reduce::Mean, axes, keepdims);
}
template <typename T> Tensor<T> reduce_max(const Tensor<T>& x, const std::vector<int>& axes, bool keepdims = false) {
    return reduce(x, Reduce::Max, axes, keepdims);
}

// Sum over every element to a scalar [1].
template <typename T> Tensor<T> sum_all(const Tensor<T>& x);
template <typename T> Tensor<T> mean_all(const Tensor<T>& x);

// Stacks equally-shaped tensors along a fresh axis.
template <typename T> Tensor<T> stack(const std::vector<Tensor<T>>& parts, int axis);

}  // namespace vseg
