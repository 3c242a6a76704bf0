#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "vseg/errors.hpp"
#include "vseg/rng.hpp"

namespace vseg {

using Shape = std::vector<int64_t>;

int64_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);
bool same_shape(const Shape& a, const Shape& b);

// Thread-local switch for graph construction. Inference paths wrap
// themselves in a NoGradGuard so no autodiff state is allocated.
bool grad_enabled();

class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

// Dense row-major storage plus reverse-mode autodiff linkage. Values are
// immutable once produced by an op; only `grad` accumulates afterwards.
template <typename T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until backward touches this node
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<TensorImpl<T>>> parents;
    // Reads this->grad and accumulates into parents' grads.
    std::function<void(TensorImpl<T>&)> backward_fn;

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
    }
};

// Shared handle to a TensorImpl; cheap to copy, shallow semantics.
template <typename T>
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, T value, bool requires_grad = false);
    static Tensor from_data(const Shape& shape, std::vector<T> data,
                            bool requires_grad = false);
    static Tensor randn(const Shape& shape, Rng& rng, T stddev = T(1),
                        bool requires_grad = false);
    static Tensor uniform(const Shape& shape, Rng& rng, T lo, T hi,
                          bool requires_grad = false);
    static Tensor scalar(T value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int64_t numel() const { return impl_->numel(); }
    int64_t dim(int axis) const { return impl_->shape[static_cast<size_t>(axis)]; }
    int ndim() const { return static_cast<int>(impl_->shape.size()); }

    const std::vector<T>& data() const { return impl_->data; }
    std::vector<T>& mutable_data() { return impl_->data; }
    const T* ptr() const { return impl_->data.data(); }
    T* ptr() { return impl_->data.data(); }
    T item() const;

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool rg) {
        impl_->requires_grad = rg;
        return *this;
    }
    bool is_leaf() const { return impl_->is_leaf; }
    const std::vector<T>& grad() const { return impl_->grad; }
    void zero_grad() {
        if (!impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
    }

    // Value copy with no graph linkage (constant w.r.t. differentiation).
    Tensor detach() const;

    // Reverse-mode sweep from a scalar. Leaf grads accumulate across calls
    // until zero_grad(); interior grads are transient per sweep.
    void backward() const;

    std::shared_ptr<TensorImpl<T>> impl() const { return impl_; }

  private:
    std::shared_ptr<TensorImpl<T>> impl_;
};

// Builds the result node of an op: values + graph edges. `inputs` lists every
// differentiable operand in the order the backward lambda expects.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data,
                      const std::vector<Tensor<T>>& inputs,
                      std::function<void(TensorImpl<T>&)> backward_fn);

extern template struct TensorImpl<float>;
extern template struct TensorImpl<double>;
extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace vseg
