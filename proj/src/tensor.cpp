#include "vseg/tensor.hpp"

#include <cxxabi.h>
#include <malloc.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <chrono>
#include <cstdlib>
#include <unordered_map>
#include <unordered_set>

namespace vseg {

namespace {
// Large activation buffers churn every op; keep them on the heap for reuse
// instead of bouncing mmap/munmap through the kernel.
struct AllocatorTuning {
    AllocatorTuning() {
        mallopt(M_MMAP_THRESHOLD, 1 << 30);
        mallopt(M_TRIM_THRESHOLD, 1 << 30);
    }
};
const AllocatorTuning g_allocator_tuning;
}  // namespace

int64_t numel_of(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

namespace {
thread_local bool t_grad_enabled = true;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev_; }

template <typename T>
static std::shared_ptr<TensorImpl<T>> make_impl(Shape shape, std::vector<T> data,
                                                bool requires_grad) {
    for (int64_t d : shape) {
        if (d <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (numel_of(shape) != static_cast<int64_t>(data.size())) {
        throw ShapeError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    }
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad && t_grad_enabled;
    return impl;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(const Shape& shape, bool requires_grad) {
    return Tensor<T>(make_impl<T>(shape, std::vector<T>(static_cast<size_t>(numel_of(shape)), T(0)),
                                  requires_grad));
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value, bool requires_grad) {
    return Tensor<T>(make_impl<T>(shape, std::vector<T>(static_cast<size_t>(numel_of(shape)), value),
                                  requires_grad));
}

template <typename T>
Tensor<T> Tensor<T>::from_data(const Shape& shape, std::vector<T> data, bool requires_grad) {
    return Tensor<T>(make_impl<T>(shape, std::move(data), requires_grad));
}

template <typename T>
Tensor<T> Tensor<T>::randn(const Shape& shape, Rng& rng, T stddev, bool requires_grad) {
    std::vector<T> data(static_cast<size_t>(numel_of(shape)));
    for (auto& v : data) v = static_cast<T>(rng.normal(0.0, static_cast<double>(stddev)));
    return Tensor<T>(make_impl<T>(shape, std::move(data), requires_grad));
}

template <typename T>
Tensor<T> Tensor<T>::uniform(const Shape& shape, Rng& rng, T lo, T hi, bool requires_grad) {
    std::vector<T> data(static_cast<size_t>(numel_of(shape)));
    for (auto& v : data)
        v = static_cast<T>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
    return Tensor<T>(make_impl<T>(shape, std::move(data), requires_grad));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
    return Tensor<T>(make_impl<T>(Shape{1}, std::vector<T>{value}, requires_grad));
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw UsageError("item() requires a scalar tensor, got " + shape_str(shape()));
    return impl_->data[0];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = impl_->shape;
    impl->data = impl_->data;
    impl->requires_grad = false;
    return Tensor<T>(impl);
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs,
                      std::function<void(TensorImpl<T>&)> backward_fn) {
    bool rg = false;
    if (t_grad_enabled) {
        for (const auto& in : inputs) rg = rg || in.requires_grad();
    }
    auto impl = make_impl<T>(std::move(shape), std::move(data), rg);
    if (rg) {
        impl->is_leaf = false;
        impl->backward_fn = std::move(backward_fn);
        for (const auto& in : inputs) {
            if (in.requires_grad()) impl->parents.push_back(in.impl());
        }
    }
    return Tensor<T>(impl);
}

namespace {
// Optional per-op backward timing, enabled with VSEG_PROF=1; attribution via
// the backward lambda's enclosing-function type name.
struct BackwardProfile {
    bool enabled = std::getenv("VSEG_PROF") != nullptr;
    std::unordered_map<std::string, double> seconds;
    ~BackwardProfile() {
        if (!enabled || seconds.empty()) return;
        std::vector<std::pair<double, std::string>> rows;
        for (const auto& [k, v] : seconds) rows.emplace_back(v, k);
        std::sort(rows.rbegin(), rows.rend());
        std::fprintf(stderr, "backward time by op:\n");
        for (const auto& [v, k] : rows) std::fprintf(stderr, "  %8.3f s  %s\n", v, k.c_str());
    }
};
BackwardProfile g_backward_profile;
}  // namespace

template <typename T>
void Tensor<T>::backward() const {
    if (numel() != 1) {
        throw UsageError("backward() requires a scalar loss, got " + shape_str(shape()));
    }
    if (!impl_->requires_grad) return;

    // Iterative post-order DFS; graphs can be thousands of nodes deep.
    std::vector<TensorImpl<T>*> order;
    std::unordered_set<TensorImpl<T>*> visited;
    std::vector<std::pair<TensorImpl<T>*, size_t>> stack;
    stack.emplace_back(impl_.get(), 0);
    visited.insert(impl_.get());
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        if (next_child < node->parents.size()) {
            TensorImpl<T>* parent = node->parents[next_child++].get();
            if (visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    impl_->ensure_grad();
    impl_->grad[0] += T(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl<T>* node = *it;
        if (!node->backward_fn) continue;
        if (node->grad.empty()) node->ensure_grad();
        if (g_backward_profile.enabled) {
            const auto t0 = std::chrono::steady_clock::now();
            node->backward_fn(*node);
            const double dt =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            int status = 0;
            char* demangled =
                abi::__cxa_demangle(node->backward_fn.target_type().name(), nullptr, nullptr, &status);
            std::string name = status == 0 && demangled ? demangled : "unknown";
            if (demangled) std::free(demangled);
            const auto paren = name.find('(');
            g_backward_profile.seconds[name.substr(0, paren)] += dt;
        } else {
            node->backward_fn(*node);
        }
        // Interior grads are consumed exactly once per sweep.
        if (!node->is_leaf) {
            node->grad.clear();
            node->grad.shrink_to_fit();
        }
    }
}

template struct TensorImpl<float>;
template struct TensorImpl<double>;
template class Tensor<float>;
template class Tensor<double>;

template Tensor<float> make_result<float>(Shape, std::vector<float>, const std::vector<Tensor<float>>&,
                                          std::function<void(TensorImpl<float>&)>);
template Tensor<double> make_result<double>(Shape, std::vector<double>,
                                            const std::vector<Tensor<double>>&,
                                            std::function<void(TensorImpl<double>&)>);

}  // namespace vseg
