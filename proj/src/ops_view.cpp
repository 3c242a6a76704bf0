#include <cstring>
#include <numeric>

#include "vseg/ops.hpp"

namespace vseg {

namespace {

std::vector<int64_t> strides_of(const Shape& shape) {
    std::vector<int64_t> s(shape.size());
    int64_t acc = 1;
    for (size_t i = shape.size(); i-- > 0;) {
        s[i] = acc;
        acc *= shape[i];
    }
    return s;
}

}  // namespace

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape) {
    if (numel_of(shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    std::vector<T> out(x.data());
    auto xi = x.impl();
    return make_result<T>(shape, std::move(out), {x}, [xi](TensorImpl<T>& self) {
        if (!xi->requires_grad) return;
        xi->ensure_grad();
        const int64_t m = self.numel();
        const T* g = self.grad.data();
        T* gx = xi->grad.data();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < m; ++i) gx[i] += g[i];
    });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm) {
    const int nd = x.ndim();
    if (static_cast<int>(perm.size()) != nd) throw ShapeError("permute: rank mismatch");
    std::vector<bool> seen(static_cast<size_t>(nd), false);
    Shape out_shape(static_cast<size_t>(nd));
    for (int i = 0; i < nd; ++i) {
        int p = perm[static_cast<size_t>(i)];
        if (p < 0 || p >= nd || seen[static_cast<size_t>(p)]) throw ShapeError("permute: invalid permutation");
        seen[static_cast<size_t>(p)] = true;
        out_shape[static_cast<size_t>(i)] = x.shape()[static_cast<size_t>(p)];
    }
    const auto in_strides = strides_of(x.shape());
    const auto out_strides = strides_of(out_shape);
    // gather strides: out flat index -> in flat index
    std::vector<int64_t> gather(static_cast<size_t>(nd));
    for (int i = 0; i < nd; ++i) gather[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(perm[static_cast<size_t>(i)])];

    const int64_t n = x.numel();
    std::vector<T> out(static_cast<size_t>(n));
    const T* px = x.ptr();
#pragma omp parallel for schedule(static)
    for (int64_t o = 0; o < n; ++o) {
        int64_t rem = o, src = 0;
        for (int a = 0; a < nd; ++a) {
            const int64_t idx = rem / out_strides[static_cast<size_t>(a)];
            rem -= idx * out_strides[static_cast<size_t>(a)];
            src += idx * gather[static_cast<size_t>(a)];
        }
        out[static_cast<size_t>(o)] = px[src];
    }
    auto xi = x.impl();
    return make_result<T>(out_shape, std::move(out), {x},
                          [xi, out_strides, gather, nd](TensorImpl<T>& self) {
                              if (!xi->requires_grad) return;
                              xi->ensure_grad();
                              const int64_t m = self.numel();
                              const T* g = self.grad.data();
                              T* gx = xi->grad.data();
#pragma omp parallel for schedule(static)
                              for (int64_t o = 0; o < m; ++o) {
                                  int64_t rem = o, src = 0;
                                  for (int a = 0; a < nd; ++a) {
                                      const int64_t idx = rem / out_strides[static_cast<size_t>(a)];
                                      rem -= idx * out_strides[static_cast<size_t>(a)];
                                      src += idx * gather[static_cast<size_t>(a)];
                                  }
                                  gx[src] += g[o];
                              }
                          });
}

template <typename T>
Tensor<T> expand(const Tensor<T>& x, const Shape& target) {
    const int nd = x.ndim();
    if (static_cast<int>(target.size()) != nd) {
        throw ShapeError("expand: rank mismatch " + shape_str(x.shape()) + " vs " + shape_str(target));
    }
    std::vector<bool> expanded(static_cast<size_t>(nd), false);
    for (int i = 0; i < nd; ++i) {
        const int64_t xs = x.shape()[static_cast<size_t>(i)];
        if (xs != target[static_cast<size_t>(i)] && xs != 1) {
            throw ShapeError("expand: axis " + std::to_string(i) + " cannot expand " +
                             shape_str(x.shape()) + " to " + shape_str(target));
        }
        expanded[static_cast<size_t>(i)] = xs == 1 && target[static_cast<size_t>(i)] != 1;
    }
    // expanded axes in this codebase always form one contiguous run, giving
    // the (outer, rep, inner) copy pattern
    int e0 = -1, e1 = -1;
    bool contiguous = true;
    for (int i = 0; i < nd; ++i) {
        if (expanded[static_cast<size_t>(i)]) {
            if (e0 < 0) e0 = i;
            e1 = i;
        }
    }
    if (e0 < 0) return x;  // nothing to do
    for (int i = e0; i <= e1; ++i) contiguous = contiguous && expanded[static_cast<size_t>(i)];
    if (!contiguous) {
        // split at the first gap and recurse
        Shape mid = x.shape();
        for (int i = e0; i <= e1 && expanded[static_cast<size_t>(i)]; ++i)
            mid[static_cast<size_t>(i)] = target[static_cast<size_t>(i)];
        return expand(expand(x, mid), target);
    }

    int64_t outer = 1, rep = 1, inner = 1;
    for (int i = 0; i < e0; ++i) outer *= target[static_cast<size_t>(i)];
    for (int i = e0; i <= e1; ++i) rep *= target[static_cast<size_t>(i)];
    for (int i = e1 + 1; i < nd; ++i) inner *= target[static_cast<size_t>(i)];

    std::vector<T> out(static_cast<size_t>(outer * rep * inner));
    const T* px = x.ptr();
#pragma omp parallel for schedule(static)
    for (int64_t orp = 0; orp < outer * rep; ++orp) {
        const int64_t o = orp / rep;
        std::memcpy(out.data() + orp * inner, px + o * inner, static_cast<size_t>(inner) * sizeof(T));
    }
    auto xi = x.impl();
    return make_result<T>(target, std::move(out), {x},
                          [xi, outer, rep, inner](TensorImpl<T>& self) {
                              if (!xi->requires_grad) return;
                              xi->ensure_grad();
                              const T* g = self.grad.data();
                              T* gx = xi->grad.data();
#pragma omp parallel for schedule(static)
                              for (int64_t o = 0; o < outer; ++o) {
                                  T* dst = gx + o * inner;
                                  const T* src = g + o * rep * inner;
                                  for (int64_t r = 0; r < rep; ++r) {
                                      const T* row = src + r * inner;
                                      for (int64_t i = 0; i < inner; ++i) dst[i] += row[i];
                                  }
                              }
                          });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, int64_t start, int64_t len) {
    const int nd = x.ndim();
    if (axis < 0 || axis >= nd) throw ShapeError("slice: bad axis");
    const int64_t extent = x.shape()[static_cast<size_t>(axis)];
    if (start < 0 || len <= 0 || start + len > extent) {
        throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") out of extent " + std::to_string(extent));
    }
    Shape out_shape = x.shape();
    out_shape[static_cast<size_t>(axis)] = len;
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.shape()[static_cast<size_t>(i)];
    for (int i = axis + 1; i < nd; ++i) inner *= x.shape()[static_cast<size_t>(i)];

    std::vector<T> out(static_cast<size_t>(outer * len * inner));
    const T* px = x.ptr();
    for (int64_t o = 0; o < outer; ++o) {
        std::memcpy(out.data() + o * len * inner, px + (o * extent + start) * inner,
                    static_cast<size_t>(len * inner) * sizeof(T));
    }
    auto xi = x.impl();
    return make_result<T>(out_shape, std::move(out), {x},
                          [xi, outer, inner, extent, start, len](TensorImpl<T>& self) {
                              if (!xi->requires_grad) return;
                              xi->ensure_grad();
                              const T* g = self.grad.data();
                              T* gx = xi->grad.data();
#pragma omp parallel for schedule(static)
                              for (int64_t o = 0; o < outer; ++o) {
                                  const T* gs = g + o * len * inner;
                                  T* gd = gx + (o * extent + start) * inner;
                                  for (int64_t i = 0; i < len * inner; ++i) gd[i] += gs[i];
                              }
                          });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const int nd = parts[0].ndim();
    if (axis < 0 || axis >= nd) throw ShapeError("concat: bad axis");
    int64_t axis_total = 0;
    for (const auto& p : parts) {
        if (p.ndim() != nd) throw ShapeError("concat: rank mismatch");
        for (int i = 0; i < nd; ++i) {
            if (i != axis && p.shape()[static_cast<size_t>(i)] != parts[0].shape()[static_cast<size_t>(i)]) {
                throw ShapeError("concat: extent mismatch on axis " + std::to_string(i) + ": " +
                                 shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
            }
        }
        axis_total += p.shape()[static_cast<size_t>(axis)];
    }
    Shape out_shape = parts[0].shape();
    out_shape[static_cast<size_t>(axis)] = axis_total;
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= out_shape[static_cast<size_t>(i)];
    for (int i = axis + 1; i < nd; ++i) inner *= out_shape[static_cast<size_t>(i)];

    std::vector<T> out(static_cast<size_t>(outer * axis_total * inner));
    int64_t offset = 0;
    for (const auto& p : parts) {
        const int64_t ext = p.shape()[static_cast<size_t>(axis)];
        const T* pp = p.ptr();
        for (int64_t o = 0; o < outer; ++o) {
            std::memcpy(out.data() + (o * axis_total + offset) * inner, pp + o * ext * inner,
                        static_cast<size_t>(ext * inner) * sizeof(T));
        }
        offset += ext;
    }
    std::vector<std::shared_ptr<TensorImpl<T>>> impls;
    std::vector<int64_t> extents;
    for (const auto& p : parts) {
        impls.push_back(p.impl());
        extents.push_back(p.shape()[static_cast<size_t>(axis)]);
    }
    return make_result<T>(out_shape, std::move(out), parts,
                          [impls, extents, outer, inner, axis_total](TensorImpl<T>& self) {
                              const T* g = self.grad.data();
                              int64_t offset2 = 0;
                              for (size_t k = 0; k < impls.size(); ++k) {
                                  const int64_t ext = extents[k];
                                  if (impls[k]->requires_grad) {
                                      impls[k]->ensure_grad();
                                      T* gp = impls[k]->grad.data();
#pragma omp parallel for schedule(static)
                                      for (int64_t o = 0; o < outer; ++o) {
                                          const T* gs = g + (o * axis_total + offset2) * inner;
                                          T* gd = gp + o * ext * inner;
                                          for (int64_t i = 0; i < ext * inner; ++i) gd[i] += gs[i];
                                      }
                                  }
                                  offset2 += ext;
                              }
                          });
}

template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& parts, int axis) {
    if (parts.empty()) throw ShapeError("stack: no inputs");
    std::vector<Tensor<T>> reshaped;
    reshaped.reserve(parts.size());
    for (const auto& p : parts) {
        Shape s = p.shape();
        s.insert(s.begin() + axis, 1);
        reshaped.push_back(reshape(p, s));
    }
    return concat(reshaped, axis);
}

#define VSEG_INSTANTIATE(T)                                                 \
    template Tensor<T> reshape(const Tensor<T>&, const Shape&);             \
    template Tensor<T> permute(const Tensor<T>&, const std::vector<int>&);  \
    template Tensor<T> expand(const Tensor<T>&, const Shape&);              \
    template Tensor<T> slice(const Tensor<T>&, int, int64_t, int64_t);      \
    template Tensor<T> concat(const std::vector<Tensor<T>>&, int);          \
    template Tensor<T> stack(const std::vector<Tensor<T>>&, int);

VSEG_INSTANTIATE(float)
VSEG_INSTANTIATE(double)
#undef VSEG_INSTANTIATE

}  // namespace vseg
