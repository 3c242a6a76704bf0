#include <algorithm>
#include <limits>

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

// Odometer over `dims`; returns false when the full cycle completes.
inline bool advance(std::vector<int64_t>& counter, const std::vector<int64_t>& dims) {
    for (size_t r = 0; r < dims.size(); ++r) {
        if (++counter[r] < dims[r]) return true;
        counter[r] = 0;
    }
    return false;
}

// True when `flags` marks one contiguous run of axes (at least one).
bool contiguous_run(const std::vector<bool>& flags, int* first, int* last) {
    int f = -1, l = -1;
    for (int i = 0; i < static_cast<int>(flags.size()); ++i) {
        if (flags[static_cast<size_t>(i)]) {
            if (f < 0) f = i;
            l = i;
        }
    }
    if (f < 0) return false;
    for (int i = f; i <= l; ++i)
        if (!flags[static_cast<size_t>(i)]) return false;
    *first = f;
    *last = l;
    return true;
}

struct ReducePlan {
    // pattern A: reduced axes contiguous -> (keep_outer, red, keep_inner)
    // pattern B: kept axes contiguous   -> (red_outer, keep, red_inner)
    enum { A, B, General } kind;
    int64_t outer = 1, mid = 1, inner = 1;
};

}  // namespace

template <typename T>
Tensor<T> reduce(const Tensor<T>& x, Reduce op, const std::vector<int>& axes, bool keepdims) {
    const int nd = x.ndim();
    std::vector<bool> reduced(static_cast<size_t>(nd), false);
    for (int a : axes) {
        if (a < 0 || a >= nd) throw ConfigError("reduce: axis " + std::to_string(a) + " out of range");
        if (reduced[static_cast<size_t>(a)]) throw ConfigError("reduce: duplicate axis " + std::to_string(a));
        reduced[static_cast<size_t>(a)] = true;
    }

    const auto in_strides = strides_of(x.shape());
    Shape out_shape;
    std::vector<int64_t> kept_dims, kept_strides, red_dims, red_strides;
    for (int a = 0; a < nd; ++a) {
        if (reduced[static_cast<size_t>(a)]) {
            red_dims.push_back(x.shape()[static_cast<size_t>(a)]);
            red_strides.push_back(in_strides[static_cast<size_t>(a)]);
            if (keepdims) out_shape.push_back(1);
        } else {
            kept_dims.push_back(x.shape()[static_cast<size_t>(a)]);
            kept_strides.push_back(in_strides[static_cast<size_t>(a)]);
            out_shape.push_back(x.shape()[static_cast<size_t>(a)]);
        }
    }
    if (out_shape.empty()) out_shape.push_back(1);

    int64_t out_n = 1;
    for (int64_t d : kept_dims) out_n *= d;
    int64_t red_n = 1;
    for (int64_t d : red_dims) red_n *= d;

    // pick the execution pattern
    ReducePlan plan;
    std::vector<bool> kept_flags(static_cast<size_t>(nd));
    for (int a = 0; a < nd; ++a) kept_flags[static_cast<size_t>(a)] = !reduced[static_cast<size_t>(a)];
    int rf = 0, rl = 0, kf = 0, kl = 0;
    if (contiguous_run(reduced, &rf, &rl)) {
        plan.kind = ReducePlan::A;
        for (int a = 0; a < rf; ++a) plan.outer *= x.shape()[static_cast<size_t>(a)];
        plan.mid = red_n;
        for (int a = rl + 1; a < nd; ++a) plan.inner *= x.shape()[static_cast<size_t>(a)];
    } else if (contiguous_run(kept_flags, &kf, &kl)) {
        plan.kind = ReducePlan::B;
        for (int a = 0; a < kf; ++a) plan.outer *= x.shape()[static_cast<size_t>(a)];
        plan.mid = out_n;
        for (int a = kl + 1; a < nd; ++a) plan.inner *= x.shape()[static_cast<size_t>(a)];
    } else {
        plan.kind = ReducePlan::General;
    }

    std::vector<T> out(static_cast<size_t>(out_n));
    std::vector<int64_t> argmax;
    if (op == Reduce::Max) argmax.resize(static_cast<size_t>(out_n));
    const T* px = x.ptr();
    const size_t nk = kept_dims.size();
    const size_t nr = red_dims.size();

    if (plan.kind == ReducePlan::A) {
        // out[o, i] = reduce_r in[o, r, i]
        const int64_t KO = plan.outer, R = plan.mid, KI = plan.inner;
        if (op == Reduce::Max) {
#pragma omp parallel for schedule(static)
            for (int64_t o = 0; o < KO; ++o) {
                T* orow = out.data() + o * KI;
                int64_t* arow = argmax.data() + o * KI;
                const T* base = px + o * R * KI;
                for (int64_t i = 0; i < KI; ++i) {
                    orow[i] = base[i];
                    arow[i] = o * R * KI + i;
                }
                for (int64_t r = 1; r < R; ++r) {
                    const T* row = base + r * KI;
                    for (int64_t i = 0; i < KI; ++i) {
                        if (row[i] > orow[i]) {
                            orow[i] = row[i];
                            arow[i] = o * R * KI + r * KI + i;
                        }
                    }
                }
            }
        } else if (KI >= 8) {
#pragma omp parallel
            {
                std::vector<double> acc(static_cast<size_t>(KI));
#pragma omp for schedule(static)
                for (int64_t o = 0; o < KO; ++o) {
                    std::fill(acc.begin(), acc.end(), 0.0);
                    const T* base = px + o * R * KI;
                    for (int64_t r = 0; r < R; ++r) {
                        const T* row = base + r * KI;
                        for (int64_t i = 0; i < KI; ++i) acc[static_cast<size_t>(i)] += row[i];
                    }
                    T* orow = out.data() + o * KI;
                    const double scale = op == Reduce::Mean ? 1.0 / static_cast<double>(R) : 1.0;
                    for (int64_t i = 0; i < KI; ++i) orow[i] = static_cast<T>(acc[static_cast<size_t>(i)] * scale);
                }
            }
        } else {
#pragma omp parallel for schedule(static)
            for (int64_t oi = 0; oi < KO * KI; ++oi) {
                const int64_t o = oi / KI, i = oi % KI;
                const T* base = px + o * R * KI + i;
                double acc = 0.0;
                for (int64_t r = 0; r < R; ++r) acc += static_cast<double>(base[r * KI]);
                if (op == Reduce::Mean) acc /= static_cast<double>(R);
                out[static_cast<size_t>(oi)] = static_cast<T>(acc);
            }
        }
    } else if (plan.kind == ReducePlan::B) {
        // out[k] = reduce_{ro, ri} in[ro, k, ri]
        const int64_t RO = plan.outer, K = plan.mid, RI = plan.inner;
#pragma omp parallel for schedule(static)
        for (int64_t k = 0; k < K; ++k) {
            if (op == Reduce::Max) {
                T best = -std::numeric_limits<T>::infinity();
                int64_t best_off = 0;
                for (int64_t ro = 0; ro < RO; ++ro) {
                    const T* row = px + (ro * K + k) * RI;
                    for (int64_t ri = 0; ri < RI; ++ri) {
                        if (row[ri] > best) {
                            best = row[ri];
                            best_off = (ro * K + k) * RI + ri;
                        }
                    }
                }
                out[static_cast<size_t>(k)] = best;
                argmax[static_cast<size_t>(k)] = best_off;
            } else {
                double acc = 0.0;
                for (int64_t ro = 0; ro < RO; ++ro) {
                    const T* row = px + (ro * K + k) * RI;
                    for (int64_t ri = 0; ri < RI; ++ri) acc += static_cast<double>(row[ri]);
                }
                if (op == Reduce::Mean) acc /= static_cast<double>(RO * RI);
                out[static_cast<size_t>(k)] = static_cast<T>(acc);
            }
        }
    } else {
#pragma omp parallel
        {
            std::vector<int64_t> counter(nr);
#pragma omp for schedule(static)
            for (int64_t o = 0; o < out_n; ++o) {
                int64_t rem = o, base = 0;
                int64_t stride_acc = out_n;
                for (size_t a = 0; a < nk; ++a) {
                    stride_acc /= kept_dims[a];
                    const int64_t idx = rem / stride_acc;
                    rem -= idx * stride_acc;
                    base += idx * kept_strides[a];
                }
                std::fill(counter.begin(), counter.end(), 0);
                if (op == Reduce::Max) {
                    T best = -std::numeric_limits<T>::infinity();
                    int64_t best_off = base;
                    do {
                        int64_t off = base;
                        for (size_t r = 0; r < nr; ++r) off += counter[r] * red_strides[r];
                        if (px[off] > best) {
                            best = px[off];
                            best_off = off;
                        }
                    } while (advance(counter, red_dims));
                    out[static_cast<size_t>(o)] = best;
                    argmax[static_cast<size_t>(o)] = best_off;
                } else {
                    double acc = 0.0;
                    do {
                        int64_t off = base;
                        for (size_t r = 0; r < nr; ++r) off += counter[r] * red_strides[r];
                        acc += static_cast<double>(px[off]);
                    } while (advance(counter, red_dims));
                    if (op == Reduce::Mean) acc /= static_cast<double>(red_n);
                    out[static_cast<size_t>(o)] = static_cast<T>(acc);
                }
            }
        }
    }

    auto xi = x.impl();
    const T scale = (op == Reduce::Mean) ? T(1) / static_cast<T>(red_n) : T(1);
    return make_result<T>(
        out_shape, std::move(out), {x},
        [xi, op, scale, argmax, plan, kept_dims, kept_strides, red_dims, red_strides, out_n, nk,
         nr](TensorImpl<T>& self) {
            if (!xi->requires_grad) return;
            xi->ensure_grad();
            const T* g = self.grad.data();
            T* gx = xi->grad.data();
            if (op == Reduce::Max) {
                // argmax offsets are disjoint across outputs
#pragma omp parallel for schedule(static)
                for (int64_t o = 0; o < out_n; ++o) gx[argmax[static_cast<size_t>(o)]] += g[o];
                return;
            }
            if (plan.kind == ReducePlan::A) {
                const int64_t KO = plan.outer, R = plan.mid, KI = plan.inner;
#pragma omp parallel for schedule(static)
                for (int64_t or_ = 0; or_ < KO * R; ++or_) {
                    const int64_t o = or_ / R;
                    const T* grow = g + o * KI;
                    T* grad_row = gx + or_ * KI;
                    for (int64_t i = 0; i < KI; ++i) grad_row[i] += grow[i] * scale;
                }
                return;
            }
            if (plan.kind == ReducePlan::B) {
                const int64_t RO = plan.outer, K = plan.mid, RI = plan.inner;
#pragma omp parallel for schedule(static)
                for (int64_t rok = 0; rok < RO * K; ++rok) {
                    const T gv = g[rok % K] * scale;
                    T* grad_row = gx + rok * RI;
                    for (int64_t ri = 0; ri < RI; ++ri) grad_row[ri] += gv;
                }
                return;
            }
#pragma omp parallel
            {
                std::vector<int64_t> counter(nr);
#pragma omp for schedule(static)
                for (int64_t o = 0; o < out_n; ++o) {
                    int64_t rem = o, base = 0;
                    int64_t stride_acc = out_n;
                    for (size_t a = 0; a < nk; ++a) {
                        stride_acc /= kept_dims[a];
                        const int64_t idx = rem / stride_acc;
                        rem -= idx * stride_acc;
                        base += idx * kept_strides[a];
                    }
                    const T gv = g[o] * scale;
                    std::fill(counter.begin(), counter.end(), 0);
                    do {
                        int64_t off = base;
                        for (size_t r = 0; r < nr; ++r) off += counter[r] * red_strides[r];
                        gx[off] += gv;
                    } while (advance(counter, red_dims));
                }
            }
        });
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    const int64_t n = x.numel();
    const T* px = x.ptr();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(px[i]);
    auto xi = x.impl();
    return make_result<T>(Shape{1}, {static_cast<T>(acc)}, {x}, [xi](TensorImpl<T>& self) {
        if (!xi->requires_grad) return;
        xi->ensure_grad();
        const T g = self.grad[0];
        T* gx = xi->grad.data();
        const int64_t m = xi->numel();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < m; ++i) gx[i] += g;
    });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
    const int64_t n = x.numel();
    const T* px = x.ptr();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(px[i]);
    acc /= static_cast<double>(n);
    auto xi = x.impl();
    const T scale = T(1) / static_cast<T>(n);
    return make_result<T>(Shape{1}, {static_cast<T>(acc)}, {x}, [xi, scale](TensorImpl<T>& self) {
        if (!xi->requires_grad) return;
        xi->ensure_grad();
        const T g = self.grad[0] * scale;
        T* gx = xi->grad.data();
        const int64_t m = xi->numel();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < m; ++i) gx[i] += g;
    });
}

#define VSEG_INSTANTIATE(T)                                                             \
    template Tensor<T> reduce(const Tensor<T>&, Reduce, const std::vector<int>&, bool); \
    template Tensor<T> sum_all(const Tensor<T>&);                                       \
    template Tensor<T> mean_all(const Tensor<T>&);

VSEG_INSTANTIATE(float)
VSEG_INSTANTIATE(double)
#undef VSEG_INSTANTIATE

}  // namespace vseg
