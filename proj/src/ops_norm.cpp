#include <cmath>

#include "vseg/ops.hpp"

namespace vseg {

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
    const int nd = x.ndim();
    if (axis < 0 || axis >= nd) throw ShapeError("softmax: bad axis " + std::to_string(axis));
    int64_t outer = 1, inner = 1;
    const int64_t n = x.shape()[static_cast<size_t>(axis)];
    for (int i = 0; i < axis; ++i) outer *= x.shape()[static_cast<size_t>(i)];
    for (int i = axis + 1; i < nd; ++i) inner *= x.shape()[static_cast<size_t>(i)];

    std::vector<T> out(static_cast<size_t>(x.numel()));
    const T* px = x.ptr();
    const int64_t fibers = outer * inner;
#pragma omp parallel for schedule(static)
    for (int64_t f = 0; f < fibers; ++f) {
        const int64_t o = f / inner, in = f % inner;
        const int64_t base = o * n * inner + in;
        T mx = px[base];
        for (int64_t j = 1; j < n; ++j) mx = std::max(mx, px[base + j * inner]);
        double denom = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            const T e = std::exp(px[base + j * inner] - mx);
            out[static_cast<size_t>(base + j * inner)] = e;
            denom += static_cast<double>(e);
        }
        const T inv = static_cast<T>(1.0 / denom);
        for (int64_t j = 0; j < n; ++j) out[static_cast<size_t>(base + j * inner)] *= inv;
    }

    auto xi = x.impl();
    return make_result<T>(x.shape(), std::move(out), {x},
                          [xi, n, inner, fibers](TensorImpl<T>& self) {
                              if (!xi->requires_grad) return;
                              xi->ensure_grad();
                              const T* g = self.grad.data();
                              const T* y = self.data.data();
                              T* gx = xi->grad.data();
#pragma omp parallel for schedule(static)
                              for (int64_t f = 0; f < fibers; ++f) {
                                  const int64_t o = f / inner, in = f % inner;
                                  const int64_t base = o * n * inner + in;
                                  double dot = 0.0;
                                  for (int64_t j = 0; j < n; ++j) {
                                      const int64_t k = base + j * inner;
                                      dot += static_cast<double>(g[k]) * static_cast<double>(y[k]);
                                  }
                                  for (int64_t j = 0; j < n; ++j) {
                                      const int64_t k = base + j * inner;
                                      gx[k] += y[k] * (g[k] - static_cast<T>(dot));
                                  }
                              }
                          });
}

template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, int64_t groups, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps) {
    if (x.ndim() != 5) throw ShapeError("group_norm: expected 5-D input, got " + shape_str(x.shape()));
    const int64_t N = x.dim(0), C = x.dim(1);
    const int64_t spatial = x.dim(2) * x.dim(3) * x.dim(4);
    if (groups <= 0 || C % groups != 0) {
        throw ConfigError("group_norm: groups " + std::to_string(groups) +
                          " must divide channels " + std::to_string(C));
    }
    if (gamma.numel() != C || beta.numel() != C) throw ShapeError("group_norm: affine size mismatch");
    const int64_t cg = C / groups;        // channels per group
    const int64_t m = cg * spatial;       // elements per (n, group)

    std::vector<T> out(static_cast<size_t>(x.numel()));
    std::vector<T> mean_buf(static_cast<size_t>(N * groups));
    std::vector<T> inv_std_buf(static_cast<size_t>(N * groups));
    const T* px = x.ptr();
    const T* pg = gamma.ptr();
    const T* pb = beta.ptr();

#pragma omp parallel for schedule(static)
    for (int64_t ng = 0; ng < N * groups; ++ng) {
        const int64_t nIdx = ng / groups, gIdx = ng % groups;
        const int64_t base = (nIdx * C + gIdx * cg) * spatial;
        double sum = 0.0;
        for (int64_t i = 0; i < m; ++i) sum += static_cast<double>(px[base + i]);
        const double mu = sum / static_cast<double>(m);
        double var = 0.0;
        for (int64_t i = 0; i < m; ++i) {
            const double d = static_cast<double>(px[base + i]) - mu;
            var += d * d;
        }
        var /= static_cast<double>(m);
        const double inv_std = 1.0 / std::sqrt(var + static_cast<double>(eps));
        mean_buf[static_cast<size_t>(ng)] = static_cast<T>(mu);
        inv_std_buf[static_cast<size_t>(ng)] = static_cast<T>(inv_std);
        for (int64_t c = 0; c < cg; ++c) {
            const T gam = pg[gIdx * cg + c];
            const T bet = pb[gIdx * cg + c];
            const int64_t off = base + c * spatial;
            for (int64_t s = 0; s < spatial; ++s) {
                const T xhat = static_cast<T>((static_cast<double>(px[off + s]) - mu) * inv_std);
                out[static_cast<size_t>(off + s)] = xhat * gam + bet;
            }
        }
    }

    auto xi = x.impl();
    auto gi = gamma.impl();
    auto bi = beta.impl();
    return make_result<T>(
        x.shape(), std::move(out), {x, gamma, beta},
        [xi, gi, bi, mean_buf, inv_std_buf, N, C, groups, cg, spatial, m](TensorImpl<T>& self) {
            const T* g = self.grad.data();
            const T* px2 = xi->data.data();
            const T* pg2 = gi->data.data();
            if (xi->requires_grad) {
                xi->ensure_grad();
                T* gx = xi->grad.data();
#pragma omp parallel for schedule(static)
                for (int64_t ng = 0; ng < N * groups; ++ng) {
                    const int64_t nIdx = ng / groups, gIdx = ng % groups;
                    const int64_t base = (nIdx * C + gIdx * cg) * spatial;
                    const double mu = static_cast<double>(mean_buf[static_cast<size_t>(ng)]);
                    const double is = static_cast<double>(inv_std_buf[static_cast<size_t>(ng)]);
                    double sum_dy = 0.0, sum_dy_xhat = 0.0;
                    for (int64_t c = 0; c < cg; ++c) {
                        const double gam = static_cast<double>(pg2[gIdx * cg + c]);
                        const int64_t off = base + c * spatial;
                        for (int64_t s = 0; s < spatial; ++s) {
                            const double dy = static_cast<double>(g[off + s]) * gam;
                            const double xhat = (static_cast<double>(px2[off + s]) - mu) * is;
                            sum_dy += dy;
                            sum_dy_xhat += dy * xhat;
                        }
                    }
                    const double inv_m = 1.0 / static_cast<double>(m);
                    for (int64_t c = 0; c < cg; ++c) {
                        const double gam = static_cast<double>(pg2[gIdx * cg + c]);
                        const int64_t off = base + c * spatial;
                        for (int64_t s = 0; s < spatial; ++s) {
                            const double dy = static_cast<double>(g[off + s]) * gam;
                            const double xhat = (static_cast<double>(px2[off + s]) - mu) * is;
                            gx[off + s] += static_cast<T>(
                                is * (dy - sum_dy * inv_m - xhat * sum_dy_xhat * inv_m));
                        }
                    }
                }
            }
            if (gi->requires_grad || bi->requires_grad) {
                if (gi->requires_grad) gi->ensure_grad();
                if (bi->requires_grad) bi->ensure_grad();
#pragma omp parallel for schedule(static)
                for (int64_t c = 0; c < C; ++c) {
                    const int64_t gIdx = c / cg;
                    double dgam = 0.0, dbet = 0.0;
                    for (int64_t nIdx = 0; nIdx < N; ++nIdx) {
                        const int64_t ng = nIdx * groups + gIdx;
                        const double mu = static_cast<double>(mean_buf[static_cast<size_t>(ng)]);
                        const double is = static_cast<double>(inv_std_buf[static_cast<size_t>(ng)]);
                        const int64_t off = (nIdx * C + c) * spatial;
                        for (int64_t s = 0; s < spatial; ++s) {
                            const double dy = static_cast<double>(g[off + s]);
                            const double xhat = (static_cast<double>(px2[off + s]) - mu) * is;
                            dgam += dy * xhat;
                            dbet += dy;
                        }
                    }
                    if (gi->requires_grad) gi->grad[static_cast<size_t>(c)] += static_cast<T>(dgam);
                    if (bi->requires_grad) bi->grad[static_cast<size_t>(c)] += static_cast<T>(dbet);
                }
            }
        });
}

#define VSEG_INSTANTIATE(T)                              \
    template Tensor<T> softmax(const Tensor<T>&, int);   \
    template Tensor<T> group_norm(const Tensor<T>&, int64_t, const Tensor<T>&, const Tensor<T>&, T);

VSEG_INSTANTIATE(float)
VSEG_INSTANTIATE(double)
#undef VSEG_INSTANTIATE

}  // namespace vseg
