#include <cblas.h>

#include <algorithm>
#include <cstring>

#include "vseg/ops.hpp"

namespace vseg {

namespace {

inline void gemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k, float alpha, const float* a,
                 int64_t lda, const float* b, int64_t ldb, float beta, float* c, int64_t ldc) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
                static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
                static_cast<int>(lda), b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}
inline void gemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k, double alpha, const double* a,
                 int64_t lda, const double* b, int64_t ldb, double beta, double* c, int64_t ldc) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
                static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), alpha, a,
                static_cast<int>(lda), b, static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

struct ConvDims {
    int64_t N, Ci, D, H, W;
    int64_t Co, kd, kh, kw;
    int64_t sd, sh, sw;
    int64_t pd, ph, pw;
    int64_t Do, Ho, Wo;
};

// out[n,co,zo,yo,xo] (+)= bias[co] + sum_{ci,dz,dy,dx} w[...] * x[n,ci,zi,yi,xi]
// For stride 1 the x-taps are fused in one pass over the row: the interior
// range where every tap is valid runs branch-free, borders are patched per
// tap.
template <typename T, bool Accumulate>
void conv_forward(const ConvDims& d, const T* x, const T* w, const T* bias, T* out) {
    const int64_t tasks = d.N * d.Co * d.Do;
#pragma omp parallel
    {
        std::vector<T> acc(static_cast<size_t>(d.Wo));
#pragma omp for schedule(static)
        for (int64_t t = 0; t < tasks; ++t) {
            const int64_t n = t / (d.Co * d.Do);
            const int64_t co = (t / d.Do) % d.Co;
            const int64_t zo = t % d.Do;
            T* out_base = out + ((n * d.Co + co) * d.Do + zo) * d.Ho * d.Wo;
            for (int64_t yo = 0; yo < d.Ho; ++yo) {
                std::fill(acc.begin(), acc.end(), bias ? bias[co] : T(0));
                for (int64_t ci = 0; ci < d.Ci; ++ci) {
                    const T* xc = x + (n * d.Ci + ci) * d.D * d.H * d.W;
                    const T* wc = w + ((co * d.Ci + ci) * d.kd) * d.kh * d.kw;
                    for (int64_t dz = 0; dz < d.kd; ++dz) {
                        const int64_t zi = zo * d.sd + dz - d.pd;
                        if (zi < 0 || zi >= d.D) continue;
                        for (int64_t dy = 0; dy < d.kh; ++dy) {
                            const int64_t yi = yo * d.sh + dy - d.ph;
                            if (yi < 0 || yi >= d.H) continue;
                            const T* row = xc + (zi * d.H + yi) * d.W;
                            const T* wk = wc + (dz * d.kh + dy) * d.kw;
                            if (d.sw == 1) {
                                // interior: all taps valid for xo in [lo, hi)
                                int64_t lo = 0, hi = d.Wo;
                                for (int64_t dx = 0; dx < d.kw; ++dx) {
                                    lo = std::max(lo, d.pw - dx);
                                    hi = std::min(hi, d.W - dx + d.pw);
                                }
                                if (d.kw == 3) {
                                    const T w0 = wk[0], w1 = wk[1], w2 = wk[2];
                                    const T* r = row - d.pw;
                                    for (int64_t xo = lo; xo < hi; ++xo)
                                        acc[xo] += w0 * r[xo] + w1 * r[xo + 1] + w2 * r[xo + 2];
                                } else {
                                    const T* r = row - d.pw;
                                    for (int64_t xo = lo; xo < hi; ++xo) {
                                        T s = T(0);
                                        for (int64_t dx = 0; dx < d.kw; ++dx) s += wk[dx] * r[xo + dx];
                                        acc[xo] += s;
                                    }
                                }
                                // borders, per tap
                                for (int64_t dx = 0; dx < d.kw; ++dx) {
                                    const int64_t off = dx - d.pw;
                                    const int64_t t0 = std::max<int64_t>(0, -off);
                                    const int64_t t1 = std::min<int64_t>(d.Wo, d.W - off);
                                    const T wv = wk[dx];
                                    for (int64_t xo = t0; xo < std::min(lo, t1); ++xo)
                                        acc[xo] += wv * row[xo + off];
                                    for (int64_t xo = std::max(hi, t0); xo < t1; ++xo)
                                        acc[xo] += wv * row[xo + off];
                                }
                            } else {
                                for (int64_t dx = 0; dx < d.kw; ++dx) {
                                    const T wv = wk[dx];
                                    for (int64_t xo = 0; xo < d.Wo; ++xo) {
                                        const int64_t xi = xo * d.sw + dx - d.pw;
                                        if (xi >= 0 && xi < d.W) acc[xo] += wv * row[xi];
                                    }
                                }
                            }
                        }
                    }
                }
                T* dst = out_base + yo * d.Wo;
                if (Accumulate) {
                    for (int64_t i = 0; i < d.Wo; ++i) dst[i] += acc[i];
                } else {
                    std::memcpy(dst, acc.data(), static_cast<size_t>(d.Wo) * sizeof(T));
                }
            }
        }
    }
}

// gradient w.r.t. input via the equivalent transposed convolution: for unit
// stride, dx = conv(dout, w flipped with channel roles swapped) at padding
// k - 1 - p. Reuses the fused forward kernel.
template <typename T>
void conv_backward_input_s1(const ConvDims& d, const T* w, const T* gout, T* gx) {
    std::vector<T> wt(static_cast<size_t>(d.Ci * d.Co * d.kd * d.kh * d.kw));
    for (int64_t co = 0; co < d.Co; ++co)
        for (int64_t ci = 0; ci < d.Ci; ++ci)
            for (int64_t dz = 0; dz < d.kd; ++dz)
                for (int64_t dy = 0; dy < d.kh; ++dy)
                    for (int64_t dx = 0; dx < d.kw; ++dx) {
                        const int64_t src = ((((co * d.Ci + ci) * d.kd) + dz) * d.kh + dy) * d.kw + dx;
                        const int64_t dst =
                            ((((ci * d.Co + co) * d.kd) + d.kd - 1 - dz) * d.kh + d.kh - 1 - dy) *
                                d.kw +
                            d.kw - 1 - dx;
                        wt[static_cast<size_t>(dst)] = w[src];
                    }
    ConvDims t;
    t.N = d.N;
    t.Ci = d.Co;
    t.D = d.Do;
    t.H = d.Ho;
    t.W = d.Wo;
    t.Co = d.Ci;
    t.kd = d.kd;
    t.kh = d.kh;
    t.kw = d.kw;
    t.sd = t.sh = t.sw = 1;
    t.pd = d.kd - 1 - d.pd;
    t.ph = d.kh - 1 - d.ph;
    t.pw = d.kw - 1 - d.pw;
    t.Do = d.D;
    t.Ho = d.H;
    t.Wo = d.W;
    conv_forward<T, /*Accumulate=*/true>(t, gout, wt.data(), nullptr, gx);
}

// strided fallback: gather form, each input element owned by one thread
template <typename T>
void conv_backward_input_generic(const ConvDims& d, const T* w, const T* gout, T* gx) {
    const int64_t tasks = d.N * d.Ci * d.D;
#pragma omp parallel
    {
        std::vector<T> acc(static_cast<size_t>(d.W));
#pragma omp for schedule(static)
        for (int64_t t = 0; t < tasks; ++t) {
            const int64_t n = t / (d.Ci * d.D);
            const int64_t ci = (t / d.D) % d.Ci;
            const int64_t zi = t % d.D;
            for (int64_t yi = 0; yi < d.H; ++yi) {
                std::fill(acc.begin(), acc.end(), T(0));
                for (int64_t co = 0; co < d.Co; ++co) {
                    const T* gc = gout + (n * d.Co + co) * d.Do * d.Ho * d.Wo;
                    const T* wc = w + ((co * d.Ci + ci) * d.kd) * d.kh * d.kw;
                    for (int64_t dz = 0; dz < d.kd; ++dz) {
                        const int64_t zn = zi + d.pd - dz;
                        if (zn < 0 || zn % d.sd != 0) continue;
                        const int64_t zo = zn / d.sd;
                        if (zo >= d.Do) continue;
                        for (int64_t dy = 0; dy < d.kh; ++dy) {
                            const int64_t yn = yi + d.ph - dy;
                            if (yn < 0 || yn % d.sh != 0) continue;
                            const int64_t yo = yn / d.sh;
                            if (yo >= d.Ho) continue;
                            const T* grow = gc + (zo * d.Ho + yo) * d.Wo;
                            const T* wk = wc + (dz * d.kh + dy) * d.kw;
                            for (int64_t dx = 0; dx < d.kw; ++dx) {
                                const T wv = wk[dx];
                                for (int64_t xi = 0; xi < d.W; ++xi) {
                                    const int64_t xn = xi + d.pw - dx;
                                    if (xn >= 0 && xn % d.sw == 0 && xn / d.sw < d.Wo)
                                        acc[xi] += wv * grow[xn / d.sw];
                                }
                            }
                        }
                    }
                }
                T* dst = gx + ((n * d.Ci + ci) * d.D * d.H + zi * d.H + yi) * d.W;
                for (int64_t xi = 0; xi < d.W; ++xi) dst[xi] += acc[xi];
            }
        }
    }
}

// dw[co,ci,dz,dy,dx] += sum_{n,zo,yo,xo} gout * x. One pass over the output
// rows; for unit stride the kw tap-reductions share each gout row load. Each
// thread owns a co slice, so accumulation order is fixed.
template <typename T>
void conv_backward_weight(const ConvDims& d, const T* x, const T* gout, T* gw) {
    const int64_t kvol = d.kd * d.kh * d.kw;
#pragma omp parallel for schedule(static)
    for (int64_t co = 0; co < d.Co; ++co) {
        std::vector<double> acc(static_cast<size_t>(d.Ci * kvol), 0.0);
        for (int64_t n = 0; n < d.N; ++n) {
            const T* gc = gout + (n * d.Co + co) * d.Do * d.Ho * d.Wo;
            for (int64_t zo = 0; zo < d.Do; ++zo)
                for (int64_t yo = 0; yo < d.Ho; ++yo) {
                    const T* grow = gc + (zo * d.Ho + yo) * d.Wo;
                    for (int64_t ci = 0; ci < d.Ci; ++ci) {
                        const T* xc = x + (n * d.Ci + ci) * d.D * d.H * d.W;
                        double* acc_ci = acc.data() + ci * kvol;
                        for (int64_t dz = 0; dz < d.kd; ++dz) {
                            const int64_t zi = zo * d.sd + dz - d.pd;
                            if (zi < 0 || zi >= d.D) continue;
                            for (int64_t dy = 0; dy < d.kh; ++dy) {
                                const int64_t yi = yo * d.sh + dy - d.ph;
                                if (yi < 0 || yi >= d.H) continue;
                                const T* row = xc + (zi * d.H + yi) * d.W;
                                double* acc_k = acc_ci + (dz * d.kh + dy) * d.kw;
                                if (d.sw == 1 && d.kw == 3) {
                                    int64_t lo = 0, hi = d.Wo;
                                    for (int64_t dx = 0; dx < 3; ++dx) {
                                        lo = std::max(lo, d.pw - dx);
                                        hi = std::min(hi, d.W - dx + d.pw);
                                    }
                                    const T* r = row - d.pw;
                                    T s0 = T(0), s1 = T(0), s2 = T(0);
                                    for (int64_t xo = lo; xo < hi; ++xo) {
                                        const T g = grow[xo];
                                        s0 += g * r[xo];
                                        s1 += g * r[xo + 1];
                                        s2 += g * r[xo + 2];
                                    }
                                    acc_k[0] += static_cast<double>(s0);
                                    acc_k[1] += static_cast<double>(s1);
                                    acc_k[2] += static_cast<double>(s2);
                                    for (int64_t dx = 0; dx < 3; ++dx) {
                                        const int64_t off = dx - d.pw;
                                        const int64_t t0 = std::max<int64_t>(0, -off);
                                        const int64_t t1 = std::min<int64_t>(d.Wo, d.W - off);
                                        double s = 0.0;
                                        for (int64_t xo = t0; xo < std::min(lo, t1); ++xo)
                                            s += static_cast<double>(grow[xo]) * row[xo + off];
                                        for (int64_t xo = std::max(hi, t0); xo < t1; ++xo)
                                            s += static_cast<double>(grow[xo]) * row[xo + off];
                                        acc_k[dx] += s;
                                    }
                                } else {
                                    for (int64_t dx = 0; dx < d.kw; ++dx) {
                                        double s = 0.0;
                                        if (d.sw == 1) {
                                            const int64_t off = dx - d.pw;
                                            const int64_t t0 = std::max<int64_t>(0, -off);
                                            const int64_t t1 = std::min<int64_t>(d.Wo, d.W - off);
                                            const T* rp = row + off;
                                            for (int64_t xo = t0; xo < t1; ++xo)
                                                s += static_cast<double>(grow[xo]) * rp[xo];
                                        } else {
                                            for (int64_t xo = 0; xo < d.Wo; ++xo) {
                                                const int64_t xi = xo * d.sw + dx - d.pw;
                                                if (xi >= 0 && xi < d.W)
                                                    s += static_cast<double>(grow[xo]) * row[xi];
                                            }
                                        }
                                        acc_k[dx] += s;
                                    }
                                }
                            }
                        }
                    }
                }
        }
        T* gw_co = gw + co * d.Ci * kvol;
        for (int64_t i = 0; i < d.Ci * kvol; ++i)
            gw_co[i] += static_cast<T>(acc[static_cast<size_t>(i)]);
    }
}

}  // namespace

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 const std::array<int64_t, 3>& stride, const std::array<int64_t, 3>& pad) {
    if (x.ndim() != 5) throw ShapeError("conv3d: input must be 5-D, got " + shape_str(x.shape()));
    if (w.ndim() != 5) throw ShapeError("conv3d: weight must be 5-D, got " + shape_str(w.shape()));
    if (x.dim(1) != w.dim(1)) {
        throw ShapeError("conv3d: channel mismatch, input " + shape_str(x.shape()) + " vs weight " +
                         shape_str(w.shape()));
    }
    for (int i = 0; i < 3; ++i) {
        if (stride[static_cast<size_t>(i)] < 1) throw ConfigError("conv3d: stride must be >= 1");
        if (pad[static_cast<size_t>(i)] < 0) throw ConfigError("conv3d: negative padding");
    }
    ConvDims d;
    d.N = x.dim(0); d.Ci = x.dim(1); d.D = x.dim(2); d.H = x.dim(3); d.W = x.dim(4);
    d.Co = w.dim(0); d.kd = w.dim(2); d.kh = w.dim(3); d.kw = w.dim(4);
    d.sd = stride[0]; d.sh = stride[1]; d.sw = stride[2];
    d.pd = pad[0]; d.ph = pad[1]; d.pw = pad[2];
    d.Do = (d.D + 2 * d.pd - d.kd) / d.sd + 1;
    d.Ho = (d.H + 2 * d.ph - d.kh) / d.sh + 1;
    d.Wo = (d.W + 2 * d.pw - d.kw) / d.sw + 1;
    if (d.D + 2 * d.pd < d.kd || d.H + 2 * d.ph < d.kh || d.W + 2 * d.pw < d.kw || d.Do <= 0 ||
        d.Ho <= 0 || d.Wo <= 0) {
        throw ConfigError("conv3d: non-positive output extent for input " + shape_str(x.shape()) +
                          ", kernel " + shape_str(w.shape()));
    }
    if (bias.defined() && bias.numel() != d.Co) throw ShapeError("conv3d: bias size mismatch");

    const bool pointwise = d.kd == 1 && d.kh == 1 && d.kw == 1 && d.sd == 1 && d.sh == 1 &&
                           d.sw == 1 && d.pd == 0 && d.ph == 0 && d.pw == 0;

    std::vector<T> out(static_cast<size_t>(d.N * d.Co * d.Do * d.Ho * d.Wo));
    if (pointwise) {
        // pure channel mix: out[n] = W[Co,Ci] @ x[n][Ci, DHW]
        const int64_t sp = d.D * d.H * d.W;
        for (int64_t n = 0; n < d.N; ++n) {
            gemm(false, false, d.Co, sp, d.Ci, T(1), w.ptr(), d.Ci, x.ptr() + n * d.Ci * sp, sp,
                 T(0), out.data() + n * d.Co * sp, sp);
        }
        if (bias.defined()) {
            const T* pb = bias.ptr();
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < d.N * d.Co; ++i) {
                const T b = pb[i % d.Co];
                T* dst = out.data() + i * sp;
                for (int64_t s = 0; s < sp; ++s) dst[s] += b;
            }
        }
    } else {
        conv_forward<T, false>(d, x.ptr(), w.ptr(), bias.defined() ? bias.ptr() : nullptr,
                               out.data());
    }

    auto xi = x.impl();
    auto wi = w.impl();
    auto bi = bias.defined() ? bias.impl() : nullptr;
    std::vector<Tensor<T>> inputs{x, w};
    if (bias.defined()) inputs.push_back(bias);

    return make_result<T>(
        Shape{d.N, d.Co, d.Do, d.Ho, d.Wo}, std::move(out), inputs,
        [xi, wi, bi, d, pointwise](TensorImpl<T>& self) {
            const T* g = self.grad.data();
            const int64_t sp = d.D * d.H * d.W;
            if (xi->requires_grad) {
                xi->ensure_grad();
                if (pointwise) {
                    for (int64_t n = 0; n < d.N; ++n)
                        gemm(true, false, d.Ci, sp, d.Co, T(1), wi->data.data(), d.Ci, g + n * d.Co * sp,
                             sp, T(1), xi->grad.data() + n * d.Ci * sp, sp);
                } else if (d.sd == 1 && d.sh == 1 && d.sw == 1) {
                    conv_backward_input_s1(d, wi->data.data(), g, xi->grad.data());
                } else {
                    conv_backward_input_generic(d, wi->data.data(), g, xi->grad.data());
                }
            }
            if (wi->requires_grad) {
                wi->ensure_grad();
                if (pointwise) {
                    for (int64_t n = 0; n < d.N; ++n)
                        gemm(false, true, d.Co, d.Ci, sp, T(1), g + n * d.Co * sp, sp,
                             xi->data.data() + n * d.Ci * sp, sp, T(1), wi->grad.data(), d.Ci);
                } else {
                    conv_backward_weight(d, xi->data.data(), g, wi->grad.data());
                }
            }
            if (bi && bi->requires_grad) {
                bi->ensure_grad();
                const int64_t osp = d.Do * d.Ho * d.Wo;
#pragma omp parallel for schedule(static)
                for (int64_t co = 0; co < d.Co; ++co) {
                    double s = 0.0;
                    for (int64_t n = 0; n < d.N; ++n) {
                        const T* gc = g + (n * d.Co + co) * osp;
                        for (int64_t i = 0; i < osp; ++i) s += static_cast<double>(gc[i]);
                    }
                    bi->grad[static_cast<size_t>(co)] += static_cast<T>(s);
                }
            }
        });
}

template Tensor<float> conv3d(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                              const std::array<int64_t, 3>&, const std::array<int64_t, 3>&);
template Tensor<double> conv3d(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                               const std::array<int64_t, 3>&, const std::array<int64_t, 3>&);

}  // namespace vseg
