#include <cmath>

#include "vseg/ops.hpp"

namespace vseg {

namespace {

struct AxisMap {
    // per output index: two source taps with weights (i0 == i1 at clamped edges)
    std::vector<int64_t> i0, i1;
    std::vector<double> w0;
};

// align-corners-false sampling positions
AxisMap make_axis_map(int64_t in, int64_t out) {
    AxisMap m;
    m.i0.resize(static_cast<size_t>(out));
    m.i1.resize(static_cast<size_t>(out));
    m.w0.resize(static_cast<size_t>(out));
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (int64_t o = 0; o < out; ++o) {
        const double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
        const double fl = std::floor(src);
        double f = src - fl;
        int64_t i0 = static_cast<int64_t>(fl);
        int64_t i1 = i0 + 1;
        if (i0 < 0) { i0 = 0; i1 = 0; f = 0.0; }
        if (i1 > in - 1) { i1 = in - 1; if (i0 > in - 1) { i0 = in - 1; f = 0.0; } }
        m.i0[static_cast<size_t>(o)] = i0;
        m.i1[static_cast<size_t>(o)] = i1;
        m.w0[static_cast<size_t>(o)] = 1.0 - f;
    }
    return m;
}

// inverse map: for each input index, the (output, weight) pairs that read it
std::vector<std::vector<std::pair<int64_t, double>>> invert_axis_map(const AxisMap& m, int64_t in) {
    std::vector<std::vector<std::pair<int64_t, double>>> inv(static_cast<size_t>(in));
    for (int64_t o = 0; o < static_cast<int64_t>(m.i0.size()); ++o) {
        const double w0 = m.w0[static_cast<size_t>(o)];
        const int64_t i0 = m.i0[static_cast<size_t>(o)];
        const int64_t i1 = m.i1[static_cast<size_t>(o)];
        if (i0 == i1) {
            inv[static_cast<size_t>(i0)].emplace_back(o, 1.0);
        } else {
            if (w0 != 0.0) inv[static_cast<size_t>(i0)].emplace_back(o, w0);
            if (w0 != 1.0) inv[static_cast<size_t>(i1)].emplace_back(o, 1.0 - w0);
        }
    }
    return inv;
}

}  // namespace

template <typename T>
Tensor<T> interp3d(const Tensor<T>& x, int64_t out_d, int64_t out_h, int64_t out_w) {
    if (x.ndim() != 5) throw ShapeError("interp3d: expected 5-D input, got " + shape_str(x.shape()));
    if (out_d < 1 || out_h < 1 || out_w < 1) throw ConfigError("interp3d: non-positive output size");
    const int64_t N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    const AxisMap mz = make_axis_map(D, out_d);
    const AxisMap my = make_axis_map(H, out_h);
    const AxisMap mx = make_axis_map(W, out_w);

    std::vector<T> out(static_cast<size_t>(N * C * out_d * out_h * out_w));
    const T* px = x.ptr();
    const int64_t planes = N * C;
#pragma omp parallel for schedule(static)
    for (int64_t pz = 0; pz < planes * out_d; ++pz) {
        const int64_t p = pz / out_d;
        const int64_t zo = pz % out_d;
        const T* src = px + p * D * H * W;
        T* dst = out.data() + (p * out_d + zo) * out_h * out_w;
        const int64_t z0 = mz.i0[static_cast<size_t>(zo)], z1 = mz.i1[static_cast<size_t>(zo)];
        const double wz0 = mz.w0[static_cast<size_t>(zo)], wz1 = 1.0 - wz0;
        for (int64_t yo = 0; yo < out_h; ++yo) {
            const int64_t y0 = my.i0[static_cast<size_t>(yo)], y1 = my.i1[static_cast<size_t>(yo)];
            const double wy0 = my.w0[static_cast<size_t>(yo)], wy1 = 1.0 - wy0;
            const T* r00 = src + (z0 * H + y0) * W;
            const T* r01 = src + (z0 * H + y1) * W;
            const T* r10 = src + (z1 * H + y0) * W;
            const T* r11 = src + (z1 * H + y1) * W;
            for (int64_t xo = 0; xo < out_w; ++xo) {
                const int64_t x0 = mx.i0[static_cast<size_t>(xo)], x1 = mx.i1[static_cast<size_t>(xo)];
                const double wx0 = mx.w0[static_cast<size_t>(xo)], wx1 = 1.0 - wx0;
                const double v =
                    wz0 * (wy0 * (wx0 * r00[x0] + wx1 * r00[x1]) + wy1 * (wx0 * r01[x0] + wx1 * r01[x1])) +
                    wz1 * (wy0 * (wx0 * r10[x0] + wx1 * r10[x1]) + wy1 * (wx0 * r11[x0] + wx1 * r11[x1]));
                dst[yo * out_w + xo] = static_cast<T>(v);
            }
        }
    }

    auto xi = x.impl();
    return make_result<T>(
        Shape{N, C, out_d, out_h, out_w}, std::move(out), {x},
        [xi, mz, my, mx, N, C, D, H, W, out_d, out_h, out_w](TensorImpl<T>& self) {
            if (!xi->requires_grad) return;
            xi->ensure_grad();
            const auto iz = invert_axis_map(mz, D);
            const auto iy = invert_axis_map(my, H);
            const auto ix = invert_axis_map(mx, W);
            const T* g = self.grad.data();
            T* gx = xi->grad.data();
            const int64_t planes = N * C;
#pragma omp parallel for schedule(static)
            for (int64_t pz = 0; pz < planes * D; ++pz) {
                const int64_t p = pz / D;
                const int64_t zi = pz % D;
                const T* gsrc = g + p * out_d * out_h * out_w;
                T* gdst = gx + (p * D + zi) * H * W;
                for (int64_t yi = 0; yi < H; ++yi) {
                    for (int64_t xiw = 0; xiw < W; ++xiw) {
                        double acc = 0.0;
                        for (const auto& [zo, wz] : iz[static_cast<size_t>(zi)])
                            for (const auto& [yo, wy] : iy[static_cast<size_t>(yi)])
                                for (const auto& [xo, wx] : ix[static_cast<size_t>(xiw)])
                                    acc += wz * wy * wx *
                                           static_cast<double>(gsrc[(zo * out_h + yo) * out_w + xo]);
                        gdst[yi * W + xiw] += static_cast<T>(acc);
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> upsample(const Tensor<T>& x, int64_t factor, Resize mode) {
    if (x.ndim() != 5) throw ShapeError("upsample: expected 5-D input, got " + shape_str(x.shape()));
    if (factor < 1) throw ConfigError("upsample: factor must be >= 1, got " + std::to_string(factor));
    if (factor == 1) return x;
    const int64_t N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    const int64_t Do = D * factor, Ho = H * factor, Wo = W * factor;
    if (mode == Resize::Trilinear) return interp3d(x, Do, Ho, Wo);

    // nearest: replicate each voxel into a factor^3 block
    std::vector<T> out(static_cast<size_t>(N * C * Do * Ho * Wo));
    const T* px = x.ptr();
    const int64_t planes = N * C;
#pragma omp parallel for schedule(static)
    for (int64_t pz = 0; pz < planes * Do; ++pz) {
        const int64_t p = pz / Do;
        const int64_t zo = pz % Do;
        const T* src = px + (p * D + zo / factor) * H * W;
        T* dst = out.data() + (p * Do + zo) * Ho * Wo;
        for (int64_t yo = 0; yo < Ho; ++yo) {
            const T* row = src + (yo / factor) * W;
            for (int64_t xo = 0; xo < Wo; ++xo) dst[yo * Wo + xo] = row[xo / factor];
        }
    }
    auto xi = x.impl();
    return make_result<T>(Shape{N, C, Do, Ho, Wo}, std::move(out), {x},
                          [xi, factor, N, C, D, H, W, Do, Ho, Wo](TensorImpl<T>& self) {
                              if (!xi->requires_grad) return;
                              xi->ensure_grad();
                              const T* g = self.grad.data();
                              T* gx = xi->grad.data();
                              const int64_t planes = N * C;
#pragma omp parallel for schedule(static)
                              for (int64_t pz = 0; pz < planes * D; ++pz) {
                                  const int64_t p = pz / D;
                                  const int64_t zi = pz % D;
                                  const T* gsrc = g + p * Do * Ho * Wo;
                                  T* gdst = gx + (p * D + zi) * H * W;
                                  for (int64_t yi = 0; yi < H; ++yi)
                                      for (int64_t xiw = 0; xiw < W; ++xiw) {
                                          double acc = 0.0;
                                          for (int64_t fz = 0; fz < factor; ++fz)
                                              for (int64_t fy = 0; fy < factor; ++fy)
                                                  for (int64_t fx = 0; fx < factor; ++fx)
                                                      acc += static_cast<double>(
                                                          gsrc[((zi * factor + fz) * Ho +
                                                                yi * factor + fy) * Wo +
                                                               xiw * factor + fx]);
                                          gdst[yi * W + xiw] += static_cast<T>(acc);
                                      }
                              }
                          });
}

#define VSEG_INSTANTIATE(T)                                                     \
    template Tensor<T> interp3d(const Tensor<T>&, int64_t, int64_t, int64_t);   \
    template Tensor<T> upsample(const Tensor<T>&, int64_t, Resize);

VSEG_INSTANTIATE(float)
VSEG_INSTANTIATE(double)
#undef VSEG_INSTANTIATE

}  // namespace vseg
