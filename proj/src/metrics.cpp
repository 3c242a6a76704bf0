#include "vseg/metrics.hpp"

#include <cmath>
#include <limits>

namespace vseg {

double dsc(const LabelVolume& pred, const LabelVolume& gt) {
    if (pred.dims != gt.dims) {
        throw ShapeError("dsc: dims mismatch (" + std::to_string(pred.dims[0]) + "," +
                         std::to_string(pred.dims[1]) + "," + std::to_string(pred.dims[2]) +
                         ") vs (" + std::to_string(gt.dims[0]) + "," + std::to_string(gt.dims[1]) +
                         "," + std::to_string(gt.dims[2]) + ")");
    }
    int64_t inter = 0, np = 0, ng = 0;
    for (size_t i = 0; i < pred.labels.size(); ++i) {
        const bool p = pred.labels[i] != 0;
        const bool g = gt.labels[i] != 0;
        inter += p && g;
        np += p;
        ng += g;
    }
    if (np + ng == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

std::vector<std::array<int64_t, 3>> surface_voxels(const LabelVolume& mask) {
    std::vector<std::array<int64_t, 3>> out;
    const auto& d = mask.dims;
    for (int64_t z = 0; z < d[0]; ++z)
        for (int64_t y = 0; y < d[1]; ++y)
            for (int64_t x = 0; x < d[2]; ++x) {
                if (!mask.at(z, y, x)) continue;
                const bool boundary =
                    z == 0 || !mask.at(z - 1, y, x) || z == d[0] - 1 || !mask.at(z + 1, y, x) ||
                    y == 0 || !mask.at(z, y - 1, x) || y == d[1] - 1 || !mask.at(z, y + 1, x) ||
                    x == 0 || !mask.at(z, y, x - 1) || x == d[2] - 1 || !mask.at(z, y, x + 1);
                if (boundary) out.push_back({z, y, x});
            }
    return out;
}

namespace {

// Felzenszwalb-Huttenlocher 1-D squared distance transform with weight w
// (spacing^2): out[q] = min_p (f[p] + w * (q - p)^2). Infinite entries are
// never candidate parabolas; a line with no finite entry stays infinite.
void dt_1d(const double* f, double* out, int64_t n, double w, int64_t* v, double* z) {
    const double kInf = std::numeric_limits<double>::infinity();
    auto sep = [&](int64_t q, int64_t p) {
        return ((f[q] + w * static_cast<double>(q) * static_cast<double>(q)) -
                (f[p] + w * static_cast<double>(p) * static_cast<double>(p))) /
               (2.0 * w * static_cast<double>(q - p));
    };
    int64_t k = -1;
    for (int64_t q = 0; q < n; ++q) {
        if (f[q] == kInf) continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        double s = sep(q, v[k]);
        while (s <= z[k]) {
            --k;  // z[0] = -inf guarantees k stays >= 0
            s = sep(q, v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    if (k < 0) {
        for (int64_t q = 0; q < n; ++q) out[q] = kInf;
        return;
    }
    k = 0;
    for (int64_t q = 0; q < n; ++q) {
        while (z[k + 1] < static_cast<double>(q)) ++k;
        const int64_t p = v[k];
        out[q] = f[p] + w * static_cast<double>(q - p) * static_cast<double>(q - p);
    }
}

}  // namespace

std::vector<double> squared_edt(const std::array<int64_t, 3>& dims,
                                const std::array<float, 3>& spacing,
                                const std::vector<std::array<int64_t, 3>>& sources) {
    const int64_t D = dims[0], H = dims[1], W = dims[2];
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(static_cast<size_t>(D * H * W), inf);
    for (const auto& s : sources) dist[static_cast<size_t>((s[0] * H + s[1]) * W + s[2])] = 0.0;

    const int64_t maxn = std::max({D, H, W});
    std::vector<double> f(static_cast<size_t>(maxn)), g(static_cast<size_t>(maxn));
    std::vector<int64_t> v(static_cast<size_t>(maxn));
    std::vector<double> z(static_cast<size_t>(maxn + 1));

    // x, then y, then z passes
    const double wx = static_cast<double>(spacing[2]) * spacing[2];
    for (int64_t zz = 0; zz < D; ++zz)
        for (int64_t y = 0; y < H; ++y) {
            double* row = dist.data() + (zz * H + y) * W;
            dt_1d(row, g.data(), W, wx, v.data(), z.data());
            std::copy(g.begin(), g.begin() + W, row);
        }
    const double wy = static_cast<double>(spacing[1]) * spacing[1];
    for (int64_t zz = 0; zz < D; ++zz)
        for (int64_t x = 0; x < W; ++x) {
            for (int64_t y = 0; y < H; ++y) f[static_cast<size_t>(y)] = dist[static_cast<size_t>((zz * H + y) * W + x)];
            dt_1d(f.data(), g.data(), H, wy, v.data(), z.data());
            for (int64_t y = 0; y < H; ++y) dist[static_cast<size_t>((zz * H + y) * W + x)] = g[static_cast<size_t>(y)];
        }
    const double wz = static_cast<double>(spacing[0]) * spacing[0];
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
            for (int64_t zz = 0; zz < D; ++zz) f[static_cast<size_t>(zz)] = dist[static_cast<size_t>((zz * H + y) * W + x)];
            dt_1d(f.data(), g.data(), D, wz, v.data(), z.data());
            for (int64_t zz = 0; zz < D; ++zz) dist[static_cast<size_t>((zz * H + y) * W + x)] = g[static_cast<size_t>(zz)];
        }
    return dist;
}

double assd(const LabelVolume& pred, const LabelVolume& gt) {
    if (pred.dims != gt.dims) throw ShapeError("assd: dims mismatch");
    if (pred.spacing != gt.spacing) throw ShapeError("assd: spacing mismatch");
    const auto sp = surface_voxels(pred);
    const auto sg = surface_voxels(gt);
    if (sp.empty() || sg.empty()) {
        throw UndefinedMetricError("assd undefined: " +
                                   std::string(sp.empty() ? "prediction" : "ground truth") +
                                   " mask is empty");
    }
    const int64_t H = pred.dims[1], W = pred.dims[2];
    const auto to_g = squared_edt(pred.dims, pred.spacing, sg);
    const auto to_p = squared_edt(pred.dims, pred.spacing, sp);
    // separate directed accumulators keep assd(a,b) == assd(b,a) bitwise
    double pred_to_gt = 0.0, gt_to_pred = 0.0;
    for (const auto& p : sp)
        pred_to_gt += std::sqrt(to_g[static_cast<size_t>((p[0] * H + p[1]) * W + p[2])]);
    for (const auto& g : sg)
        gt_to_pred += std::sqrt(to_p[static_cast<size_t>((g[0] * H + g[1]) * W + g[2])]);
    return (pred_to_gt + gt_to_pred) / static_cast<double>(sp.size() + sg.size());
}

MetricResult evaluate_masks(const LabelVolume& pred, const LabelVolume& gt) {
    MetricResult r;
    r.dsc = dsc(pred, gt);
    r.n_pred_surface = static_cast<int64_t>(surface_voxels(pred).size());
    r.n_gt_surface = static_cast<int64_t>(surface_voxels(gt).size());
    r.assd_mm = assd(pred, gt);
    return r;
}

}  // namespace vseg
