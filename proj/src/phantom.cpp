#include "vseg/phantom.hpp"

#include <cmath>
#include <deque>

namespace vseg {

namespace {

struct Vec3 {
    double z, y, x;
    Vec3 operator+(const Vec3& o) const { return {z + o.z, y + o.y, x + o.x}; }
    Vec3 operator*(double s) const { return {z * s, y * s, x * s}; }
    double norm() const { return std::sqrt(z * z + y * y + x * x); }
    Vec3 unit() const {
        const double n = norm();
        return n > 1e-12 ? Vec3{z / n, y / n, x / n} : Vec3{1, 0, 0};
    }
};

Vec3 random_unit(Rng& rng) {
    // rejection-free: normalize a Gaussian triple
    return Vec3{rng.normal(), rng.normal(), rng.normal()}.unit();
}

// any unit vector orthogonal to d
Vec3 orthogonal(const Vec3& d, Rng& rng) {
    const Vec3 r = random_unit(rng);
    const double dot = r.z * d.z + r.y * d.y + r.x * d.x;
    Vec3 o{r.z - dot * d.z, r.y - dot * d.y, r.x - dot * d.x};
    if (o.norm() < 1e-6) o = Vec3{d.y, -d.z, 0};
    return o.unit();
}

void stamp_ball(LabelVolume& lbl, const Vec3& c, double r) {
    const double r2 = r * r;
    const int64_t z0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(c.z - r)));
    const int64_t z1 = std::min<int64_t>(lbl.dims[0] - 1, static_cast<int64_t>(std::ceil(c.z + r)));
    const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(c.y - r)));
    const int64_t y1 = std::min<int64_t>(lbl.dims[1] - 1, static_cast<int64_t>(std::ceil(c.y + r)));
    const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(c.x - r)));
    const int64_t x1 = std::min<int64_t>(lbl.dims[2] - 1, static_cast<int64_t>(std::ceil(c.x + r)));
    for (int64_t z = z0; z <= z1; ++z)
        for (int64_t y = y0; y <= y1; ++y)
            for (int64_t x = x0; x <= x1; ++x) {
                const double dz = static_cast<double>(z) - c.z;
                const double dy = static_cast<double>(y) - c.y;
                const double dx = static_cast<double>(x) - c.x;
                if (dz * dz + dy * dy + dx * dx <= r2) lbl.at(z, y, x) = 1;
            }
}

struct BranchTask {
    Vec3 pos, dir;
    double radius;
    int64_t depth;
};

}  // namespace

std::pair<Volume, LabelVolume> generate_phantom(const PhantomSpec& spec) {
    for (int64_t d : spec.dims) {
        if (d < 32) {
            throw ConfigError("phantom dims must be >= 32 per axis, got " + std::to_string(d));
        }
    }
    if (spec.radius_root < 1.0) {
        throw ConfigError("radius_root must be >= 1 voxel, got " + std::to_string(spec.radius_root));
    }
    if (spec.vessel_contrast < 0.0 || spec.noise_sigma < 0.0 || spec.background_texture < 0.0) {
        throw ConfigError("phantom intensity parameters must be non-negative");
    }
    if (spec.num_trees < 1 || spec.branch_depth < 0) {
        throw ConfigError("phantom needs num_trees >= 1 and branch_depth >= 0");
    }

    Rng rng(spec.seed);
    LabelVolume lbl;
    lbl.dims = spec.dims;
    lbl.spacing = spec.spacing;
    lbl.labels.assign(static_cast<size_t>(lbl.numel()), 0);

    const double min_dim = static_cast<double>(std::min({spec.dims[0], spec.dims[1], spec.dims[2]}));
    const double margin = spec.radius_root + 2.0;

    // centerline trees: depth-first so the rasterization order is fixed
    std::deque<BranchTask> tasks;
    for (int64_t t = 0; t < spec.num_trees; ++t) {
        BranchTask root;
        root.pos = {rng.uniform(margin, spec.dims[0] - margin),
                    rng.uniform(margin, spec.dims[1] - margin),
                    rng.uniform(margin, spec.dims[2] - margin)};
        root.dir = random_unit(rng);
        root.radius = spec.radius_root;
        root.depth = 0;
        tasks.push_back(root);
    }
    while (!tasks.empty()) {
        BranchTask b = tasks.front();
        tasks.pop_front();
        const int64_t steps = static_cast<int64_t>(rng.uniform(0.25, 0.45) * min_dim);
        Vec3 pos = b.pos, dir = b.dir;
        for (int64_t s = 0; s < steps; ++s) {
            stamp_ball(lbl, pos, b.radius);
            const Vec3 jitter = {rng.normal() * spec.tortuosity * 0.5,
                                 rng.normal() * spec.tortuosity * 0.5,
                                 rng.normal() * spec.tortuosity * 0.5};
            dir = (dir + jitter).unit();
            Vec3 next = pos + dir;
            // reflect off the walls so trees stay inside the grid
            if (next.z < margin || next.z > spec.dims[0] - margin) dir.z = -dir.z;
            if (next.y < margin || next.y > spec.dims[1] - margin) dir.y = -dir.y;
            if (next.x < margin || next.x > spec.dims[2] - margin) dir.x = -dir.x;
            pos = pos + dir;
        }
        stamp_ball(lbl, pos, b.radius);
        if (b.depth < spec.branch_depth) {
            const double angle = rng.uniform(0.35, 0.9);  // radians off the parent axis
            const Vec3 axis = orthogonal(dir, rng);
            for (int child = 0; child < 2; ++child) {
                const double sign = child == 0 ? 1.0 : -1.0;
                Vec3 cdir = (dir * std::cos(angle) + axis * (sign * std::sin(angle))).unit();
                tasks.push_back({pos, cdir, b.radius * spec.radius_decay, b.depth + 1});
            }
        }
    }

    // intensity: low-frequency background texture + vessel contrast + noise
    Volume img;
    img.dims = spec.dims;
    img.spacing = spec.spacing;
    img.voxels.assign(static_cast<size_t>(img.numel()), 0.f);

    struct Wave {
        double kz, ky, kx, phase;
    };
    std::vector<Wave> waves;
    for (int w = 0; w < 3; ++w) {
        const double period = rng.uniform(16.0, 48.0);
        const Vec3 k = random_unit(rng) * (2.0 * M_PI / period);
        waves.push_back({k.z, k.y, k.x, rng.uniform(0.0, 2.0 * M_PI)});
    }

    size_t idx = 0;
    for (int64_t z = 0; z < spec.dims[0]; ++z)
        for (int64_t y = 0; y < spec.dims[1]; ++y)
            for (int64_t x = 0; x < spec.dims[2]; ++x, ++idx) {
                double v = 0.30;
                for (const auto& w : waves) {
                    v += (spec.background_texture / 3.0) *
                         std::cos(w.kz * z + w.ky * y + w.kx * x + w.phase);
                }
                if (lbl.labels[idx]) v += spec.vessel_contrast;
                v += rng.normal(0.0, spec.noise_sigma);
                img.voxels[idx] = static_cast<float>(std::min(1.0, std::max(0.0, v)));
            }

    return {std::move(img), std::move(lbl)};
}

std::array<int64_t, 3> draw_crop_offset(const std::array<int64_t, 3>& dims,
                                        const std::array<int64_t, 3>& crop, Rng& rng) {
    std::array<int64_t, 3> off{};
    for (int i = 0; i < 3; ++i) {
        off[static_cast<size_t>(i)] =
            rng.uniform_int(0, dims[static_cast<size_t>(i)] - crop[static_cast<size_t>(i)]);
    }
    return off;
}

namespace {

bool crop_has_foreground(const LabelVolume& lbl, const std::array<int64_t, 3>& off,
                         const std::array<int64_t, 3>& crop) {
    for (int64_t z = 0; z < crop[0]; ++z)
        for (int64_t y = 0; y < crop[1]; ++y)
            for (int64_t x = 0; x < crop[2]; ++x)
                if (lbl.at(off[0] + z, off[1] + y, off[2] + x)) return true;
    return false;
}

}  // namespace

std::pair<Volume, LabelVolume> random_crop(const Volume& image, const LabelVolume& labels,
                                           const std::array<int64_t, 3>& crop, Rng& rng,
                                           const CropRule& rule) {
    for (int i = 0; i < 3; ++i) {
        if (crop[static_cast<size_t>(i)] > image.dims[static_cast<size_t>(i)] ||
            crop[static_cast<size_t>(i)] < 1) {
            throw ConfigError("crop " + std::to_string(crop[static_cast<size_t>(i)]) +
                              " exceeds volume extent " +
                              std::to_string(image.dims[static_cast<size_t>(i)]));
        }
    }
    std::array<int64_t, 3> off = draw_crop_offset(image.dims, crop, rng);
    if (rule.bias_foreground && rng.uniform() < rule.bias_prob) {
        for (int attempt = 0; attempt < rule.max_tries; ++attempt) {
            if (crop_has_foreground(labels, off, crop)) break;
            off = draw_crop_offset(image.dims, crop, rng);
        }
    }
    Volume ci;
    ci.dims = crop;
    ci.spacing = image.spacing;
    ci.voxels.resize(static_cast<size_t>(crop[0] * crop[1] * crop[2]));
    LabelVolume cl;
    cl.dims = crop;
    cl.spacing = labels.spacing;
    cl.labels.resize(ci.voxels.size());
    size_t idx = 0;
    for (int64_t z = 0; z < crop[0]; ++z)
        for (int64_t y = 0; y < crop[1]; ++y)
            for (int64_t x = 0; x < crop[2]; ++x, ++idx) {
                ci.voxels[idx] = image.at(off[0] + z, off[1] + y, off[2] + x);
                cl.labels[idx] = labels.at(off[0] + z, off[1] + y, off[2] + x);
            }
    return {std::move(ci), std::move(cl)};
}

}  // namespace vseg
