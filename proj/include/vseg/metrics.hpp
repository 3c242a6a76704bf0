#pragma once

#include "vseg/volume.hpp"

namespace vseg {

struct MetricResult {
    double dsc = 0.0;
    double assd_mm = 0.0;
    int64_t n_pred_surface = 0;
    int64_t n_gt_surface = 0;
};

// 2|P n G| / (|P| + |G|); both masks empty is defined as 1.
double dsc(const LabelVolume& pred, const LabelVolume& gt);

// Foreground voxels with at least one of their 6 face-neighbours background
// or outside the grid; scan order (z, y, x).
std::vector<std::array<int64_t, 3>> surface_voxels(const LabelVolume& mask);

// Symmetric mean surface distance in mm, voxel centre to voxel centre:
// (sum_{p in Sp} d(p, Sg) + sum_{g in Sg} d(g, Sp)) / (|Sp| + |Sg|).
// Exact-Euclidean distance transform inside; throws UndefinedMetricError on
// an empty mask.
double assd(const LabelVolume& pred, const LabelVolume& gt);

MetricResult evaluate_masks(const LabelVolume& pred, const LabelVolume& gt);

// Squared Euclidean distance (mm^2) from every voxel centre to the nearest
// of the given source voxels, anisotropic spacing supported. Exposed for the
// oracle-equivalence tests.
std::vector<double> squared_edt(const std::array<int64_t, 3>& dims,
                                const std::array<float, 3>& spacing,
                                const std::vector<std::array<int64_t, 3>>& sources);

}  // namespace vseg
