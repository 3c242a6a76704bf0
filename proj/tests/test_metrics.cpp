#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vseg/metrics.hpp"
#include "vseg/rng.hpp"

using namespace vseg;

namespace {

LabelVolume make_mask(const std::array<int64_t, 3>& dims,
                      const std::vector<std::array<int64_t, 3>>& fg,
                      const std::array<float, 3>& spacing = {1.f, 1.f, 1.f}) {
    LabelVolume m;
    m.dims = dims;
    m.spacing = spacing;
    m.labels.assign(static_cast<size_t>(m.numel()), 0);
    for (const auto& v : fg) m.at(v[0], v[1], v[2]) = 1;
    return m;
}

LabelVolume random_blob(const std::array<int64_t, 3>& dims, Rng& rng,
                        const std::array<float, 3>& spacing) {
    LabelVolume m;
    m.dims = dims;
    m.spacing = spacing;
    m.labels.assign(static_cast<size_t>(m.numel()), 0);
    const int64_t n_seeds = rng.uniform_int(1, 3);
    for (int64_t s = 0; s < n_seeds; ++s) {
        const int64_t cz = rng.uniform_int(0, dims[0] - 1);
        const int64_t cy = rng.uniform_int(0, dims[1] - 1);
        const int64_t cx = rng.uniform_int(0, dims[2] - 1);
        const int64_t r = rng.uniform_int(1, 4);
        for (int64_t z = std::max<int64_t>(0, cz - r); z <= std::min(dims[0] - 1, cz + r); ++z)
            for (int64_t y = std::max<int64_t>(0, cy - r); y <= std::min(dims[1] - 1, cy + r); ++y)
                for (int64_t x = std::max<int64_t>(0, cx - r); x <= std::min(dims[2] - 1, cx + r); ++x)
                    if ((z - cz) * (z - cz) + (y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r)
                        m.at(z, y, x) = 1;
    }
    return m;
}

// all-pairs brute-force symmetric surface distance
double assd_bruteforce(const LabelVolume& a, const LabelVolume& b) {
    const auto sa = surface_voxels(a);
    const auto sb = surface_voxels(b);
    const auto& sp = a.spacing;
    auto dist = [&](const std::array<int64_t, 3>& p, const std::array<int64_t, 3>& q) {
        const double dz = static_cast<double>(p[0] - q[0]) * sp[0];
        const double dy = static_cast<double>(p[1] - q[1]) * sp[1];
        const double dx = static_cast<double>(p[2] - q[2]) * sp[2];
        return std::sqrt(dz * dz + dy * dy + dx * dx);
    };
    double total = 0;
    for (const auto& p : sa) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : sb) best = std::min(best, dist(p, q));
        total += best;
    }
    for (const auto& q : sb) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : sa) best = std::min(best, dist(p, q));
        total += best;
    }
    return total / static_cast<double>(sa.size() + sb.size());
}

}  // namespace

TEST_CASE("dsc basic values") {
    auto a = make_mask({4, 4, 4}, {{0, 0, 0}, {0, 0, 1}, {0, 1, 0}, {1, 0, 0}});
    CHECK(dsc(a, a) == 1.0);

    auto b = make_mask({4, 4, 4}, {{3, 3, 3}, {3, 3, 2}});
    CHECK(dsc(a, b) == 0.0);

    // |P| = 4, |G| = 4, overlap 2 -> 0.5
    auto g = make_mask({4, 4, 4}, {{0, 0, 0}, {0, 0, 1}, {2, 2, 2}, {2, 2, 3}});
    CHECK(dsc(a, g) == 0.5);

    // both empty is defined as 1
    auto e1 = make_mask({4, 4, 4}, {});
    auto e2 = make_mask({4, 4, 4}, {});
    CHECK(dsc(e1, e2) == 1.0);

    auto wrong = make_mask({4, 4, 5}, {});
    CHECK_THROWS_AS(dsc(a, wrong), ShapeError);
}

TEST_CASE("surface voxels: single voxel, solid cube, empty") {
    auto single = make_mask({5, 5, 5}, {{2, 2, 2}});
    auto s1 = surface_voxels(single);
    REQUIRE(s1.size() == 1);
    CHECK(s1[0] == std::array<int64_t, 3>{2, 2, 2});

    // solid 3^3 cube: all 27 minus the centre
    std::vector<std::array<int64_t, 3>> cube;
    for (int64_t z = 1; z <= 3; ++z)
        for (int64_t y = 1; y <= 3; ++y)
            for (int64_t x = 1; x <= 3; ++x) cube.push_back({z, y, x});
    auto solid = make_mask({5, 5, 5}, cube);
    CHECK(surface_voxels(solid).size() == 26);

    auto empty = make_mask({5, 5, 5}, {});
    CHECK(surface_voxels(empty).empty());

    // voxels on the grid border are surface even when fully surrounded inside
    LabelVolume full;
    full.dims = {3, 3, 3};
    full.spacing = {1, 1, 1};
    full.labels.assign(27, 1);
    CHECK(surface_voxels(full).size() == 26);  // all but the centre
}

TEST_CASE("assd basic values") {
    auto a = make_mask({8, 8, 8}, {{1, 1, 1}, {1, 1, 2}});
    CHECK(assd(a, a) == 0.0);

    // two single voxels three apart on one axis, 1 mm spacing
    auto p = make_mask({8, 8, 8}, {{2, 2, 2}});
    auto g = make_mask({8, 8, 8}, {{2, 2, 5}});
    CHECK(assd(p, g) == 3.0);

    auto empty = make_mask({8, 8, 8}, {});
    CHECK_THROWS_AS(assd(p, empty), UndefinedMetricError);
    CHECK_THROWS_AS(assd(empty, g), UndefinedMetricError);
}

TEST_CASE("assd matches the all-pairs brute-force oracle on random pairs") {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const std::array<int64_t, 3> dims = {rng.uniform_int(4, 16), rng.uniform_int(4, 16),
                                             rng.uniform_int(4, 16)};
        const std::array<float, 3> spacing = {static_cast<float>(rng.uniform(0.3, 2.0)),
                                              static_cast<float>(rng.uniform(0.3, 2.0)),
                                              static_cast<float>(rng.uniform(0.3, 2.0))};
        auto a = random_blob(dims, rng, spacing);
        auto b = random_blob(dims, rng, spacing);
        if (a.foreground_count() == 0 || b.foreground_count() == 0) continue;
        const double fast = assd(a, b);
        const double brute = assd_bruteforce(a, b);
        INFO("trial " << trial);
        CHECK(std::abs(fast - brute) <= 1e-9);
        // symmetry is exact by construction
        CHECK(assd(a, b) == assd(b, a));
    }
}

TEST_CASE("assd spacing linearity") {
    Rng rng(13);
    auto a = random_blob({10, 10, 10}, rng, {1, 1, 1});
    auto b = random_blob({10, 10, 10}, rng, {1, 1, 1});
    REQUIRE(a.foreground_count() > 0);
    REQUIRE(b.foreground_count() > 0);
    const double base = assd(a, b);

    // doubling is exact (binary scaling)
    auto a2 = a, b2 = b;
    a2.spacing = b2.spacing = {2, 2, 2};
    CHECK(assd(a2, b2) == 2.0 * base);

    auto a3 = a, b3 = b;
    a3.spacing = b3.spacing = {1.7f, 1.7f, 1.7f};
    CHECK(assd(a3, b3) ==
          doctest::Approx(static_cast<double>(1.7f) * base).epsilon(1e-12));
}

TEST_CASE("evaluate_masks bundles the metric results") {
    auto p = make_mask({8, 8, 8}, {{2, 2, 2}});
    auto g = make_mask({8, 8, 8}, {{2, 2, 5}});
    auto r = evaluate_masks(p, g);
    CHECK(r.dsc == 0.0);
    CHECK(r.assd_mm == 3.0);
    CHECK(r.n_pred_surface == 1);
    CHECK(r.n_gt_surface == 1);
}
