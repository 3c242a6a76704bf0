#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vseg/cvf.hpp"
#include "vseg/gradcheck.hpp"

using namespace vseg;

namespace {

template <typename T>
void zero_all(ParamStore<T>& ps) {
    for (auto& e : ps.entries())
        std::fill(e.tensor.mutable_data().begin(), e.tensor.mutable_data().end(), T(0));
}

}  // namespace

TEST_CASE("latent encode: zero-initialized heads give mu 0 sigma 1") {
    ParamStore<double> ps;
    Rng rng(1);
    LatentEncoder<double> enc(ps, "enc", 3, rng);
    zero_all(ps);
    auto f = Tensor<double>::uniform({1, 3, 2, 2, 2}, rng, -2, 2);
    auto g = enc.encode(f);
    for (double v : g.mu.data()) CHECK(v == 0.0);
    for (double v : g.sigma.data()) CHECK(v == 1.0);
}

TEST_CASE("latent encode: log-sigma clamp bounds sigma") {
    ParamStore<double> ps;
    Rng rng(2);
    LatentEncoder<double> enc(ps, "enc", 2, rng);
    auto set_logsigma_bias = [&](double v) {
        auto* b = ps.find("enc.logsigma.b");
        REQUIRE(b != nullptr);
        std::fill(b->mutable_data().begin(), b->mutable_data().end(), v);
        auto* w = ps.find("enc.logsigma.w");
        std::fill(w->mutable_data().begin(), w->mutable_data().end(), 0.0);
    };
    auto f = Tensor<double>::uniform({1, 2, 2, 2, 2}, rng, -1, 1);

    set_logsigma_bias(-100.0);
    auto lo_sig = enc.encode(f).sigma;
    for (double v : lo_sig.data()) CHECK(v == std::exp(-10.0));
    set_logsigma_bias(100.0);
    auto hi_sig = enc.encode(f).sigma;
    for (double v : hi_sig.data()) CHECK(v == std::exp(10.0));
}

TEST_CASE("latent encode gradcheck") {
    ParamStore<double> ps;
    Rng rng(3);
    LatentEncoder<double> enc(ps, "enc", 2, rng);
    auto f = Tensor<double>::uniform({1, 2, 2, 2, 2}, rng, -1, 1);
    auto rep = grad_check(
        "latent_encode",
        [&](const std::vector<Tensor<double>>& in) {
            auto g = enc.encode(in[0]);
            return add(sum_all(mul(g.mu, g.mu)), sum_all(g.sigma));
        },
        {f}, 1e-5);
    CHECK(rep.passed);
}

TEST_CASE("reparameterize values and gradient routing") {
    auto mk = [](double mu, double sigma) {
        LatentGaussian<double> g;
        g.mu = Tensor<double>::full({1, 1, 1, 1, 1}, mu, true);
        g.sigma = Tensor<double>::full({1, 1, 1, 1, 1}, sigma, true);
        return g;
    };
    auto g = mk(0.5, 0.2);
    auto eps = Tensor<double>::full({1, 1, 1, 1, 1}, 1.0);
    auto z = reparameterize(g, eps);
    CHECK(z.item() == doctest::Approx(0.7).epsilon(1e-15));

    // sigma -> exp(-10) limit: |Z - mu| <= e^-10 * |eps| (+ round-off)
    auto g2 = mk(0.3, std::exp(-10.0));
    auto z2 = reparameterize(g2, eps);
    CHECK(std::abs(z2.item() - 0.3) <= std::exp(-10.0) * (1.0 + 1e-9) + 1e-16);

    CHECK_THROWS_AS(reparameterize(g, Tensor<double>::zeros({1, 1, 1, 1, 2})), ShapeError);

    // gradient reaches mu and sigma, never eps
    auto eps_rg = Tensor<double>::full({1, 1, 1, 1, 1}, 0.7, true);
    auto g3 = mk(0.1, 0.4);
    sum_all(reparameterize(g3, eps_rg)).backward();
    CHECK(g3.mu.grad() == std::vector<double>{1.0});
    CHECK(g3.sigma.grad() == std::vector<double>{0.7});
    CHECK(eps_rg.grad().empty());
}

TEST_CASE("reparameterize Monte-Carlo mean") {
    const int64_t n = 100000;
    Rng rng(77);
    LatentGaussian<double> g;
    g.mu = Tensor<double>::full({1, 1, 1, 1, n}, 0.5);
    g.sigma = Tensor<double>::full({1, 1, 1, 1, n}, 0.2);
    auto eps = Tensor<double>::randn({1, 1, 1, 1, n}, rng);
    auto z = reparameterize(g, eps);
    double mean = 0;
    for (double v : z.data()) mean += v;
    mean /= static_cast<double>(n);
    CHECK(std::abs(mean - 0.5) <= 3.0 * 0.2 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("attention encode: zeroed encoder with eps 0 gives zero") {
    ParamStore<double> ps;
    Rng rng(4);
    LatentEncoder<double> att(ps, "att", 2, rng);
    zero_all(ps);
    auto z = Tensor<double>::uniform({1, 2, 2, 2, 2}, rng, -1, 1);
    auto g = att.encode(z);
    auto za = reparameterize(g, Tensor<double>::zeros(z.shape()));
    CHECK(za.shape() == z.shape());
    for (double v : za.data()) CHECK(v == 0.0);
}

TEST_CASE("fusion weights: symmetry, softmax arithmetic, normalization") {
    Rng rng(5);
    auto z = Tensor<double>::uniform({1, 2, 2, 2, 2}, rng, -1, 1);
    auto [bv_eq, bc_eq] = fusion_weights(z, z);
    for (double v : bv_eq.data()) CHECK(v == 0.5);
    for (double v : bc_eq.data()) CHECK(v == 0.5);

    // z_av - z_ac = ln 3 at every voxel -> beta_v = 0.75
    auto za = Tensor<double>::full({1, 1, 1, 1, 1}, std::log(3.0));
    auto zc = Tensor<double>::zeros({1, 1, 1, 1, 1});
    auto [bv, bc] = fusion_weights(za, zc);
    CHECK(bv.item() == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(bc.item() == doctest::Approx(0.25).epsilon(1e-12));

    // property: beta_v + beta_c = 1 within 1e-6, 100 cases, wide logit range
    for (int trial = 0; trial < 100; ++trial) {
        auto a = Tensor<double>::uniform({1, 3, 2, 2, 2}, rng, -50, 50);
        auto b = Tensor<double>::uniform({1, 3, 2, 2, 2}, rng, -50, 50);
        auto [wv, wc] = fusion_weights(a, b);
        for (size_t i = 0; i < wv.data().size(); ++i) {
            CHECK(std::abs(wv.data()[i] + wc.data()[i] - 1.0) <= 1e-6);
            CHECK(wv.data()[i] >= 0.0);
            CHECK(wv.data()[i] <= 1.0);
        }
    }
    // strictly interior for moderate logit gaps (saturation needs ~36+)
    for (int trial = 0; trial < 100; ++trial) {
        auto a = Tensor<double>::uniform({1, 3, 2, 2, 2}, rng, -15, 15);
        auto b = Tensor<double>::uniform({1, 3, 2, 2, 2}, rng, -15, 15);
        auto [wv, wc] = fusion_weights(a, b);
        for (size_t i = 0; i < wv.data().size(); ++i) {
            CHECK(wv.data()[i] > 0.0);
            CHECK(wv.data()[i] < 1.0);
        }
    }
    CHECK_THROWS_AS(fusion_weights(za, Tensor<double>::zeros({1, 1, 1, 1, 2})), ShapeError);
}

TEST_CASE("fusion weights swap antisymmetry is exact") {
    Rng rng(6);
    auto a = Tensor<double>::uniform({2, 3, 2, 2, 2}, rng, -10, 10);
    auto b = Tensor<double>::uniform({2, 3, 2, 2, 2}, rng, -10, 10);
    auto [bv1, bc1] = fusion_weights(a, b);
    auto [bv2, bc2] = fusion_weights(b, a);
    CHECK(bv1.data() == bc2.data());
    CHECK(bc1.data() == bv2.data());
}

TEST_CASE("fuse: degenerate weighting and convex fixed point") {
    ParamStore<double> ps;
    Rng rng(7);
    CvfModule<double> cvf(ps, "cvf", 2, rng);  // mix projection starts as identity

    auto zv = Tensor<double>::uniform({1, 2, 2, 2, 2}, rng, -1, 1);
    auto zc = Tensor<double>::uniform({1, 2, 2, 2, 2}, rng, -1, 1);

    // beta_v -> 1 limit realized exactly: att difference 1000 underflows softmax
    auto za = Tensor<double>::full(zv.shape(), 1000.0);
    auto zb = Tensor<double>::zeros(zv.shape());
    auto [bv, bc] = fusion_weights(za, zb);
    auto fused = cvf.fuse(zv, zc, bv, bc);
    CHECK(fused.data() == zv.data());

    // z_v == z_c: the pre-projection mix is the common value
    auto [wv, wc] = fusion_weights(zv, zc);
    auto mixed = add(mul(wv, zv), mul(wc, zv));
    for (size_t i = 0; i < mixed.data().size(); ++i)
        CHECK(mixed.data()[i] == doctest::Approx(zv.data()[i]).epsilon(1e-12));
}

TEST_CASE("fuse gradcheck w.r.t. latents and mixing matrix") {
    Rng rng(8);
    auto zv = Tensor<double>::uniform({1, 2, 2, 2, 2}, rng, -1, 1);
    auto zc = Tensor<double>::uniform({1, 2, 2, 2, 2}, rng, -1, 1);
    auto wm = Tensor<double>::uniform({2, 2, 1, 1, 1}, rng, -1, 1);
    auto rep = grad_check(
        "cvf-fuse",
        [](const std::vector<Tensor<double>>& in) {
            auto [bv, bc] = fusion_weights(in[0], in[1]);
            auto mixed = add(mul(bv, in[0]), mul(bc, in[1]));
            auto out = conv3d(mixed, in[2], Tensor<double>(), {1, 1, 1}, {0, 0, 0});
            return sum_all(mul(out, out));
        },
        {zv, zc, wm}, 1e-5);
    CHECK(rep.passed);
}

TEST_CASE("convexity: the weighted mix lies between the branch latents") {
    Rng rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        auto zv = Tensor<double>::uniform({1, 2, 2, 2, 2}, rng, -5, 5);
        auto zc = Tensor<double>::uniform({1, 2, 2, 2, 2}, rng, -5, 5);
        auto av = Tensor<double>::uniform({1, 2, 2, 2, 2}, rng, -5, 5);
        auto ac = Tensor<double>::uniform({1, 2, 2, 2, 2}, rng, -5, 5);
        auto [bv, bc] = fusion_weights(av, ac);
        auto mixed = add(mul(bv, zv), mul(bc, zc));
        for (size_t i = 0; i < mixed.data().size(); ++i) {
            const double lo = std::min(zv.data()[i], zc.data()[i]);
            const double hi = std::max(zv.data()[i], zc.data()[i]);
            CHECK(mixed.data()[i] >= lo - 1e-12);
            CHECK(mixed.data()[i] <= hi + 1e-12);
        }
    }
}

TEST_CASE("cvf module: deterministic with eps 0, stochastic parts reproducible") {
    ParamStore<double> ps;
    Rng rng(10);
    CvfModule<double> cvf(ps, "cvf", 3, rng);
    auto fv = Tensor<double>::uniform({1, 3, 2, 2, 2}, rng, -1, 1);
    auto fc = Tensor<double>::uniform({1, 3, 2, 2, 2}, rng, -1, 1);
    auto a = cvf.forward(fv, fc, nullptr);
    auto b = cvf.forward(fv, fc, nullptr);
    CHECK(a.data() == b.data());
}

TEST_CASE("cvf end-to-end gradcheck with fixed nonzero noise") {
    ParamStore<double> ps;
    Rng rng(11);
    CvfModule<double> cvf(ps, "cvf", 2, rng);
    CvfNoise<double> noise;
    noise.branch_v = Tensor<double>::randn({1, 2, 2, 2, 2}, rng);
    noise.branch_c = Tensor<double>::randn({1, 2, 2, 2, 2}, rng);
    noise.att_v = Tensor<double>::randn({1, 2, 2, 2, 2}, rng);
    noise.att_c = Tensor<double>::randn({1, 2, 2, 2, 2}, rng);
    auto fv = Tensor<double>::uniform({1, 2, 2, 2, 2}, rng, -1, 1);
    auto fc = Tensor<double>::uniform({1, 2, 2, 2, 2}, rng, -1, 1);
    auto rep = grad_check(
        "cvf-end-to-end",
        [&](const std::vector<Tensor<double>>& in) {
            auto out = cvf.forward(in[0], in[1], &noise);
            return sum_all(mul(out, out));
        },
        {fv, fc}, 1e-5);
    CHECK(rep.passed);
}
