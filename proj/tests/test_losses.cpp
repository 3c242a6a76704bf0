#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vseg/gradcheck.hpp"
#include "vseg/losses.hpp"
#include "vseg/ops.hpp"

using namespace vseg;

namespace {

// [1,2,d,d,d] one-hot with the first `fg` voxels foreground
std::pair<Tensor<double>, Tensor<double>> half_case(int64_t d, int64_t fg) {
    const int64_t sp = d * d * d;
    std::vector<double> y(static_cast<size_t>(2 * sp), 0.0);
    for (int64_t i = 0; i < sp; ++i) {
        if (i < fg) y[static_cast<size_t>(sp + i)] = 1.0;  // class 1
        else y[static_cast<size_t>(i)] = 1.0;              // class 0
    }
    auto onehot = Tensor<double>::from_data({1, 2, d, d, d}, y);
    auto probs = Tensor<double>::full({1, 2, d, d, d}, 0.5);
    return {probs, onehot};
}

// direct evaluation of the Dice formula with plain loops
double dice_oracle(const Tensor<double>& p, const Tensor<double>& y, double smooth) {
    const int64_t k = p.dim(1);
    const int64_t sp = p.numel() / (p.dim(0) * k);
    double acc = 0;
    for (int64_t c = 0; c < k; ++c) {
        double inter = 0, ps = 0, ys = 0;
        for (int64_t n = 0; n < p.dim(0); ++n)
            for (int64_t i = 0; i < sp; ++i) {
                const size_t idx = static_cast<size_t>((n * k + c) * sp + i);
                inter += p.data()[idx] * y.data()[idx];
                ps += p.data()[idx];
                ys += y.data()[idx];
            }
        acc += (2.0 * inter + smooth) / (ps + ys + smooth);
    }
    return 1.0 - acc / static_cast<double>(k);
}

}  // namespace

TEST_CASE("dice loss endpoints") {
    auto [p_half, y] = half_case(2, 4);
    auto perfect = dice_loss(y, y, 1e-5);
    CHECK(perfect.item() <= 1e-5);

    // disjoint hard masks
    auto inverted = sub(Tensor<double>::full(y.shape(), 1.0), y);
    auto disjoint = dice_loss(inverted, y, 1e-5);
    CHECK(disjoint.item() == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("dice loss against the direct formula oracle") {
    auto [p, y] = half_case(2, 4);  // uniform 0.5, half foreground
    const double expect = dice_oracle(p, y, 1e-5);
    CHECK(dice_loss(p, y, 1e-5).item() == doctest::Approx(expect).epsilon(1e-12));

    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto praw = Tensor<double>::uniform({1, 2, 3, 3, 3}, rng, -2, 2);
        auto pr = softmax(praw, 1);
        auto [unused, yy] = half_case(3, rng.uniform_int(0, 26));
        CHECK(dice_loss(pr, yy, 1e-5).item() ==
              doctest::Approx(dice_oracle(pr, yy, 1e-5)).epsilon(1e-10));
    }
}

TEST_CASE("wce loss values and weight normalization invariance") {
    auto [p, y] = half_case(2, 4);
    // perfect prediction, clamped at 1e-7: loss <= -ln(1 - 1e-7) ~ 1.0000001e-7 per voxel
    auto perfect = wce_loss(y, y, {1.0, 1.0});
    CHECK(perfect.item() >= 0.0);
    CHECK(perfect.item() <= 1.7e-6);

    // P = 0.5 at every true-class voxel -> ln 2
    auto l = wce_loss(p, y, {1.0, 1.0});
    CHECK(l.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    auto a = wce_loss(p, y, {0.4, 1.6});
    auto b = wce_loss(p, y, {0.8, 3.2});  // doubled weights renormalize away
    CHECK(a.item() == doctest::Approx(b.item()).epsilon(1e-15));
}

TEST_CASE("inverse-frequency weights clamp and normalize") {
    auto [p, y] = half_case(4, 1);  // 1 of 64 voxels foreground
    auto w = class_weights_for(y, ClassWeightMode::InverseFrequency);
    REQUIRE(w.size() == 2);
    const double mean = (w[0] + w[1]) / 2.0;
    CHECK(mean == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w[1] > w[0]);  // rare class upweighted

    // all-background crop: foreground frequency zero -> clamped, not infinite
    auto [p0, y0] = half_case(2, 0);
    auto w0 = class_weights_for(y0, ClassWeightMode::InverseFrequency);
    CHECK(std::isfinite(w0[1]));

    auto wu = class_weights_for(y, ClassWeightMode::Uniform);
    CHECK(wu == std::vector<double>{1.0, 1.0});
}

TEST_CASE("seg loss blends dice and wce with gamma") {
    auto [p, y] = half_case(2, 4);
    LossConfig cfg;
    cfg.class_weight_mode = ClassWeightMode::Uniform;

    cfg.gamma = 1.0;
    CHECK(seg_loss(p, y, cfg).item() ==
          doctest::Approx(dice_loss(p, y, 1e-5).item()).epsilon(1e-12));
    cfg.gamma = 0.0;
    CHECK(seg_loss(p, y, cfg).item() ==
          doctest::Approx(wce_loss(p, y, {1, 1}).item()).epsilon(1e-12));

    cfg.gamma = 0.6;
    const double d = dice_loss(p, y, 1e-5).item();
    const double w = wce_loss(p, y, {1, 1}).item();
    CHECK(seg_loss(p, y, cfg).item() == doctest::Approx(0.6 * d + 0.4 * w).epsilon(1e-12));
    // the blend arithmetic itself: 0.6*0.2 + 0.4*0.5 = 0.32
    CHECK(0.6 * 0.2 + 0.4 * 0.5 == doctest::Approx(0.32).epsilon(1e-15));
}

TEST_CASE("evidential KL: zero at the uniform Dirichlet") {
    // Y = class 1, alpha = (1, anything): alpha~ = (1,1) -> KL = 0
    auto y = Tensor<double>::from_data({1, 2, 1, 1, 1}, {0, 1});
    auto alpha = Tensor<double>::from_data({1, 2, 1, 1, 1}, {1.0, 7.3});
    LossConfig cfg;
    cfg.anneal_epochs = 10;
    auto kl = evidential_kl_loss(alpha, y, /*epoch=*/100, cfg);
    CHECK(kl.item() == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("evidential KL spot value ln2 - 1/2 via the digamma oracle") {
    // alpha~ = (2,1): Y = class 1, alpha = (2, x)
    auto y = Tensor<double>::from_data({1, 2, 1, 1, 1}, {0, 1});
    auto alpha = Tensor<double>::from_data({1, 2, 1, 1, 1}, {2.0, 4.0});
    LossConfig cfg;
    cfg.anneal_epochs = 10;
    auto kl = evidential_kl_loss(alpha, y, /*epoch=*/10, cfg);  // anneal factor 1
    const double expect = std::log(2.0) - 0.5;
    CHECK(kl.item() == doctest::Approx(expect).epsilon(1e-9));
    CHECK(std::abs(kl.item() - 0.19315) <= 1e-5);

    // independent digamma-oracle recomputation of the closed form
    const double oracle = std::lgamma(3.0) - std::lgamma(2.0) -
                          (std::lgamma(2.0) + std::lgamma(1.0)) +
                          (2.0 - 1.0) * (digamma_scalar(2.0) - digamma_scalar(3.0));
    CHECK(kl.item() == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("evidential KL: annealing endpoints and contract violation") {
    auto y = Tensor<double>::from_data({1, 2, 1, 1, 1}, {0, 1});
    auto alpha = Tensor<double>::from_data({1, 2, 1, 1, 1}, {5.0, 2.0});
    LossConfig cfg;
    cfg.anneal_epochs = 10;
    CHECK(evidential_kl_loss(alpha, y, 0, cfg).item() == 0.0);
    const double full = evidential_kl_loss(alpha, y, 10, cfg).item();
    const double half = evidential_kl_loss(alpha, y, 5, cfg).item();
    CHECK(half == doctest::Approx(0.5 * full).epsilon(1e-12));

    auto bad = Tensor<double>::from_data({1, 2, 1, 1, 1}, {0.5, 2.0});
    CHECK_THROWS_AS(evidential_kl_loss(bad, y, 5, cfg), NumericsError);
}

TEST_CASE("evidential KL is nonnegative and vanishes only at alpha~ = 1") {
    Rng rng(5);
    LossConfig cfg;
    cfg.anneal_epochs = 1;
    for (int trial = 0; trial < 100; ++trial) {
        auto e = Tensor<double>::uniform({1, 2, 2, 2, 2}, rng, 0.0, 5.0);
        auto alpha = add_scalar(e, 1.0);
        auto [p, y] = half_case(2, rng.uniform_int(0, 8));
        const double kl = evidential_kl_loss(alpha, y, 5, cfg).item();
        CHECK(kl >= -1e-12);
        // wrong-class evidence present -> strictly positive
        double off_class_evidence = 0;
        for (int64_t i = 0; i < 8; ++i)
            for (int64_t c = 0; c < 2; ++c)
                off_class_evidence +=
                    (1.0 - y.data()[static_cast<size_t>(c * 8 + i)]) * e.data()[static_cast<size_t>(c * 8 + i)];
        if (off_class_evidence > 1e-3) CHECK(kl > 0.0);
    }
}

TEST_CASE("total loss composition and epoch-zero behaviour") {
    auto [p, y] = half_case(2, 4);
    LossConfig cfg;
    cfg.anneal_epochs = 10;
    cfg.class_weight_mode = ClassWeightMode::Uniform;
    auto alpha = Tensor<double>::full({1, 2, 2, 2, 2}, 2.5);

    auto at0 = total_loss(p, alpha, y, 0, cfg);
    CHECK(at0.kl == 0.0);
    CHECK(at0.total.item() == doctest::Approx(seg_loss(p, y, cfg).item()).epsilon(1e-12));

    auto later = total_loss(p, alpha, y, 10, cfg);
    CHECK(later.kl > 0.0);
    CHECK(later.total.item() ==
          doctest::Approx(0.6 * later.dice + 0.4 * later.wce + later.kl).epsilon(1e-10));

    // no evidential head -> pure segmentation loss
    auto none = total_loss(p, Tensor<double>(), y, 10, cfg);
    CHECK(none.kl == 0.0);
}

TEST_CASE("total loss gradcheck on a 2-class 4^3 toy head") {
    Rng rng(6);
    auto praw = Tensor<double>::uniform({1, 2, 4, 4, 4}, rng, -1.5, 1.5);
    auto araw = Tensor<double>::uniform({1, 2, 4, 4, 4}, rng, -1, 2);
    auto [unused, y] = half_case(4, 20);
    LossConfig cfg;
    cfg.anneal_epochs = 10;
    cfg.class_weight_mode = ClassWeightMode::InverseFrequency;

    auto rep = grad_check(
        "total-loss",
        [&](const std::vector<Tensor<double>>& in) {
            auto probs = softmax(in[0], 1);
            auto alpha = add_scalar(softplus(in[1]), 1.0);
            return total_loss(probs, alpha, y, 7, cfg).total;
        },
        {praw, araw}, 1e-4);
    CHECK(rep.passed);

    // individual losses at the same tolerance
    auto rep_dice = grad_check(
        "dice",
        [&](const std::vector<Tensor<double>>& in) {
            return dice_loss(softmax(in[0], 1), y, 1e-5);
        },
        {praw}, 1e-4);
    CHECK(rep_dice.passed);
    auto rep_wce = grad_check(
        "wce",
        [&](const std::vector<Tensor<double>>& in) {
            return wce_loss(softmax(in[0], 1), y, {0.7, 1.3});
        },
        {praw}, 1e-4);
    CHECK(rep_wce.passed);
    auto rep_kl = grad_check(
        "evidential-kl",
        [&](const std::vector<Tensor<double>>& in) {
            return evidential_kl_loss(add_scalar(softplus(in[0]), 1.0), y, 7, cfg);
        },
        {araw}, 1e-4);
    CHECK(rep_kl.passed);
}

TEST_CASE("loss range invariants") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        auto pr = softmax(Tensor<double>::uniform({1, 2, 3, 3, 3}, rng, -3, 3), 1);
        auto [u2, y] = half_case(3, rng.uniform_int(0, 27));
        const double d = dice_loss(pr, y, 1e-5).item();
        const double w = wce_loss(pr, y, {1, 1}).item();
        CHECK(d >= 0.0);
        CHECK(d <= 1.0 + 1e-5);
        CHECK(w >= 0.0);
    }
}
