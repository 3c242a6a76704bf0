#include "vseg/cvf.hpp"
#include "vseg/eur.hpp"
#include "vseg/gradcheck.hpp"
#include "vseg/losses.hpp"

namespace vseg {

namespace {

using D = Tensor<double>;

D rnd(const Shape& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    return D::uniform(s, rng, lo, hi);
}

GradCheckCase simple(const std::string& name, double tol, GradFn fn, std::vector<D> inputs) {
    return {name, [name, tol, fn = std::move(fn), inputs = std::move(inputs)] {
                return grad_check(name, fn, inputs, tol);
            }};
}

}  // namespace

std::vector<GradCheckCase> standard_gradcheck_suite() {
    std::vector<GradCheckCase> cases;
    const double tol = 1e-5;
    const double loss_tol = 1e-4;
    Rng rng(20240901);

    cases.push_back(simple(
        "matmul", tol, [](const auto& in) { return sum_all(matmul(in[0], in[1])); },
        {rnd({3, 4}, rng), rnd({4, 2}, rng)}));
    cases.push_back(simple(
        "bmm", tol, [](const auto& in) { return sum_all(bmm(in[0], in[1])); },
        {rnd({2, 3, 4}, rng), rnd({2, 4, 2}, rng)}));
    cases.push_back(simple(
        "conv3d", tol,
        [](const auto& in) { return sum_all(conv3d(in[0], in[1], in[2], {1, 1, 1}, {1, 1, 1})); },
        {rnd({1, 2, 5, 5, 5}, rng), rnd({2, 2, 3, 3, 3}, rng), rnd({2}, rng)}));
    cases.push_back(simple(
        "conv3d-1x1x1", tol,
        [](const auto& in) { return sum_all(conv3d(in[0], in[1], in[2], {1, 1, 1}, {0, 0, 0})); },
        {rnd({2, 3, 3, 3, 3}, rng), rnd({4, 3, 1, 1, 1}, rng), rnd({4}, rng)}));
    cases.push_back(simple(
        "conv3d-strided", tol,
        [](const auto& in) { return sum_all(conv3d(in[0], in[1], in[2], {2, 2, 2}, {0, 0, 0})); },
        {rnd({1, 2, 4, 4, 4}, rng), rnd({3, 2, 2, 2, 2}, rng), rnd({3}, rng)}));
    cases.push_back(simple(
        "softmax", tol,
        [](const auto& in) {
            auto s = softmax(in[0], 1);
            return sum_all(mul(s, s));
        },
        {rnd({3, 5}, rng, -3, 3)}));
    cases.push_back(simple(
        "softplus", tol, [](const auto& in) { return sum_all(softplus(in[0])); },
        {rnd({4, 4}, rng, -4, 4)}));
    cases.push_back(simple(
        "sigmoid", tol,
        [](const auto& in) {
            auto s = sigmoid(in[0]);
            return sum_all(mul(s, s));
        },
        {rnd({4, 4}, rng, -4, 4)}));
    cases.push_back(simple(
        "relu", tol, [](const auto& in) { return sum_all(mul(relu(in[0]), in[0])); },
        {rnd({4, 4}, rng, 0.3, 2.0)}));
    cases.push_back(simple(
        "exp", tol, [](const auto& in) { return sum_all(exp(in[0])); }, {rnd({4, 4}, rng, -2, 1)}));
    cases.push_back(simple(
        "gelu", tol, [](const auto& in) { return sum_all(gelu(in[0])); }, {rnd({4, 4}, rng, -2, 2)}));
    cases.push_back(simple(
        "log", tol, [](const auto& in) { return sum_all(log(in[0])); },
        {rnd({4, 4}, rng, 0.3, 3.0)}));
    cases.push_back(simple(
        "clamp", tol, [](const auto& in) { return sum_all(mul(clamp(in[0], -0.5, 0.5), in[0])); },
        {rnd({4, 4}, rng, -2, 2)}));
    cases.push_back(simple(
        "upsample-nearest", tol,
        [](const auto& in) {
            auto u = upsample(in[0], 2, Resize::Nearest);
            return sum_all(mul(u, u));
        },
        {rnd({1, 2, 2, 2, 2}, rng)}));
    cases.push_back(simple(
        "upsample-trilinear", tol,
        [](const auto& in) {
            auto u = upsample(in[0], 2, Resize::Trilinear);
            return sum_all(mul(u, u));
        },
        {rnd({1, 2, 2, 3, 2}, rng)}));
    cases.push_back(simple(
        "interp3d", tol,
        [](const auto& in) {
            auto u = interp3d(in[0], 3, 5, 2);
            return sum_all(mul(u, u));
        },
        {rnd({1, 1, 2, 3, 4}, rng)}));
    cases.push_back(simple(
        "concat", tol,
        [](const auto& in) {
            auto c = concat<double>({in[0], in[1]}, 1);
            return sum_all(mul(c, c));
        },
        {rnd({2, 2}, rng), rnd({2, 3}, rng)}));
    cases.push_back(simple(
        "slice", tol,
        [](const auto& in) {
            auto s = slice(in[0], 1, 1, 2);
            return sum_all(mul(s, s));
        },
        {rnd({3, 4}, rng)}));
    cases.push_back(simple(
        "permute", tol,
        [](const auto& in) {
            auto p = permute(in[0], {1, 0});
            return sum_all(mul(p, p));
        },
        {rnd({3, 4}, rng)}));
    cases.push_back(simple(
        "reshape", tol,
        [](const auto& in) {
            auto r = reshape(in[0], {12});
            return sum_all(mul(r, r));
        },
        {rnd({3, 4}, rng)}));
    cases.push_back(simple(
        "expand", tol,
        [](const auto& in) {
            auto e = expand(in[0], {3, 4});
            return sum_all(mul(e, e));
        },
        {rnd({3, 1}, rng)}));
    cases.push_back(simple(
        "reduce-sum", tol,
        [](const auto& in) {
            auto r = reduce_sum(in[0], {1}, false);
            return sum_all(mul(r, r));
        },
        {rnd({3, 4}, rng)}));
    cases.push_back(simple(
        "reduce-mean", tol,
        [](const auto& in) {
            auto r = reduce_mean(in[0], {0}, true);
            return sum_all(mul(r, r));
        },
        {rnd({3, 4}, rng)}));
    {
        // distinct, well-separated values keep the argmax stable under h
        std::vector<double> vals(12);
        for (size_t i = 0; i < vals.size(); ++i) vals[i] = 0.37 * static_cast<double>(i % 7) + 0.01 * static_cast<double>(i);
        cases.push_back(simple(
            "reduce-max", tol,
            [](const auto& in) {
                auto r = reduce_max(in[0], {1}, false);
                return sum_all(mul(r, r));
            },
            {D::from_data({3, 4}, vals)}));
    }
    cases.push_back(simple(
        "group-norm", tol,
        [](const auto& in) {
            auto g = group_norm(in[0], int64_t{2}, in[1], in[2], 1e-5);
            return sum_all(mul(g, g));
        },
        {rnd({2, 4, 2, 2, 2}, rng), rnd({4}, rng, 0.5, 1.5), rnd({4}, rng)}));

    // modules end to end
    {
        auto ps = std::make_shared<ParamStore<double>>();
        Rng mrng(404);
        auto cvf = std::make_shared<CvfModule<double>>(*ps, "cvf", 2, mrng);
        auto noise = std::make_shared<CvfNoise<double>>();
        noise->branch_v = D::randn({1, 2, 2, 2, 2}, mrng);
        noise->branch_c = D::randn({1, 2, 2, 2, 2}, mrng);
        noise->att_v = D::randn({1, 2, 2, 2, 2}, mrng);
        noise->att_c = D::randn({1, 2, 2, 2, 2}, mrng);
        cases.push_back(simple(
            "cvf-end-to-end", tol,
            [ps, cvf, noise](const auto& in) {
                auto out = cvf->forward(in[0], in[1], noise.get());
                return sum_all(mul(out, out));
            },
            {rnd({1, 2, 2, 2, 2}, mrng), rnd({1, 2, 2, 2, 2}, mrng)}));
    }
    {
        // seed chosen so every relu/max input sits far from its kink
        auto ps = std::make_shared<ParamStore<double>>();
        Rng mrng(13);
        auto eur = std::make_shared<EurModule<double>>(*ps, "eur", 2, 4, 2, 2, mrng);
        auto probs = rnd({1, 2, 8, 8, 8}, mrng, 0.05, 0.95);
        std::vector<D> feats;
        for (int64_t i = 0; i < 4; ++i) {
            const int64_t r = 8 >> i;
            feats.push_back(rnd({1, 2 << i, r, r, r}, mrng));
        }
        auto u = rnd({1, 1, 8, 8, 8}, mrng, 0.1, 0.9);
        auto probe = std::make_shared<D>(rnd({1, 2, 8, 8, 8}, mrng));
        cases.push_back(simple(
            "eur-end-to-end", tol,
            [ps, eur, probe](const auto& in) {
                std::vector<D> f(in.begin() + 1, in.begin() + 5);
                auto out = eur->forward(in[0], f, in[5]);
                return sum_all(mul(out.logits, *probe));
            },
            {probs, feats[0], feats[1], feats[2], feats[3], u}));
    }

    // losses (composite tolerances)
    {
        Rng lrng(505);
        auto praw = rnd({1, 2, 3, 3, 3}, lrng, -1.5, 1.5);
        auto araw = rnd({1, 2, 3, 3, 3}, lrng, -1, 2);
        std::vector<double> ydata(static_cast<size_t>(2 * 27), 0.0);
        for (int64_t i = 0; i < 27; ++i) {
            if (i < 9) ydata[static_cast<size_t>(27 + i)] = 1.0;
            else ydata[static_cast<size_t>(i)] = 1.0;
        }
        auto y = std::make_shared<D>(D::from_data({1, 2, 3, 3, 3}, ydata));
        LossConfig lcfg;
        lcfg.anneal_epochs = 10;

        cases.push_back(simple(
            "dice-loss", loss_tol,
            [y](const auto& in) { return dice_loss(softmax(in[0], 1), *y, 1e-5); }, {praw}));
        cases.push_back(simple(
            "wce-loss", loss_tol,
            [y](const auto& in) { return wce_loss(softmax(in[0], 1), *y, {0.7, 1.3}); }, {praw}));
        cases.push_back(simple(
            "seg-loss", loss_tol,
            [y, lcfg](const auto& in) { return seg_loss(softmax(in[0], 1), *y, lcfg); }, {praw}));
        cases.push_back(simple(
            "evidential-kl-loss", loss_tol,
            [y, lcfg](const auto& in) {
                return evidential_kl_loss(add_scalar(softplus(in[0]), 1.0), *y, 7, lcfg);
            },
            {araw}));
        cases.push_back(simple(
            "total-loss", loss_tol,
            [y, lcfg](const auto& in) {
                auto probs = softmax(in[0], 1);
                auto alpha = add_scalar(softplus(in[1]), 1.0);
                return total_loss(probs, alpha, *y, 7, lcfg).total;
            },
            {praw, araw}));
    }

    return cases;
}

}  // namespace vseg
