#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "vseg/gradcheck.hpp"
#include "vseg/network.hpp"

using namespace vseg;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.vit = {/*patch=*/8, /*embed=*/8, /*depth=*/3, /*heads=*/2, /*tail=*/2};
    cfg.cnn = {/*base=*/2, /*scales=*/4};
    cfg.fusion_width = 2;
    cfg.crop = {16, 16, 16};
    cfg.ablation = {true, true, true};
    return cfg;
}

template <typename T>
void zero_params_with_prefix(ParamStore<T>& ps, const std::string& prefix) {
    for (auto& e : ps.entries()) {
        if (e.name.rfind(prefix, 0) == 0) {
            std::fill(e.tensor.mutable_data().begin(), e.tensor.mutable_data().end(), T(0));
        }
    }
}

}  // namespace

TEST_CASE("patch embed token counts") {
    ParamStore<double> ps;
    Rng rng(1);
    ViTConfig vc{8, 16, 2, 2, 1};
    PatchEmbed3d<double> pe(ps, "vit.patch", vc, {4, 4, 4}, rng);

    auto t32 = pe.forward(Tensor<double>::zeros({1, 1, 32, 32, 32}));
    CHECK(t32.shape() == Shape{1, 64, 16});

    auto t_mixed = pe.forward(Tensor<double>::zeros({1, 1, 64, 64, 32}));
    CHECK(t_mixed.shape() == Shape{1, 256, 16});

    CHECK_THROWS_AS(pe.forward(Tensor<double>::zeros({1, 1, 30, 32, 32})), ConfigError);
}

TEST_CASE("patch embed of zero volume with zeroed projection is the positional field") {
    ParamStore<double> ps;
    Rng rng(2);
    ViTConfig vc{4, 6, 2, 2, 1};
    PatchEmbed3d<double> pe(ps, "vit.patch", vc, {2, 2, 2}, rng);
    zero_params_with_prefix(ps, "vit.patch.proj");

    auto tokens = pe.forward(Tensor<double>::zeros({1, 1, 8, 8, 8}));
    const auto& pos = *ps.find("vit.patch.pos");  // [1, 6, 2, 2, 2]
    REQUIRE(tokens.shape() == Shape{1, 8, 6});
    for (int64_t t = 0; t < 8; ++t)
        for (int64_t e = 0; e < 6; ++e)
            CHECK(tokens.data()[static_cast<size_t>(t * 6 + e)] ==
                  pos.data()[static_cast<size_t>(e * 8 + t)]);
}

TEST_CASE("attention rows sum to one") {
    ParamStore<double> ps;
    Rng rng(3);
    MultiHeadAttention<double> mha(ps, "attn", 8, 2, rng, true);
    auto tokens = Tensor<double>::uniform({2, 5, 8}, rng, -2, 2);
    Tensor<double> probs;
    mha.forward(tokens, &probs);
    REQUIRE(probs.shape() == Shape{4, 5, 5});
    for (int64_t r = 0; r < 4 * 5; ++r) {
        double s = 0;
        for (int64_t c = 0; c < 5; ++c) s += probs.data()[static_cast<size_t>(r * 5 + c)];
        CHECK(std::abs(s - 1.0) <= 1e-6);
    }
}

TEST_CASE("freezing: trainable_tail = depth means every block learns") {
    ParamStore<double> ps;
    Rng rng(4);
    ViTConfig vc{4, 8, 2, 2, /*tail=*/2};
    ViTEncoder<double> vit(ps, "vit", vc, {2, 2, 2}, rng);
    CHECK(vit.frozen_depth() == 0);
    auto vol = Tensor<double>::uniform({1, 1, 8, 8, 8}, rng, -1, 1);
    sum_all(mul(vit.forward(vol), vit.forward(vol))).backward();
    for (const auto& e : ps.entries()) {
        if (e.name.rfind("vit.block", 0) == 0) {
            INFO(e.name);
            CHECK(e.tensor.requires_grad());
            CHECK_FALSE(e.tensor.grad().empty());
        }
    }
}

TEST_CASE("freezing: with tail 2 of depth 6 only the last two blocks get grads") {
    ParamStore<double> ps;
    Rng rng(5);
    ViTConfig vc{4, 8, 6, 2, /*tail=*/2};
    ViTEncoder<double> vit(ps, "vit", vc, {2, 2, 2}, rng);
    auto vol = Tensor<double>::uniform({1, 1, 8, 8, 8}, rng, -1, 1);
    auto out = vit.forward(vol);
    sum_all(mul(out, out)).backward();
    for (const auto& e : ps.entries()) {
        INFO(e.name);
        const bool tail = e.name.rfind("vit.block4", 0) == 0 || e.name.rfind("vit.block5", 0) == 0;
        if (tail) {
            CHECK_FALSE(e.tensor.grad().empty());
            double norm = 0;
            for (double g : e.tensor.grad()) norm += g * g;
            CHECK(norm > 0.0);
        } else {
            CHECK(e.tensor.grad().empty());
        }
    }
}

TEST_CASE("age module: zero input, residual identity, gate ranges") {
    ParamStore<double> ps;
    Rng rng(6);
    AgeModule<double> age(ps, "age", 4, rng);

    auto zeros = Tensor<double>::zeros({1, 4, 3, 3, 3});
    auto out0 = age.forward(zeros);
    for (double v : out0.data()) CHECK(v == 0.0);

    // fusion conv is zero-initialized, so AGE starts as the exact identity
    auto f = Tensor<double>::uniform({2, 4, 3, 3, 3}, rng, -2, 2);
    auto out = age.forward(f);
    CHECK(out.data() == f.data());

    auto ca = age.channel_gate(f);
    auto sa = age.spatial_gate(f);
    for (double v : ca.data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
    for (double v : sa.data()) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("cnn encoder scale shapes at base 16") {
    ParamStore<float> ps;
    Rng rng(7);
    CnnEncoder<float> enc(ps, "cnn", {16, 4}, rng);
    auto pyr = enc.forward(Tensor<float>::zeros({1, 1, 64, 64, 64}));
    REQUIRE(pyr.skips.size() == 4);
    CHECK(pyr.skips[0].shape() == Shape{1, 16, 64, 64, 64});
    CHECK(pyr.skips[1].shape() == Shape{1, 32, 32, 32, 32});
    CHECK(pyr.skips[2].shape() == Shape{1, 64, 16, 16, 16});
    CHECK(pyr.skips[3].shape() == Shape{1, 128, 8, 8, 8});

    // zero input with zero biases stays exactly zero through conv+norm+relu
    for (const auto& s : pyr.skips)
        for (float v : s.data()) CHECK(v == 0.0f);

    CHECK_THROWS_AS(enc.forward(Tensor<float>::zeros({1, 1, 12, 16, 16})), ConfigError);
}

TEST_CASE("cnn encoder gradcheck through a 2-scale miniature") {
    ParamStore<double> ps;
    Rng rng(8);
    CnnEncoder<double> enc(ps, "cnn", {2, 2}, rng);
    auto x = Tensor<double>::uniform({1, 1, 4, 4, 4}, rng, -1, 1);
    auto rep = grad_check(
        "cnn-encoder",
        [&](const std::vector<Tensor<double>>& in) {
            auto pyr = enc.forward(in[0]);
            return add(sum_all(mul(pyr.skips[0], pyr.skips[0])),
                       sum_all(mul(pyr.skips[1], pyr.skips[1])));
        },
        {x}, 1e-5);
    CHECK(rep.passed);
}

TEST_CASE("decoder output matches input grid and softmax rows") {
    ParamStore<float> ps;
    Rng rng(9);
    CNNEncoderConfig cc{2, 4};
    CnnEncoder<float> enc(ps, "cnn", cc, rng);
    Decoder<float> dec(ps, "dec", cc, 2, rng);
    auto vol = Tensor<float>::uniform({1, 1, 16, 16, 16}, rng, 0, 1);
    auto pyr = enc.forward(vol);
    auto out = dec.forward(pyr.deepest(), pyr);
    CHECK(out.logits.shape() == Shape{1, 2, 16, 16, 16});
    REQUIRE(out.feats.size() == 4);
    CHECK(out.feats[0].shape() == Shape{1, 2, 16, 16, 16});
    CHECK(out.feats[3].shape() == Shape{1, 16, 2, 2, 2});

    auto p = softmax(out.logits, 1);
    const int64_t sp = 16 * 16 * 16;
    for (int64_t i = 0; i < sp; i += 17) {
        const float s = p.data()[static_cast<size_t>(i)] + p.data()[static_cast<size_t>(sp + i)];
        CHECK(std::abs(s - 1.0f) <= 1e-6f);
    }

    // zeroed head -> uniform class probabilities
    zero_params_with_prefix(ps, "dec.head");
    auto out2 = dec.forward(pyr.deepest(), pyr);
    auto p2 = softmax(out2.logits, 1);
    for (float v : p2.data()) CHECK(v == 0.5f);
}

TEST_CASE("network forward is shape-closed over valid input sizes") {
    auto cfg = tiny_config();
    Network<float> net(cfg, 42);
    for (int64_t size : {16, 24}) {
        Rng rng(static_cast<uint64_t>(size));
        auto vol = Tensor<float>::uniform({1, 1, size, size, size}, rng, 0, 1);
        ForwardOptions<float> opts;
        auto out = net.forward(vol, opts);
        CHECK(out.probs.shape() == Shape{1, 2, size, size, size});
        CHECK(out.belief.uncertainty.shape() == Shape{1, 1, size, size, size});
    }
}

TEST_CASE("freezing contract: one optimizer step leaves the backbone prefix untouched") {
    auto cfg = tiny_config();
    Network<float> net(cfg, 43);
    Rng rng(44);
    auto vol = Tensor<float>::uniform({2, 1, 16, 16, 16}, rng, 0, 1);

    std::vector<std::vector<float>> before;
    for (const auto& e : net.params().entries()) before.push_back(e.tensor.data());

    auto noise = net.sample_noise({2, cfg.deepest_channels(), 2, 2, 2}, rng);
    ForwardOptions<float> opts;
    opts.noise = &noise;
    auto out = net.forward(vol, opts);
    auto loss = sum_all(mul(out.probs, out.probs));
    loss.backward();
    Adam<float> opt(net.params().trainable(), 1e-2);
    opt.step();

    size_t idx = 0;
    size_t changed = 0;
    for (const auto& e : net.params().entries()) {
        const bool frozen_prefix = e.name.rfind("vit.patch", 0) == 0 ||
                                   e.name.rfind("vit.pos", 0) == 0 ||
                                   e.name.rfind("vit.block0", 0) == 0;
        const bool same = e.tensor.data() == before[idx];
        if (frozen_prefix) {
            INFO(e.name);
            CHECK(same);
            CHECK_FALSE(e.tensor.requires_grad());
        }
        if (!same) ++changed;
        ++idx;
    }
    CHECK(changed > 0);  // the step did learn something
}

TEST_CASE("ablation flag mapping follows the five variants") {
    CHECK(ablation_from_name("net1").enhanced_vit == false);
    CHECK(ablation_from_name("net1").cvf == false);
    CHECK(ablation_from_name("net1").eur == false);
    CHECK(ablation_from_name("net2").enhanced_vit == true);
    CHECK(ablation_from_name("net2").cvf == false);
    CHECK(ablation_from_name("net3").cvf == true);
    CHECK(ablation_from_name("net3").eur == false);
    CHECK(ablation_from_name("net4").eur == true);
    CHECK(ablation_from_name("net4").enhanced_vit == false);
    auto ours = ablation_from_name("ours");
    CHECK((ours.enhanced_vit && ours.cvf && ours.eur));
    CHECK_THROWS_AS(ablation_from_name("net9"), ConfigError);

    ModelConfig bad = tiny_config();
    bad.ablation = {false, true, false};  // cvf without the ViT branch
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("network variants forward and stay consistent with flags") {
    for (const char* name : {"net1", "net2", "net3", "net4", "ours"}) {
        auto cfg = tiny_config();
        cfg.ablation = ablation_from_name(name);
        Network<float> net(cfg, 7);
        Rng rng(8);
        auto vol = Tensor<float>::uniform({1, 1, 16, 16, 16}, rng, 0, 1);
        auto out = net.forward(vol);
        INFO(name);
        CHECK(out.probs.shape() == Shape{1, 2, 16, 16, 16});
        if (!cfg.ablation.eur) {
            CHECK(out.final_logits.data() == out.initial_logits.data());
        } else {
            CHECK_FALSE(out.final_logits.data() == out.initial_logits.data());
        }
    }
}

TEST_CASE("vit prefix cache reproduces the uncached forward bitwise") {
    auto cfg = tiny_config();
    cfg.ablation = {true, true, false};
    Network<float> net(cfg, 21);
    Rng rng(22);
    auto vol = Tensor<float>::uniform({1, 1, 16, 16, 16}, rng, 0, 1);

    Tensor<float> cached;
    {
        NoGradGuard ng;
        cached = net.vit_prefix(vol);
    }
    auto plain = net.forward(vol);
    ForwardOptions<float> opts;
    opts.vit_prefix_cache = &cached;
    auto with_cache = net.forward(vol, opts);
    CHECK(plain.probs.data() == with_cache.probs.data());
}
