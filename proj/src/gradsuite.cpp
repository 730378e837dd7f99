#include "usr/gradsuite.hpp"

#include <cmath>

#include "usr/gradcheck.hpp"
#include "usr/model.hpp"
#include "usr/rng.hpp"
#include "usr/trainer.hpp"

namespace usr::nn {

namespace {

constexpr std::uint64_t kSuiteSeed = 0x5EEDB00Cull;

TensorPtr randn(Shape shape, std::uint64_t idx, const char* purpose, double scale_v = 1.0) {
    DeterministicRng rng(kSuiteSeed, idx, purpose);
    auto t = Tensor::zeros(std::move(shape));
    for (double& v : t->data) v = scale_v * rng.next_gaussian();
    return t;
}

// |values| kept away from zero so subgradient kinks stay outside FD steps
TensorPtr randn_off_zero(Shape shape, std::uint64_t idx, const char* purpose) {
    auto t = randn(std::move(shape), idx, purpose);
    for (double& v : t->data) v += v >= 0.0 ? 0.1 : -0.1;
    return t;
}

// fixed random projection so reductions are not permutation-invariant
TensorPtr probe_for(const TensorPtr& like, std::uint64_t idx) {
    return randn(like->shape, idx, "probe");
}

TensorPtr probed_sum(const TensorPtr& x, std::uint64_t idx) {
    return sum_all(mul(x, probe_for(x, idx)));
}

struct SuiteBuilder {
    std::vector<GradCheckEntry> entries;

    void check(const std::string& name, const ScalarFn& fn, std::vector<TensorPtr> point,
               std::int64_t max_coords = 0, double h = 1e-4) {
        entries.push_back({name, grad_check(fn, point, h, max_coords)});
    }
};

void nn_entries(SuiteBuilder& b) {
    {
        auto x = randn({2, 6, 6}, 1, "conv-in");
        auto w = randn({3, 2, 3, 3}, 2, "conv-w", 0.5);
        auto bias = randn({3}, 3, "conv-b", 0.1);
        b.check("conv2d",
                [](const std::vector<TensorPtr>& in) {
                    return probed_sum(conv2d(in[0], in[1], in[2], 1), 101);
                },
                {x, w, bias});
    }
    {
        auto f = randn({3, 5, 5}, 4, "ddc-f");
        auto u = randn({3, 3, 3}, 5, "ddc-u", 0.5);
        b.check("depthwise_dynamic_conv",
                [](const std::vector<TensorPtr>& in) {
                    return probed_sum(depthwise_dynamic_conv(in[0], in[1]), 102);
                },
                {f, u});
    }
    {
        auto x = randn({8, 3, 3}, 6, "ps-in");
        b.check("pixel_shuffle",
                [](const std::vector<TensorPtr>& in) { return probed_sum(pixel_shuffle(in[0], 2), 103); },
                {x});
    }
    {
        auto f = randn({4, 4, 4}, 7, "msa-f");
        WmsaParams p;
        p.wq = randn({4, 4}, 8, "msa-wq", 0.5);
        p.bq = randn({4}, 9, "msa-bq", 0.1);
        p.wk = randn({4, 4}, 10, "msa-wk", 0.5);
        p.bk = randn({4}, 11, "msa-bk", 0.1);
        p.wv = randn({4, 4}, 12, "msa-wv", 0.5);
        p.bv = randn({4}, 13, "msa-bv", 0.1);
        p.wo = randn({4, 4}, 14, "msa-wo", 0.5);
        p.bo = randn({4}, 15, "msa-bo", 0.1);
        b.check("window_msa",
                [](const std::vector<TensorPtr>& in) {
                    WmsaParams q{in[1], in[2], in[3], in[4], in[5], in[6], in[7], in[8]};
                    return probed_sum(window_msa(in[0], q, 2, 2), 104);
                },
                {f, p.wq, p.bq, p.wk, p.bk, p.wv, p.bv, p.wo, p.bo});
    }
    {
        auto x = randn({5, 4, 4}, 16, "ln-x");
        auto g = randn_off_zero({5}, 17, "ln-g");
        auto beta = randn({5}, 18, "ln-b", 0.2);
        b.check("layer_norm",
                [](const std::vector<TensorPtr>& in) {
                    return probed_sum(layer_norm(in[0], in[1], in[2]), 105);
                },
                {x, g, beta});
    }
    const struct {
        const char* name;
        Activation kind;
        bool off_zero;
    } acts[] = {{"activation_relu", Activation::relu, true},
                {"activation_leaky_relu", Activation::leaky_relu, true},
                {"activation_sigmoid", Activation::sigmoid, false},
                {"activation_gelu", Activation::gelu, false}};
    for (std::uint64_t i = 0; i < 4; ++i) {
        auto x = acts[i].off_zero ? randn_off_zero({24}, 20 + i, "act") : randn({24}, 20 + i, "act");
        const Activation kind = acts[i].kind;
        b.check(acts[i].name,
                [kind](const std::vector<TensorPtr>& in) {
                    return probed_sum(activation(kind, in[0], 0.1), 106);
                },
                {x});
    }
    {
        auto f = randn({3, 4, 5}, 30, "gap");
        b.check("global_avg_pool",
                [](const std::vector<TensorPtr>& in) { return probed_sum(global_avg_pool(in[0]), 107); },
                {f});
    }
    {
        auto x = randn({6}, 31, "lin-x");
        auto w = randn({4, 6}, 32, "lin-w", 0.5);
        auto bias = randn({4}, 33, "lin-b", 0.1);
        b.check("linear",
                [](const std::vector<TensorPtr>& in) {
                    return probed_sum(linear(in[0], in[1], in[2]), 108);
                },
                {x, w, bias});
    }
    {
        auto pred = randn({3, 4, 4}, 34, "loss-p");
        auto target = randn({3, 4, 4}, 35, "loss-t");
        b.check("reconstruction_loss_mse",
                [target](const std::vector<TensorPtr>& in) {
                    return reconstruction_loss(LossKind::mse, in[0], target);
                },
                {pred});
        auto pred2 = add(randn_off_zero({3, 4, 4}, 36, "loss-p2"), target->detached());
        b.check("reconstruction_loss_l1",
                [target](const std::vector<TensorPtr>& in) {
                    return reconstruction_loss(LossKind::l1, in[0], target);
                },
                {pred2->detached()});
    }
    {
        auto mu = randn({8}, 37, "rp-mu");
        auto lv = randn({8}, 38, "rp-lv");
        auto z = randn({8}, 39, "rp-z");
        b.check("gaussian_reparam",
                [z](const std::vector<TensorPtr>& in) {
                    return probed_sum(gaussian_reparam(in[0], in[1], z), 109);
                },
                {mu, lv});
    }
    {
        auto a = randn({10}, 40, "sad-a");
        auto c = randn_off_zero({10}, 41, "sad-gap");
        b.check("sum_abs_diff",
                [](const std::vector<TensorPtr>& in) { return sum_abs_diff(in[0], in[1]); },
                {add(a, c)->detached(), a->detached()});
    }
    {
        auto x = randn({3, 3, 3}, 42, "cs-f");
        auto g = randn({3}, 43, "cs-g");
        b.check("channel_scale",
                [](const std::vector<TensorPtr>& in) {
                    return probed_sum(channel_scale(in[0], in[1]), 110);
                },
                {x, g});
        auto s = randn({1}, 44, "sb-s");
        b.check("scale_by",
                [](const std::vector<TensorPtr>& in) { return probed_sum(scale_by(in[0], in[1]), 111); },
                {x->detached(), s});
    }
    {
        // interior points only; the clamp kink is not differentiable
        auto x = randn({12}, 45, "clamp", 0.4);
        b.check("clamp",
                [](const std::vector<TensorPtr>& in) {
                    return probed_sum(clamp(in[0], -2.0, 2.0), 112);
                },
                {x});
    }
}

img::ImageBuffer random_image(int h, int w, std::uint64_t idx, const char* purpose) {
    DeterministicRng rng(kSuiteSeed, idx, purpose);
    img::ImageBuffer im = img::ImageBuffer::zeros(3, h, w);
    for (double& v : im.data) v = rng.next_uniform();
    return im;
}

void aude_entries(SuiteBuilder& b) {
    const int d = 6;
    {
        auto mu1 = randn({d}, 50, "us-mu1");
        auto lv1 = randn({d}, 51, "us-lv1");
        auto mu2 = randn({d}, 52, "us-mu2");
        auto lv2 = randn({d}, 53, "us-lv2");
        auto hw = randn({1, 2 * d}, 54, "us-hw", 0.5);
        auto hb = randn({1}, 55, "us-hb", 0.1);
        auto z1 = randn({d}, 56, "us-z1");
        auto z2 = randn({d}, 57, "us-z2");
        b.check("us_loss",
                [z1, z2](const std::vector<TensorPtr>& in) {
                    aude::UncertainUDR s1, s2;
                    s1.mu = in[0];
                    s1.logvar = in[1];
                    s2.mu = in[2];
                    s2.logvar = in[3];
                    s1.alpha = activation(Activation::sigmoid,
                                          linear(concat(s1.mu, s1.logvar), in[4], in[5]));
                    s2.alpha = activation(Activation::sigmoid,
                                          linear(concat(s2.mu, s2.logvar), in[4], in[5]));
                    aude::UncertaintyLossConfig cfg;
                    return aude::us_loss(s1, s2, z1, z2, cfg).loss;
                },
                {mu1, lv1, mu2, lv2, hw, hb});
    }
    {
        sr::SRConfig cfg;
        cfg.channels = 4;
        cfg.n_vddc = 1;
        cfg.habs_per_block = 1;
        cfg.window = 4;
        cfg.heads = 2;
        UsrModel model = make_model(cfg);
        init_model(model, 123);
        const img::ImageBuffer patch = random_image(16, 16, 60, "de-patch");
        auto params = de_side_parameters(model);
        std::vector<TensorPtr> point;
        for (const auto& p : params) point.push_back(p.tensor);
        b.check("de_forward",
                [&model, patch](const std::vector<TensorPtr>&) {
                    const auto s = aude::de_forward(patch, model.de, model.contrast);
                    auto v = concat(concat(s.mu, s.logvar), s.alpha);
                    return probed_sum(v, 113);
                },
                point, 120, 1e-5);
    }
}

void vddc_entries(SuiteBuilder& b) {
    sr::SRConfig cfg;
    cfg.channels = 4;
    cfg.n_vddc = 1;
    cfg.habs_per_block = 1;
    cfg.window = 4;
    cfg.heads = 2;
    cfg.scale = 2;
    {
        auto u = randn({cfg.udr_dim()}, 70, "ais-u");
        auto w = randn({cfg.udr_dim()}, 71, "ais-w", 0.3);
        auto bias = randn({1}, 72, "ais-b", 0.1);
        b.check("ais_gamma",
                [](const std::vector<TensorPtr>& in) {
                    return sr::ais_gamma(in[0], in[1], in[2]);
                },
                {u, w, bias});
    }
    UsrModel model = make_model(cfg);
    init_model(model, 321);
    {
        auto feat = randn({cfg.channels, 8, 8}, 73, "hab-f", 0.5);
        const auto& hab = model.srnet.blocks[0].habs[0];
        std::vector<TensorPtr> point{feat,
                                     hab.ln1.gamma,
                                     hab.ln1.beta,
                                     hab.msa.wq,
                                     hab.msa.wv,
                                     hab.msa.wo,
                                     hab.cab.squeeze.weight,
                                     hab.cab.excite.weight,
                                     hab.mlp.fc1.weight,
                                     hab.mlp.fc2.weight};
        b.check("hab_forward",
                [&model, &cfg](const std::vector<TensorPtr>& in) {
                    return probed_sum(sr::hab_forward(in[0], model.srnet.blocks[0].habs[0], cfg), 114);
                },
                point, 150, 1e-5);
    }
    {
        auto feat = randn({cfg.channels, 8, 8}, 74, "vddc-f", 0.5);
        auto u = randn({cfg.udr_dim()}, 75, "vddc-u", 0.5);
        const auto& blk = model.srnet.blocks[0];
        std::vector<TensorPtr> point{feat, u, blk.ais_weight, blk.ais_bias, blk.tail.weight};
        b.check("vddc_forward",
                [&model, &cfg](const std::vector<TensorPtr>& in) {
                    return probed_sum(sr::vddc_forward(in[0], in[1], model.srnet.blocks[0], cfg), 115);
                },
                point, 150, 1e-5);
    }
    {
        const img::ImageBuffer lr = random_image(8, 8, 76, "sr-lr");
        auto u = randn({cfg.udr_dim()}, 77, "sr-u", 0.5);
        auto params = sr_side_parameters(model);
        std::vector<TensorPtr> point{u};
        for (const auto& p : params) point.push_back(p.tensor);
        b.check("usr_forward",
                [&model, &cfg, lr](const std::vector<TensorPtr>& in) {
                    return probed_sum(sr::usr_forward(lr, in[0], model.srnet, cfg), 116);
                },
                point, 150, 1e-5);
    }
    {
        // end-to-end stage-3-style objective plus the stage-2 loss
        sr::SRConfig ccfg;
        ccfg.channels = 8;
        ccfg.n_vddc = 1;
        ccfg.habs_per_block = 1;
        ccfg.window = 4;
        ccfg.heads = 2;
        ccfg.scale = 2;
        UsrModel cmodel = make_model(ccfg);
        init_model(cmodel, 777);
        const img::ImageBuffer lr = random_image(16, 16, 80, "comp-lr");
        const img::ImageBuffer hr = random_image(32, 32, 81, "comp-hr");
        const int d = ccfg.udr_dim();
        auto z1 = randn({d}, 82, "comp-z1");
        auto z2 = randn({d}, 83, "comp-z2");
        auto params = all_parameters(cmodel);
        std::vector<TensorPtr> point;
        for (const auto& p : params) point.push_back(p.tensor);
        b.check("usr_usloss_composite",
                [&cmodel, &ccfg, lr, hr, z1, z2](const std::vector<TensorPtr>&) {
                    auto udr = aude::infer_udr(lr, cmodel.de, cmodel.contrast);
                    auto pred = sr::usr_forward(lr, udr, cmodel.srnet, ccfg);
                    auto rec = reconstruction_loss(LossKind::l1, pred, img::image_to_tensor(hr));
                    nn::DeterministicRng prng(kSuiteSeed, 84, "comp-pair");
                    const auto pair = aude::sample_patch_pair(lr, 16, prng);
                    const auto s1 = aude::de_forward(pair.patch1, cmodel.de, cmodel.contrast);
                    const auto s2 = aude::de_forward(pair.patch2, cmodel.de, cmodel.contrast);
                    aude::UncertaintyLossConfig lcfg;
                    const auto us = aude::us_loss(s1, s2, z1, z2, lcfg);
                    return add(rec, us.loss);
                },
                point, 200, 1e-5);
    }
}

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_suite(const std::string& module) {
    if (module != "all" && module != "nn" && module != "aude" && module != "vddc")
        throw ParameterError("gradcheck module must be one of all|nn|aude|vddc");
    SuiteBuilder b;
    if (module == "all" || module == "nn") nn_entries(b);
    if (module == "all" || module == "aude") aude_entries(b);
    if (module == "all" || module == "vddc") vddc_entries(b);
    return b.entries;
}

}  // namespace usr::nn
