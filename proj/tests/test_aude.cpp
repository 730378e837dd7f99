#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "usr/gradcheck.hpp"
#include "usr/model.hpp"
#include "usr/pipeline.hpp"

using namespace usr;
using nn::Tensor;
using nn::TensorPtr;

namespace {

img::ImageBuffer seeded_image(int h, int w, std::uint64_t idx) {
    nn::DeterministicRng rng(31, idx, "img");
    img::ImageBuffer im = img::ImageBuffer::zeros(3, h, w);
    for (double& v : im.data) v = rng.next_uniform();
    return im;
}

aude::UncertainUDR random_stats(int d, std::uint64_t idx) {
    nn::DeterministicRng rng(77, idx, "stats");
    aude::UncertainUDR s;
    auto mu = Tensor::zeros({d});
    auto lv = Tensor::zeros({d});
    for (double& v : mu->data) v = rng.next_gaussian();
    for (double& v : lv->data) v = rng.next_uniform(-3.0, 1.0);
    s.mu = mu;
    s.logvar = lv;
    s.alpha = Tensor::scalar(rng.next_uniform(0.05, 0.95));
    return s;
}

TensorPtr gaussian_vec(int n, std::uint64_t idx) {
    nn::DeterministicRng rng(78, idx, "z");
    auto z = Tensor::zeros({n});
    for (double& v : z->data) v = rng.next_gaussian();
    return z;
}

}  // namespace

TEST_CASE("de_forward: zero weights give (0, 0, 0.5); shapes and determinism hold") {
    sr::SRConfig cfg;
    cfg.channels = 4;
    UsrModel model = make_model(cfg);  // all-zero weights
    const int d = cfg.udr_dim();

    const img::ImageBuffer patch = seeded_image(16, 16, 0);
    const auto s = aude::de_forward(patch, model.de, model.contrast);
    CHECK(s.mu->shape == nn::Shape{d});
    CHECK(s.logvar->shape == nn::Shape{d});
    CHECK(s.alpha->size() == 1);
    for (double v : s.mu->data) CHECK(v == 0.0);
    for (double v : s.logvar->data) CHECK(v == 0.0);
    CHECK(s.alpha->value() == doctest::Approx(0.5));

    init_model(model, 5);
    const auto a = aude::de_forward(patch, model.de, model.contrast);
    const auto b = aude::de_forward(patch, model.de, model.contrast);
    CHECK(a.mu->data == b.mu->data);
    CHECK(a.logvar->data == b.logvar->data);
    CHECK(a.alpha->data == b.alpha->data);
    CHECK(a.alpha->value() > 0.0);
    CHECK(a.alpha->value() < 1.0);

    CHECK_THROWS_AS(aude::de_forward(seeded_image(8, 8, 1), model.de, model.contrast), DataError);
}

TEST_CASE("de structure: 5 blocks at 32 channels, head widths 32-64-64-2d") {
    const auto p = aude::make_de_params(36);
    CHECK(p.blocks.size() == 5);
    CHECK(p.stem.weight->shape == nn::Shape{32, 3, 3, 3});
    CHECK(p.blocks[0].conv1.weight->shape == nn::Shape{32, 32, 3, 3});
    CHECK(p.fc1.weight->shape == nn::Shape{64, 32});
    CHECK(p.fc2.weight->shape == nn::Shape{64, 64});
    CHECK(p.fc3.weight->shape == nn::Shape{72, 64});
    const auto c = aude::make_contrast_params(36);
    CHECK(c.alpha_head.weight->shape == nn::Shape{1, 72});
}

TEST_CASE("sample_udr: z=0 gives mu, logvar=0 gives mu+z, variance tracks exp(logvar)") {
    const auto s = random_stats(8, 0);
    CHECK(aude::sample_udr(s, Tensor::zeros({8}))->data == s.mu->data);

    aude::UncertainUDR unit = s;
    unit.logvar = Tensor::zeros({8});
    const auto z = gaussian_vec(8, 1);
    const auto u = aude::sample_udr(unit, z);
    for (int i = 0; i < 8; ++i)
        CHECK(u->data[static_cast<std::size_t>(i)] ==
              doctest::Approx(s.mu->data[static_cast<std::size_t>(i)] +
                              z->data[static_cast<std::size_t>(i)]));

    // empirical per-coordinate variance over 10^4 draws within 5% of exp(logvar)
    nn::DeterministicRng rng(13, 0, "var");
    const int n = 10000;
    std::vector<double> sum(8, 0.0), sq(8, 0.0);
    for (int k = 0; k < n; ++k) {
        auto zz = Tensor::zeros({8});
        for (double& v : zz->data) v = rng.next_gaussian();
        const auto uu = aude::sample_udr(s, zz);
        for (int i = 0; i < 8; ++i) {
            const double v = uu->data[static_cast<std::size_t>(i)];
            sum[static_cast<std::size_t>(i)] += v;
            sq[static_cast<std::size_t>(i)] += v * v;
        }
    }
    for (int i = 0; i < 8; ++i) {
        const double mean = sum[static_cast<std::size_t>(i)] / n;
        const double var = sq[static_cast<std::size_t>(i)] / n - mean * mean;
        const double want = std::exp(s.logvar->data[static_cast<std::size_t>(i)]);
        CHECK(var == doctest::Approx(want).epsilon(0.05));
    }
}

TEST_CASE("us_loss identities (A4 shape): zero at equal inputs, l_ur zero at equal alpha, swap") {
    aude::UncertaintyLossConfig cfg;
    for (std::uint64_t t = 0; t < 100; ++t) {
        const int d = 2 + static_cast<int>(t % 7);
        const auto s1 = random_stats(d, 200 + t);
        const auto s2 = random_stats(d, 300 + t);
        const auto z1 = gaussian_vec(d, 400 + t);
        const auto z2 = gaussian_vec(d, 500 + t);

        const auto same = aude::us_loss(s1, s1, z1, z1, cfg);
        CHECK(std::abs(same.loss->value()) <= 1e-12);
        CHECK(std::abs(same.l_u->value()) <= 1e-12);
        CHECK(std::abs(same.l_ur->value()) <= 1e-12);

        aude::UncertainUDR s2e = s2;
        s2e.alpha = s1.alpha;
        CHECK(std::abs(aude::us_loss(s1, s2e, z1, z2, cfg).l_ur->value()) <= 1e-12);

        const auto ab = aude::us_loss(s1, s2, z1, z2, cfg);
        const auto ba = aude::us_loss(s2, s1, z2, z1, cfg);
        CHECK(std::abs(ab.loss->value() - ba.loss->value()) <= 1e-12);
        CHECK(std::abs(ab.l_u->value() - ba.l_u->value()) <= 1e-12);
        CHECK(std::abs(ab.l_ur->value() - ba.l_ur->value()) <= 1e-12);
    }
}

TEST_CASE("us_loss hand case: unit alpha, z=0, separated means") {
    aude::UncertainUDR s1, s2;
    s1.mu = nn::Tensor::from_values({2}, {1.0, 0.0});
    s1.logvar = nn::Tensor::full({2}, -12.0);
    s1.alpha = Tensor::scalar(1.0);
    s2.mu = Tensor::zeros({2});
    s2.logvar = nn::Tensor::full({2}, -12.0);
    s2.alpha = Tensor::scalar(1.0);
    const auto z = Tensor::zeros({2});
    aude::UncertaintyLossConfig cfg;  // kT = 1, lambda = 0.1
    const auto r = aude::us_loss(s1, s2, z, z, cfg);
    CHECK(r.l_u->value() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.l_ur->value() == doctest::Approx(0.0));
    CHECK(r.loss->value() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("us_loss scales: kT divides l_u, lambda weights l_ur, num_samples averages") {
    const auto s1 = random_stats(6, 600);
    const auto s2 = random_stats(6, 601);
    const auto z1 = gaussian_vec(6, 602);
    const auto z2 = gaussian_vec(6, 603);
    aude::UncertaintyLossConfig base;
    const auto r1 = aude::us_loss(s1, s2, z1, z2, base);

    aude::UncertaintyLossConfig hot = base;
    hot.kT = 2.0;
    const auto r2 = aude::us_loss(s1, s2, z1, z2, hot);
    CHECK(r2.l_u->value() == doctest::Approx(r1.l_u->value() / 2.0));

    aude::UncertaintyLossConfig weighted = base;
    weighted.lambda = 0.7;
    const auto r3 = aude::us_loss(s1, s2, z1, z2, weighted);
    CHECK(r3.loss->value() ==
          doctest::Approx(r3.l_u->value() - 0.7 * r3.l_ur->value()).epsilon(1e-12));

    aude::UncertaintyLossConfig multi = base;
    multi.num_samples = 2;
    auto z1d = nn::Tensor::zeros({12});
    auto z2d = nn::Tensor::zeros({12});
    for (int i = 0; i < 6; ++i) {
        z1d->data[static_cast<std::size_t>(i)] = z1->data[static_cast<std::size_t>(i)];
        z1d->data[static_cast<std::size_t>(i + 6)] = z1->data[static_cast<std::size_t>(i)];
        z2d->data[static_cast<std::size_t>(i)] = z2->data[static_cast<std::size_t>(i)];
        z2d->data[static_cast<std::size_t>(i + 6)] = z2->data[static_cast<std::size_t>(i)];
    }
    const auto r4 = aude::us_loss(s1, s2, z1d, z2d, multi);
    CHECK(r4.l_u->value() == doctest::Approx(r1.l_u->value()).epsilon(1e-12));

    CHECK_THROWS_AS(aude::us_loss(s1, s2, z1, gaussian_vec(5, 604), base), DimensionError);
}

TEST_CASE("us_loss gradients reach mu, logvar, and the alpha head") {
    const int d = 5;
    auto mu1 = gaussian_vec(d, 700);
    auto lv1 = gaussian_vec(d, 701);
    auto mu2 = gaussian_vec(d, 702);
    auto lv2 = gaussian_vec(d, 703);
    auto hw = gaussian_vec(2 * d, 704);
    auto hb = gaussian_vec(1, 705);
    const auto z1 = gaussian_vec(d, 706);
    const auto z2 = gaussian_vec(d, 707);

    const double err = nn::grad_check(
        [z1, z2, d](const std::vector<TensorPtr>& in) {
            aude::UncertainUDR s1, s2;
            s1.mu = in[0];
            s1.logvar = in[1];
            s2.mu = in[2];
            s2.logvar = in[3];
            auto head_w = nn::reshape(in[4], {1, 2 * d});
            s1.alpha = nn::activation(nn::Activation::sigmoid,
                                      nn::linear(nn::concat(s1.mu, s1.logvar), head_w, in[5]));
            s2.alpha = nn::activation(nn::Activation::sigmoid,
                                      nn::linear(nn::concat(s2.mu, s2.logvar), head_w, in[5]));
            aude::UncertaintyLossConfig cfg;
            return aude::us_loss(s1, s2, z1, z2, cfg).loss;
        },
        {mu1, lv1, mu2, lv2, hw, hb});
    CHECK(err <= 1e-5);
}

TEST_CASE("alpha-head logit shifts keep the l_ur zero point") {
    const auto s1 = random_stats(4, 800);
    for (double shift : {-3.0, 0.0, 2.5}) {
        const double logit = 0.3 + shift;
        const double a = 1.0 / (1.0 + std::exp(-logit));
        aude::UncertainUDR p = s1, q = random_stats(4, 801);
        p.alpha = Tensor::scalar(a);
        q.alpha = Tensor::scalar(a);
        const auto r = aude::us_loss(p, q, gaussian_vec(4, 802), gaussian_vec(4, 803), {});
        CHECK(r.l_ur->value() == doctest::Approx(0.0));
    }
}

TEST_CASE("sample_patch_pair: exact-size image, determinism, offset coverage") {
    const img::ImageBuffer im = seeded_image(48, 48, 10);

    nn::DeterministicRng r1(9, 0, "pair");
    const auto exact = aude::sample_patch_pair(im.crop(0, 0, 32, 32), 32, r1);
    CHECK(img::bit_equal(exact.patch1, exact.patch2));
    CHECK(exact.y1 == 0);
    CHECK(exact.x2 == 0);

    nn::DeterministicRng r2(9, 1, "pair"), r3(9, 1, "pair");
    const auto a = aude::sample_patch_pair(im, 32, r2);
    const auto b = aude::sample_patch_pair(im, 32, r3);
    CHECK(a.y1 == b.y1);
    CHECK(a.x1 == b.x1);
    CHECK(a.y2 == b.y2);
    CHECK(a.x2 == b.x2);

    const img::ImageBuffer big = seeded_image(64, 64, 11);
    nn::DeterministicRng r4(9, 2, "pair");
    std::set<std::pair<int, int>> offsets;
    for (int i = 0; i < 1000; ++i) {
        const auto pp = aude::sample_patch_pair(big, 48, r4);
        offsets.insert({pp.y1, pp.x1});
        offsets.insert({pp.y2, pp.x2});
    }
    CHECK(offsets.size() >= 50);

    nn::DeterministicRng r5(9, 3, "pair");
    CHECK_THROWS_AS(aude::sample_patch_pair(im.crop(0, 0, 16, 16), 32, r5), DataError);
}

TEST_CASE("infer_udr equals alpha*mu of de_forward") {
    sr::SRConfig cfg;
    cfg.channels = 4;
    UsrModel zero = make_model(cfg);
    const img::ImageBuffer lr = seeded_image(24, 24, 20);
    const auto z = aude::infer_udr(lr, zero.de, zero.contrast);
    CHECK(z->size() == cfg.udr_dim());
    for (double v : z->data) CHECK(v == 0.0);  // 0.5 * 0

    UsrModel model = make_model(cfg);
    init_model(model, 3);
    const auto u = aude::infer_udr(lr, model.de, model.contrast);
    const auto s = aude::de_forward(lr, model.de, model.contrast);
    for (int i = 0; i < u->size(); ++i)
        CHECK(u->data[static_cast<std::size_t>(i)] ==
              doctest::Approx(s.alpha->value() * s.mu->data[static_cast<std::size_t>(i)])
                  .epsilon(1e-12));
}
