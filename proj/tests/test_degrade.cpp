#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "usr/metrics.hpp"
#include "usr/pipeline.hpp"

using namespace usr;
using degrade::ImageBuffer;

namespace {

ImageBuffer seeded_image(int c, int h, int w, std::uint64_t idx) {
    nn::DeterministicRng rng(99, idx, "img");
    ImageBuffer im = ImageBuffer::zeros(c, h, w);
    for (double& v : im.data) v = rng.next_uniform();
    return im;
}

}  // namespace

TEST_CASE("gaussian kernels are normalized, symmetric when isotropic") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        nn::DeterministicRng rng(1, s, "k");
        const int size = 7 + 2 * static_cast<int>(rng.next_int(0, 7));
        const auto k = degrade::make_gaussian_kernel(size, rng.next_uniform(0.2, 3.0),
                                                     rng.next_uniform(0.2, 3.0),
                                                     rng.next_uniform(0.0, 3.14));
        double sum = 0.0;
        for (double w : k.weights) {
            CHECK(w >= 0.0);
            sum += w;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }

    const auto iso = degrade::make_gaussian_kernel(9, 1.3, 1.3, 0.7);
    for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 9; ++x) {
            CHECK(iso.at(y, x) == doctest::Approx(iso.at(x, y)).epsilon(1e-12));
            CHECK(iso.at(y, x) == doctest::Approx(iso.at(x, 8 - y)).epsilon(1e-12));  // 90 deg
        }

    // direct grid evaluation of the normalized gaussian
    const auto k21 = degrade::make_gaussian_kernel(21, 1.0, 1.0, 0.0);
    double denom = 0.0;
    for (int y = -10; y <= 10; ++y)
        for (int x = -10; x <= 10; ++x) denom += std::exp(-0.5 * (x * x + y * y));
    CHECK(k21.at(10, 10) == doctest::Approx(1.0 / denom).epsilon(1e-12));

    CHECK_THROWS_AS(degrade::make_gaussian_kernel(8, 1.0, 1.0, 0.0), ParameterError);
    CHECK_THROWS_AS(degrade::make_gaussian_kernel(9, 0.05, 1.0, 0.0), ParameterError);
}

TEST_CASE("apply_blur preserves constants, delta kernels, and matches the oracle") {
    const auto k = degrade::make_gaussian_kernel(7, 0.8, 2.0, 0.4);
    const ImageBuffer c = ImageBuffer::constant(3, 16, 16, 0.42);
    const ImageBuffer bc = degrade::apply_blur(c, k);
    for (double v : bc.data) CHECK(v == doctest::Approx(0.42).epsilon(1e-12));

    degrade::BlurKernel delta;
    delta.size = 7;
    delta.sigma_x = delta.sigma_y = 1.0;
    delta.weights.assign(49, 0.0);
    delta.weights[24] = 1.0;
    const ImageBuffer x = seeded_image(1, 16, 16, 1);
    CHECK(img::bit_equal(degrade::apply_blur(x, delta), x));

    for (std::uint64_t s = 0; s < 5; ++s) {
        const ImageBuffer im = seeded_image(1, 16, 16, 10 + s);
        nn::DeterministicRng rng(2, s, "kb");
        const auto kb = degrade::make_gaussian_kernel(7 + 2 * static_cast<int>(rng.next_int(0, 3)),
                                                      rng.next_uniform(0.2, 3.0),
                                                      rng.next_uniform(0.2, 3.0),
                                                      rng.next_uniform(0.0, 3.0));
        const ImageBuffer out = degrade::apply_blur(im, kb);
        const auto ref = oracle::blur_ref(im, kb);
        for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(out.data[i] - ref[i]) < 1e-12);
    }

    const auto big = degrade::make_gaussian_kernel(17, 1.0, 1.0, 0.0);
    CHECK_THROWS_AS(degrade::apply_blur(seeded_image(1, 12, 12, 3), big), ParameterError);
}

TEST_CASE("resize identities, constants, and the area block average") {
    const ImageBuffer x = seeded_image(3, 12, 12, 20);
    for (auto mode : {degrade::ResizeMode::bicubic, degrade::ResizeMode::bilinear,
                      degrade::ResizeMode::area}) {
        const ImageBuffer same = degrade::resize(x, 12, 12, mode);
        for (std::size_t i = 0; i < x.data.size(); ++i)
            CHECK(std::abs(same.data[i] - x.data[i]) < 1e-9);

        const ImageBuffer c = ImageBuffer::constant(3, 16, 16, 0.37);
        const ImageBuffer rc = degrade::resize(c, 9, 13, mode);
        for (double v : rc.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-9));
    }

    // 8x8 -> 2x2 area: each output is the mean of its 4x4 block
    ImageBuffer ramp = ImageBuffer::zeros(1, 8, 8);
    for (int y = 0; y < 8; ++y)
        for (int xx = 0; xx < 8; ++xx) ramp.at(0, y, xx) = (y * 8 + xx) / 64.0;
    const ImageBuffer out = degrade::resize(ramp, 2, 2, degrade::ResizeMode::area);
    for (int by = 0; by < 2; ++by)
        for (int bx = 0; bx < 2; ++bx) {
            double mean = 0.0;
            for (int y = 0; y < 4; ++y)
                for (int xx = 0; xx < 4; ++xx) mean += ramp.at(0, by * 4 + y, bx * 4 + xx);
            CHECK(out.at(0, by, bx) == doctest::Approx(mean / 16.0).epsilon(1e-12));
        }
}

TEST_CASE("add_noise: sigma 0 identity, determinism, empirical std") {
    const ImageBuffer x = seeded_image(3, 16, 16, 30);
    nn::DeterministicRng r0(5, 0, "n");
    CHECK(img::bit_equal(degrade::add_noise(x, degrade::NoiseKind::gaussian_color, 0.0, r0), x));

    nn::DeterministicRng r1(5, 1, "n"), r2(5, 1, "n");
    const auto n1 = degrade::add_noise(x, degrade::NoiseKind::gaussian_gray, 0.05, r1);
    const auto n2 = degrade::add_noise(x, degrade::NoiseKind::gaussian_gray, 0.05, r2);
    CHECK(img::bit_equal(n1, n2));

    // gray noise shares one draw across channels (mid-gray input, no clamping)
    const ImageBuffer mid = ImageBuffer::constant(3, 16, 16, 0.5);
    nn::DeterministicRng rg(5, 9, "n");
    const auto ng = degrade::add_noise(mid, degrade::NoiseKind::gaussian_gray, 0.02, rg);
    for (int y = 0; y < 16; ++y)
        for (int xx = 0; xx < 16; ++xx) {
            CHECK(ng.at(0, y, xx) == ng.at(1, y, xx));
            CHECK(ng.at(0, y, xx) == ng.at(2, y, xx));
        }

    const ImageBuffer half = ImageBuffer::constant(3, 64, 64, 0.5);
    nn::DeterministicRng r3(5, 2, "n");
    const auto noisy = degrade::add_noise(half, degrade::NoiseKind::gaussian_color, 0.1, r3);
    double sq = 0.0;
    for (std::size_t i = 0; i < noisy.data.size(); ++i) {
        const double d = noisy.data[i] - 0.5;
        sq += d * d;
    }
    const double std_e = std::sqrt(sq / static_cast<double>(noisy.data.size()));
    CHECK(std_e > 0.095);
    CHECK(std_e < 0.105);

    nn::DeterministicRng r4(5, 3, "n");
    CHECK_THROWS_AS(degrade::add_noise(x, degrade::NoiseKind::gaussian_gray, 0.5, r4),
                    ParameterError);
}

TEST_CASE("jpeg: neutral constant preserved, q100 nearly lossless, quality ordering") {
    const ImageBuffer gray = ImageBuffer::constant(3, 16, 16, 128.0 / 255.0);
    const ImageBuffer out = degrade::jpeg_degrade(gray, 50);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        CHECK(out.data[i] == doctest::Approx(gray.data[i]).epsilon(1e-12));

    ImageBuffer smooth = ImageBuffer::zeros(3, 32, 32);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) smooth.at(c, y, x) = (x + y) / 62.0;
    const ImageBuffer q100 = degrade::jpeg_degrade(smooth, 100);
    double worst = 0.0;
    for (std::size_t i = 0; i < q100.data.size(); ++i)
        worst = std::max(worst, std::abs(q100.data[i] - smooth.data[i]));
    CHECK(worst <= 2.0 / 255.0);

    const ImageBuffer tex = seeded_image(3, 32, 32, 40);
    const double p10 = eval::psnr(tex, degrade::jpeg_degrade(tex, 10));
    const double p50 = eval::psnr(tex, degrade::jpeg_degrade(tex, 50));
    const double p95 = eval::psnr(tex, degrade::jpeg_degrade(tex, 95));
    CHECK(p10 < p50);
    CHECK(p50 < p95);

    CHECK_THROWS_AS(degrade::jpeg_degrade(tex, 3), ParameterError);
}

TEST_CASE("jpeg 8x8 block path matches the O(n^4) DCT oracle") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        nn::DeterministicRng rng(7, s, "block");
        double block[64], got[64], want[64];
        for (double& v : block) v = rng.next_uniform(0.0, 255.0);
        const auto q = degrade::jpeg_quant_table(static_cast<int>(rng.next_int(5, 100)), s % 2 == 0);
        degrade::jpeg_block_roundtrip(block, got, q);
        oracle::jpeg_block_ref(block, want, q);
        for (int i = 0; i < 64; ++i) CHECK(std::abs(got[i] - want[i]) < 1e-9);
    }
}

TEST_CASE("jpeg quality scaling follows the libjpeg rule") {
    const auto q50 = degrade::jpeg_quant_table(50, true);
    CHECK(q50[0] == 16);  // scale 100%
    const auto q25 = degrade::jpeg_quant_table(25, true);
    CHECK(q25[0] == (16 * 200 + 50) / 100);
    const auto q100 = degrade::jpeg_quant_table(100, true);
    for (int v : q100) CHECK(v == 1);  // floor at 1
}

TEST_CASE("degrade_pipeline: constants, replay, record bookkeeping") {
    degrade::DegradationSpec spec;
    degrade::BlurRange br;
    br.size_min = br.size_max = 7;
    spec.stages = {br, degrade::ResizeRange{}};
    spec.final_scale = 4;
    spec.mode_label = "custom";

    const ImageBuffer c = ImageBuffer::constant(3, 32, 32, 0.6);
    nn::DeterministicRng rng(11, 0, "degrade");
    auto [lr, rec] = degrade::degrade_pipeline(c, spec, rng);
    CHECK(lr.height == 8);
    CHECK(lr.width == 8);
    for (double v : lr.data) CHECK(v == doctest::Approx(0.6).epsilon(1e-9));

    // replay any bnj pipeline bit-exactly
    const ImageBuffer hr = degrade::synth_hr_image(64, 3, 0);
    nn::DeterministicRng rng2(3, 0, "degrade");
    auto [lr2, rec2] = degrade::degrade_pipeline(hr, degrade::preset_spec("bnj"), rng2);
    const ImageBuffer replayed = degrade::replay_record(hr, rec2);
    CHECK(img::bit_equal(lr2, replayed));

    // JSON round trip preserves the record exactly
    const auto rec3 = degrade::record_from_json(degrade::record_to_json(rec2));
    CHECK(img::bit_equal(degrade::replay_record(hr, rec3), lr2));

    // one kernel, one sigma, one quality for a first-order bnj record
    int blurs = 0, noises = 0, jpegs = 0, resizes = 0;
    for (const auto& op : rec2.ops) {
        blurs += std::holds_alternative<degrade::BlurOp>(op);
        noises += std::holds_alternative<degrade::NoiseOp>(op);
        jpegs += std::holds_alternative<degrade::JpegOp>(op);
        resizes += std::holds_alternative<degrade::ResizeOp>(op);
    }
    CHECK(blurs == 1);
    CHECK(noises == 1);
    CHECK(jpegs == 1);
    CHECK(resizes == 1);

    CHECK_THROWS_AS(
        [&] {
            nn::DeterministicRng r(0, 0, "degrade");
            degrade::degrade_pipeline(ImageBuffer::constant(3, 30, 30, 0.5),
                                      degrade::preset_spec("bnj"), r);
        }(),
        DataError);
}

TEST_CASE("all degradation stages keep values in [0,1]") {
    const ImageBuffer hr = degrade::synth_hr_image(64, 17, 4);
    for (const char* mode : {"bnj", "bn", "bj", "full"}) {
        nn::DeterministicRng rng(21, 5, "degrade");
        auto [lr, rec] = degrade::degrade_pipeline(hr, degrade::preset_spec(mode), rng);
        for (double v : lr.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("synth_dataset determinism, range, and dimensions") {
    const auto a = degrade::synth_dataset(8, 64, "bnj", 7);
    const auto b = degrade::synth_dataset(8, 64, "bnj", 7);
    REQUIRE(a.size() == 8);
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(img::bit_equal(a[i].hr, b[i].hr));
        CHECK(img::bit_equal(a[i].lr, b[i].lr));
        CHECK(a[i].lr.height == 16);
        CHECK(a[i].lr.width == 16);
        for (double v : a[i].hr.data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    const auto mixed = degrade::synth_dataset(6, 64, "mix", 7);
    CHECK(mixed[0].record.mode == "bnj");
    CHECK(mixed[1].record.mode == "bn");
    CHECK(mixed[2].record.mode == "bj");
    CHECK(mixed[3].record.mode == "bnj");

    const auto seeded_differently = degrade::synth_dataset(2, 64, "bnj", 8);
    CHECK_FALSE(img::bit_equal(a[0].hr, seeded_differently[0].hr));
}
