#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "usr/degrade.hpp"
#include "usr/diagnostics.hpp"
#include "usr/pipeline.hpp"

using namespace usr;
using img::ImageBuffer;

namespace {

ImageBuffer seeded_image(int h, int w, std::uint64_t idx) {
    nn::DeterministicRng rng(61, idx, "img");
    ImageBuffer im = ImageBuffer::zeros(3, h, w);
    for (double& v : im.data) v = rng.next_uniform();
    return im;
}

}  // namespace

TEST_CASE("psnr: cap, closed form, symmetry, noise monotonicity") {
    const ImageBuffer a = seeded_image(32, 32, 0);
    CHECK(eval::psnr(a, a) == 99.0);

    const ImageBuffer c3 = ImageBuffer::constant(3, 16, 16, 0.3);
    const ImageBuffer c4 = ImageBuffer::constant(3, 16, 16, 0.4);
    CHECK(eval::psnr(c3, c4) == doctest::Approx(20.0).epsilon(1e-6));

    const ImageBuffer b = seeded_image(32, 32, 1);
    CHECK(eval::psnr(a, b) == doctest::Approx(eval::psnr(b, a)).epsilon(1e-12));

    const ImageBuffer base = ImageBuffer::constant(3, 64, 64, 0.5);
    double prev = 1e9;
    for (double sigma : {0.01, 0.05, 0.1}) {
        nn::DeterministicRng rng(3, 0, "noise");
        const auto noisy = degrade::add_noise(base, degrade::NoiseKind::gaussian_color, sigma, rng);
        const double p = eval::psnr(base, noisy);
        CHECK(p < prev);
        prev = p;
    }

    CHECK_THROWS_AS(eval::psnr(a, ImageBuffer::constant(3, 8, 8, 0.0)), DimensionError);
}

TEST_CASE("ssim: identity, symmetry, inversion, size guard") {
    const ImageBuffer a = seeded_image(32, 32, 2);
    CHECK(eval::ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));

    const ImageBuffer b = seeded_image(32, 32, 3);
    CHECK(eval::ssim(a, b) == doctest::Approx(eval::ssim(b, a)).epsilon(1e-12));
    CHECK(eval::ssim(a, b) <= 1.0);

    ImageBuffer inv = a;
    for (double& v : inv.data) v = 1.0 - v;
    CHECK(eval::ssim(a, inv) < 0.5);

    CHECK_THROWS_AS(eval::ssim(ImageBuffer::constant(3, 9, 9, 0.5), ImageBuffer::constant(3, 9, 9, 0.5)),
                    DataError);
}

TEST_CASE("stability metric: constant stub gives 0, doubling quadruples the score") {
    const ImageBuffer image = seeded_image(48, 48, 4);

    const eval::UdrFn constant_fn = [](const ImageBuffer&) {
        return std::vector<double>{1.0, 2.0, 3.0};
    };
    nn::DeterministicRng r1(5, 0, "st");
    const auto rep0 = eval::stability_metric(constant_fn, image, 8, 16, r1);
    CHECK(rep0.instability == 0.0);
    CHECK(rep0.dims == 3);
    CHECK(rep0.mean == std::vector<double>{1.0, 2.0, 3.0});

    const eval::UdrFn patch_fn = [](const ImageBuffer& p) {
        double s = 0.0, sq = 0.0;
        for (double v : p.data) {
            s += v;
            sq += v * v;
        }
        return std::vector<double>{s / p.data.size(), sq / p.data.size()};
    };
    const eval::UdrFn doubled_fn = [&patch_fn](const ImageBuffer& p) {
        auto u = patch_fn(p);
        for (double& v : u) v *= 2.0;
        return u;
    };
    nn::DeterministicRng r2(5, 1, "st"), r3(5, 1, "st");
    const auto rep1 = eval::stability_metric(patch_fn, image, 12, 16, r2);
    const auto rep2 = eval::stability_metric(doubled_fn, image, 12, 16, r3);
    CHECK(rep1.instability > 0.0);
    CHECK(rep2.instability == doctest::Approx(4.0 * rep1.instability).epsilon(1e-9));
    for (std::size_t i = 0; i < rep1.mean.size(); ++i)
        CHECK(rep2.mean[i] == doctest::Approx(2.0 * rep1.mean[i]).epsilon(1e-9));

    nn::DeterministicRng r4(5, 2, "st");
    CHECK_THROWS_AS(eval::stability_metric(constant_fn, image, 1, 16, r4), ParameterError);
}

TEST_CASE("silhouette: separated blobs ~1, shuffled labels ~0, singleton convention") {
    nn::DeterministicRng rng(8, 0, "blob");
    std::vector<std::vector<double>> pts;
    std::vector<int> labels;
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 20; ++i) {
            pts.push_back({c * 100.0 + rng.next_gaussian(), rng.next_gaussian()});
            labels.push_back(c);
        }
    CHECK(eval::silhouette_score(pts, labels) > 0.95);

    std::vector<std::vector<double>> rnd;
    std::vector<int> rnd_labels;
    for (int i = 0; i < 1000; ++i) {
        rnd.push_back({rng.next_gaussian(), rng.next_gaussian(), rng.next_gaussian()});
        rnd_labels.push_back(static_cast<int>(rng.next_int(0, 2)));
    }
    CHECK(std::abs(eval::silhouette_score(rnd, rnd_labels)) < 0.1);

    // two singleton clusters score 0 by convention
    CHECK(eval::silhouette_score({{0.0}, {5.0}}, {0, 1}) == 0.0);

    // shuffled labels never beat the true separated labeling
    for (std::uint64_t t = 0; t < 5; ++t) {
        nn::DeterministicRng r(9, t, "trial");
        std::vector<std::vector<double>> p2;
        std::vector<int> good, bad;
        for (int c = 0; c < 2; ++c)
            for (int i = 0; i < 15; ++i) {
                p2.push_back({c * 50.0 + r.next_gaussian()});
                good.push_back(c);
                bad.push_back(static_cast<int>(r.next_int(0, 1)));
            }
        CHECK(eval::silhouette_score(p2, good) > eval::silhouette_score(p2, bad));
    }
}

TEST_CASE("cluster_separability: report fields, degenerate handling, PCA determinism") {
    nn::DeterministicRng rng(10, 0, "cl");
    std::vector<eval::ClusterSample> samples;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 8; ++i) {
            std::vector<double> u(6);
            for (double& v : u) v = rng.next_gaussian();
            u[static_cast<std::size_t>(c)] += 40.0;
            samples.push_back({u, c == 0 ? "bnj" : (c == 1 ? "bn" : "bj")});
        }
    const auto rep = eval::cluster_separability(samples);
    CHECK(rep.silhouette > 0.8);
    CHECK(rep.coords.size() == samples.size());
    CHECK_FALSE(rep.degenerate);

    const auto rep2 = eval::cluster_separability(samples);
    CHECK(rep2.coords == rep.coords);  // deterministic PCA incl. sign rule

    std::vector<eval::ClusterSample> same;
    for (int i = 0; i < 4; ++i) same.push_back({{1.0, 2.0}, i % 2 ? "a" : "b"});
    const auto rep3 = eval::cluster_separability(same);
    CHECK(rep3.degenerate);
    CHECK(rep3.silhouette == 0.0);

    CHECK_THROWS_AS(eval::cluster_separability({{{1.0}, "only"}, {{2.0}, "only"}}), ParameterError);
}

TEST_CASE("pca components are unit length, orthogonal, sign-normalized") {
    nn::DeterministicRng rng(11, 0, "pca");
    std::vector<std::vector<double>> data;
    for (int i = 0; i < 40; ++i) {
        const double t = rng.next_gaussian();
        data.push_back({3.0 * t + 0.05 * rng.next_gaussian(), -1.5 * t + 0.05 * rng.next_gaussian(),
                        0.02 * rng.next_gaussian()});
    }
    const auto comps = eval::pca_components(data, 2);
    REQUIRE(comps.size() == 2);
    double n0 = 0.0, n1 = 0.0, dot = 0.0;
    for (int i = 0; i < 3; ++i) {
        n0 += comps[0][static_cast<std::size_t>(i)] * comps[0][static_cast<std::size_t>(i)];
        n1 += comps[1][static_cast<std::size_t>(i)] * comps[1][static_cast<std::size_t>(i)];
        dot += comps[0][static_cast<std::size_t>(i)] * comps[1][static_cast<std::size_t>(i)];
    }
    CHECK(n0 == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(n1 == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(dot) < 1e-6);
    CHECK(comps[0][0] > 0.0);  // first loading positive
    // dominant direction ~ (3, -1.5)/|.|
    CHECK(std::abs(comps[0][0] / comps[0][1] + 2.0) < 0.05);
}

TEST_CASE("report emitters: pinned headers, deterministic bytes, one circle per sample") {
    eval::QualityReport q;
    q.rows = {{"img0", 21.5, 0.7}, {"img1", 23.0, 0.8}};
    q.finalize();
    CHECK(q.mean_psnr == doctest::Approx(22.25));
    const std::string qcsv = eval::quality_csv(q);
    CHECK(qcsv.rfind("image,psnr_db,ssim\n", 0) == 0);
    CHECK(qcsv == eval::quality_csv(q));

    eval::StabilityReport s;
    s.image = "img0";
    s.instability = 0.125;
    s.dims = 36;
    const std::string scsv = eval::stability_csv({s});
    CHECK(scsv.rfind("image,instability,dims\n", 0) == 0);
    CHECK(scsv.find("img0,0.125,36") != std::string::npos);

    nn::DeterministicRng rng(12, 0, "svg");
    std::vector<eval::ClusterSample> samples;
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 3; ++i)
            samples.push_back({{rng.next_gaussian() + 10.0 * c, rng.next_gaussian()},
                               c == 0 ? "bnj" : (c == 1 ? "bn" : "bj")});
    const auto rep = eval::cluster_separability(samples);
    const std::string csv = eval::cluster_csv(rep);
    CHECK(csv.rfind("index,label,pc1,pc2,silhouette_overall\n", 0) == 0);

    const std::string svg = eval::cluster_svg(rep);
    CHECK(svg == eval::cluster_svg(rep));
    CHECK(svg.find("width=\"640\" height=\"480\"") != std::string::npos);
    std::size_t circles = 0, pos = 0;
    while ((pos = svg.find("<circle", pos)) != std::string::npos) {
        ++circles;
        pos += 7;
    }
    CHECK(circles == samples.size());
}
