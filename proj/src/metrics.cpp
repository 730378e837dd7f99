#include "usr/metrics.hpp"

#include <cmath>

namespace usr::eval {

double psnr(const img::ImageBuffer& a, const img::ImageBuffer& b) {
    if (!a.same_dims(b)) throw DimensionError("psnr: image dims differ");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse < 1e-12) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (K1*L)^2
constexpr double kC2 = 0.03 * 0.03;  // (K2*L)^2

struct SsimWindow {
    double w[kWin * kWin];
    SsimWindow() {
        double sum = 0.0;
        const int r = kWin / 2;
        for (int y = -r; y <= r; ++y)
            for (int x = -r; x <= r; ++x) {
                const double v = std::exp(-(x * x + y * y) / (2.0 * kSigma * kSigma));
                w[(y + r) * kWin + (x + r)] = v;
                sum += v;
            }
        for (double& v : w) v /= sum;
    }
};
const SsimWindow kWindow;

}  // namespace

double ssim(const img::ImageBuffer& a, const img::ImageBuffer& b) {
    if (!a.same_dims(b)) throw DimensionError("ssim: image dims differ");
    if (a.height < kWin || a.width < kWin)
        throw DataError("ssim: images smaller than the 11x11 window");

    const img::ImageBuffer ga = img::to_gray(a);
    const img::ImageBuffer gb = img::to_gray(b);

    const int r = kWin / 2;
    double total = 0.0;
    std::int64_t count = 0;
    for (int cy = r; cy < a.height - r; ++cy) {
        for (int cx = r; cx < a.width - r; ++cx) {
            double mu_a = 0.0, mu_b = 0.0;
            for (int y = -r; y <= r; ++y)
                for (int x = -r; x <= r; ++x) {
                    const double w = kWindow.w[(y + r) * kWin + (x + r)];
                    mu_a += w * ga.at(0, cy + y, cx + x);
                    mu_b += w * gb.at(0, cy + y, cx + x);
                }
            double var_a = 0.0, var_b = 0.0, cov = 0.0;
            for (int y = -r; y <= r; ++y)
                for (int x = -r; x <= r; ++x) {
                    const double w = kWindow.w[(y + r) * kWin + (x + r)];
                    const double da = ga.at(0, cy + y, cx + x) - mu_a;
                    const double db = gb.at(0, cy + y, cx + x) - mu_b;
                    var_a += w * da * da;
                    var_b += w * db * db;
                    cov += w * da * db;
                }
            const double num = (2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2);
            const double den = (mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2);
            total += num / den;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

void QualityReport::finalize() {
    // Kahan summation keeps the aggregate order-independent in practice.
    double sp = 0.0, cp = 0.0, ss = 0.0, cs = 0.0;
    for (const auto& row : rows) {
        double y = row.psnr_db - cp;
        double t = sp + y;
        cp = (t - sp) - y;
        sp = t;
        y = row.ssim - cs;
        t = ss + y;
        cs = (t - ss) - y;
        ss = t;
    }
    const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
    mean_psnr = sp / n;
    mean_ssim = ss / n;
}

}  // namespace usr::eval
