#pragma once

#include <string>
#include <vector>

#include "usr/image.hpp"

namespace usr::eval {

// 10*log10(1/MSE) over all channels, capped at 99 dB when MSE < 1e-12.
double psnr(const img::ImageBuffer& a, const img::ImageBuffer& b);

// Mean local SSIM on the BT.601 luma plane; 11x11 Gaussian window sigma 1.5,
// K1 = 0.01, K2 = 0.03, L = 1, valid positions only.
double ssim(const img::ImageBuffer& a, const img::ImageBuffer& b);

struct QualityRow {
    std::string image;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

struct QualityReport {
    std::vector<QualityRow> rows;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;

    void finalize();  // compensated-sum means
};

}  // namespace usr::eval
