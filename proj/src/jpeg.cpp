#include "usr/jpeg.hpp"

#include <algorithm>
#include <cmath>

namespace usr::degrade {

namespace {

constexpr int kLumaBase[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

constexpr int kChromaBase[64] = {
    17, 18, 24, 47, 99, 99, 99, 99,  //
    18, 21, 26, 66, 99, 99, 99, 99,  //
    24, 26, 56, 99, 99, 99, 99, 99,  //
    47, 66, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99};

// Orthonormal 8-point DCT-II basis, row u: c(u)*cos((2x+1)u*pi/16)/2.
struct DctBasis {
    double m[8][8];
    DctBasis() {
        for (int u = 0; u < 8; ++u) {
            const double cu = (u == 0) ? std::sqrt(0.5) : 1.0;
            for (int x = 0; x < 8; ++x)
                m[u][x] = 0.5 * cu * std::cos((2 * x + 1) * u * M_PI / 16.0);
        }
    }
};
const DctBasis kDct;

void dct8x8(const double* in, double* out) {
    double tmp[64];
    for (int u = 0; u < 8; ++u)
        for (int x = 0; x < 8; ++x) {
            double s = 0.0;
            for (int y = 0; y < 8; ++y) s += kDct.m[u][y] * in[y * 8 + x];
            tmp[u * 8 + x] = s;
        }
    for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
            double s = 0.0;
            for (int x = 0; x < 8; ++x) s += kDct.m[v][x] * tmp[u * 8 + x];
            out[u * 8 + v] = s;
        }
}

void idct8x8(const double* in, double* out) {
    double tmp[64];
    for (int u = 0; u < 8; ++u)
        for (int x = 0; x < 8; ++x) {
            double s = 0.0;
            for (int v = 0; v < 8; ++v) s += kDct.m[v][x] * in[u * 8 + v];
            tmp[u * 8 + x] = s;
        }
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            double s = 0.0;
            for (int u = 0; u < 8; ++u) s += kDct.m[u][y] * tmp[u * 8 + x];
            out[y * 8 + x] = s;
        }
}

}  // namespace

std::array<int, 64> jpeg_quant_table(int quality, bool luma) {
    if (quality < 5 || quality > 100) throw ParameterError("jpeg quality must be in [5,100]");
    const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    std::array<int, 64> q{};
    const int* base = luma ? kLumaBase : kChromaBase;
    for (int i = 0; i < 64; ++i) q[i] = std::max(1, (base[i] * scale + 50) / 100);
    return q;
}

void jpeg_block_roundtrip(const double* in, double* out, const std::array<int, 64>& quant) {
    double shifted[64], coeff[64];
    for (int i = 0; i < 64; ++i) shifted[i] = in[i] - 128.0;
    dct8x8(shifted, coeff);
    for (int i = 0; i < 64; ++i) coeff[i] = std::round(coeff[i] / quant[i]) * quant[i];
    idct8x8(coeff, out);
    for (int i = 0; i < 64; ++i) out[i] += 128.0;
}

img::ImageBuffer jpeg_degrade(const img::ImageBuffer& image, int quality) {
    img::validate(image, "jpeg_degrade");
    if (quality < 5 || quality > 100) throw ParameterError("jpeg quality must be in [5,100]");

    const int h = image.height, w = image.width;
    const int ph = (h + 7) / 8 * 8, pw = (w + 7) / 8 * 8;

    // byte-scale planes; chroma carries the +128 offset so neutral gray sits
    // exactly at 128 and quantizes to itself
    const int nc = image.channels;
    std::vector<std::vector<double>> planes(nc, std::vector<double>(static_cast<std::size_t>(ph) * pw));
    for (int y = 0; y < ph; ++y) {
        const int sy = std::min(y, h - 1);
        for (int x = 0; x < pw; ++x) {
            const int sx = std::min(x, w - 1);
            if (nc == 1) {
                planes[0][static_cast<std::size_t>(y) * pw + x] = 255.0 * image.at(0, sy, sx);
            } else {
                const double r = 255.0 * image.at(0, sy, sx);
                const double g = 255.0 * image.at(1, sy, sx);
                const double b = 255.0 * image.at(2, sy, sx);
                planes[0][static_cast<std::size_t>(y) * pw + x] = 0.299 * r + 0.587 * g + 0.114 * b;
                planes[1][static_cast<std::size_t>(y) * pw + x] =
                    128.0 - 0.168735892 * r - 0.331264108 * g + 0.5 * b;
                planes[2][static_cast<std::size_t>(y) * pw + x] =
                    128.0 + 0.5 * r - 0.418687589 * g - 0.081312411 * b;
            }
        }
    }

    const auto q_luma = jpeg_quant_table(quality, true);
    const auto q_chroma = jpeg_quant_table(quality, false);

    for (int c = 0; c < nc; ++c) {
        const auto& q = (c == 0) ? q_luma : q_chroma;
        for (int by = 0; by < ph; by += 8) {
            for (int bx = 0; bx < pw; bx += 8) {
                double block[64], rec[64];
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x)
                        block[y * 8 + x] = planes[c][static_cast<std::size_t>(by + y) * pw + bx + x];
                jpeg_block_roundtrip(block, rec, q);
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x)
                        planes[c][static_cast<std::size_t>(by + y) * pw + bx + x] = rec[y * 8 + x];
            }
        }
    }

    img::ImageBuffer out = img::ImageBuffer::zeros(nc, h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (nc == 1) {
                out.at(0, y, x) = planes[0][static_cast<std::size_t>(y) * pw + x] / 255.0;
            } else {
                const double yv = planes[0][static_cast<std::size_t>(y) * pw + x];
                const double cb = planes[1][static_cast<std::size_t>(y) * pw + x] - 128.0;
                const double cr = planes[2][static_cast<std::size_t>(y) * pw + x] - 128.0;
                out.at(0, y, x) = (yv + 1.402 * cr) / 255.0;
                out.at(1, y, x) = (yv - 0.344136286 * cb - 0.714136286 * cr) / 255.0;
                out.at(2, y, x) = (yv + 1.772 * cb) / 255.0;
            }
        }
    }
    out.clamp01();
    return out;
}

}  // namespace usr::degrade
