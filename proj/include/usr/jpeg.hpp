#pragma once

#include <array>

#include "usr/image.hpp"

namespace usr::degrade {

// Pixel-equivalent JPEG simulation: BT.601 full-range YCbCr, per-channel 8x8
// DCT-II, quantization with the standard luminance/chrominance tables scaled
// by the libjpeg quality rule, inverse transform, clamp. No chroma
// subsampling, no entropy coding. Non-multiple-of-8 images are replicate-
// padded internally and cropped back.
img::ImageBuffer jpeg_degrade(const img::ImageBuffer& image, int quality);

// Quality-scaled quantization table; base tables are the standard luma/chroma
// ones, scale = 5000/q (q < 50) else 200 - 2q percent, each entry
// max(1, floor((base*scale + 50)/100)).
std::array<int, 64> jpeg_quant_table(int quality, bool luma);

// One 8x8 block round trip (shift by -128, DCT, quantize, dequantize, IDCT,
// shift back) on values in byte scale [0,255]. Exposed for verification.
void jpeg_block_roundtrip(const double* in, double* out, const std::array<int, 64>& quant);

}  // namespace usr::degrade
