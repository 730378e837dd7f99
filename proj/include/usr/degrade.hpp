#pragma once

#include "usr/image.hpp"
#include "usr/rng.hpp"

namespace usr::degrade {

using img::ImageBuffer;

// Rotated anisotropic Gaussian blur kernel, normalized to sum 1.
struct BlurKernel {
    int size = 0;
    double sigma_x = 0.0;
    double sigma_y = 0.0;
    double theta = 0.0;
    std::vector<double> weights;  // size x size row-major

    double at(int y, int x) const { return weights[static_cast<std::size_t>(y) * size + x]; }
};

enum class ResizeMode { bicubic, bilinear, area };
enum class NoiseKind { gaussian_gray, gaussian_color };

const char* resize_mode_name(ResizeMode mode);
ResizeMode resize_mode_from_name(const std::string& name);
const char* noise_kind_name(NoiseKind kind);
NoiseKind noise_kind_from_name(const std::string& name);

// size odd in [7,21], sigmas in [0.2,3.0], theta in radians.
BlurKernel make_gaussian_kernel(int size, double sigma_x, double sigma_y, double theta);

// Per-channel 2-D correlation with reflect-101 boundary handling.
ImageBuffer apply_blur(const ImageBuffer& image, const BlurKernel& kernel);

// Source mapping src = (dst + 0.5) * (in/out) - 0.5 with edge clamping.
// bicubic uses the a=-0.5 cubic kernel; area uses exact coverage weights
// (a plain box average whenever the ratio is integer).
ImageBuffer resize(const ImageBuffer& image, int out_h, int out_w, ResizeMode mode);

// Additive Gaussian noise, sigma in [0, 50/255]. gaussian_gray shares one draw
// per pixel across channels (row-major order); gaussian_color draws per
// channel in planar order. Result clamped to [0,1].
ImageBuffer add_noise(const ImageBuffer& image, NoiseKind kind, double sigma,
                      nn::DeterministicRng& rng);

}  // namespace usr::degrade
