#include "usr/degrade.hpp"

#include <algorithm>
#include <cmath>

namespace usr::degrade {

const char* resize_mode_name(ResizeMode mode) {
    switch (mode) {
        case ResizeMode::bicubic: return "bicubic";
        case ResizeMode::bilinear: return "bilinear";
        case ResizeMode::area: return "area";
    }
    return "?";
}

ResizeMode resize_mode_from_name(const std::string& name) {
    if (name == "bicubic") return ResizeMode::bicubic;
    if (name == "bilinear") return ResizeMode::bilinear;
    if (name == "area") return ResizeMode::area;
    throw ParameterError("unknown resize mode: " + name);
}

const char* noise_kind_name(NoiseKind kind) {
    return kind == NoiseKind::gaussian_gray ? "gaussian-gray" : "gaussian-color";
}

NoiseKind noise_kind_from_name(const std::string& name) {
    if (name == "gaussian-gray") return NoiseKind::gaussian_gray;
    if (name == "gaussian-color") return NoiseKind::gaussian_color;
    throw ParameterError("unknown noise kind: " + name);
}

BlurKernel make_gaussian_kernel(int size, double sigma_x, double sigma_y, double theta) {
    if (size % 2 == 0 || size < 7 || size > 21)
        throw ParameterError("blur kernel size must be odd in [7,21]");
    if (sigma_x < 0.2 || sigma_x > 3.0 || sigma_y < 0.2 || sigma_y > 3.0)
        throw ParameterError("blur sigma must be in [0.2,3.0]");

    BlurKernel k;
    k.size = size;
    k.sigma_x = sigma_x;
    k.sigma_y = sigma_y;
    k.theta = theta;
    k.weights.assign(static_cast<std::size_t>(size) * size, 0.0);

    const int r = size / 2;
    const double ct = std::cos(theta), st = std::sin(theta);
    double sum = 0.0;
    for (int y = -r; y <= r; ++y) {
        for (int x = -r; x <= r; ++x) {
            const double xr = ct * x + st * y;
            const double yr = -st * x + ct * y;
            const double e = 0.5 * (xr * xr / (sigma_x * sigma_x) + yr * yr / (sigma_y * sigma_y));
            const double w = std::exp(-e);
            k.weights[static_cast<std::size_t>(y + r) * size + (x + r)] = w;
            sum += w;
        }
    }
    for (double& w : k.weights) w /= sum;
    return k;
}

namespace {

// reflect-101: -1 -> 1, -2 -> 2, n -> n-2 (edge pixel not duplicated).
int reflect101(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * (n - 1) - i;
    }
    return i;
}

int clamp_index(int i, int n) { return std::min(n - 1, std::max(0, i)); }

double cubic_weight(double t) {
    // cubic convolution kernel with a = -0.5
    const double a = -0.5;
    const double at = std::abs(t);
    if (at <= 1.0) return (a + 2.0) * at * at * at - (a + 3.0) * at * at + 1.0;
    if (at < 2.0) return a * at * at * at - 5.0 * a * at * at + 8.0 * a * at - 4.0 * a;
    return 0.0;
}

}  // namespace

ImageBuffer apply_blur(const ImageBuffer& image, const BlurKernel& kernel) {
    img::validate(image, "apply_blur");
    if (kernel.size >= std::min(image.height, image.width))
        throw ParameterError("apply_blur: kernel larger than image");

    ImageBuffer out = ImageBuffer::zeros(image.channels, image.height, image.width);
    const int r = kernel.size / 2;
    for (int c = 0; c < image.channels; ++c) {
        for (int y = 0; y < image.height; ++y) {
            for (int x = 0; x < image.width; ++x) {
                double s = 0.0;
                for (int ky = -r; ky <= r; ++ky) {
                    const int iy = reflect101(y + ky, image.height);
                    for (int kx = -r; kx <= r; ++kx) {
                        const int ix = reflect101(x + kx, image.width);
                        s += kernel.at(ky + r, kx + r) * image.at(c, iy, ix);
                    }
                }
                out.at(c, y, x) = s;
            }
        }
    }
    out.clamp01();
    return out;
}

ImageBuffer resize(const ImageBuffer& image, int out_h, int out_w, ResizeMode mode) {
    img::validate(image, "resize");
    if (out_h < 2 || out_w < 2) throw ParameterError("resize: output dims must be >= 2");

    ImageBuffer out = ImageBuffer::zeros(image.channels, out_h, out_w);
    const double sy = static_cast<double>(image.height) / out_h;
    const double sx = static_cast<double>(image.width) / out_w;

    if (mode == ResizeMode::area) {
        // coverage-weighted box filter; exact block average for integer ratios
        for (int c = 0; c < image.channels; ++c) {
            for (int oy = 0; oy < out_h; ++oy) {
                const double y0 = oy * sy, y1 = (oy + 1) * sy;
                const int iy0 = static_cast<int>(std::floor(y0));
                const int iy1 = std::min(image.height, static_cast<int>(std::ceil(y1)));
                for (int ox = 0; ox < out_w; ++ox) {
                    const double x0 = ox * sx, x1 = (ox + 1) * sx;
                    const int ix0 = static_cast<int>(std::floor(x0));
                    const int ix1 = std::min(image.width, static_cast<int>(std::ceil(x1)));
                    double acc = 0.0, wsum = 0.0;
                    for (int iy = iy0; iy < iy1; ++iy) {
                        const double wy =
                            std::min(y1, static_cast<double>(iy + 1)) - std::max(y0, static_cast<double>(iy));
                        for (int ix = ix0; ix < ix1; ++ix) {
                            const double wx = std::min(x1, static_cast<double>(ix + 1)) -
                                              std::max(x0, static_cast<double>(ix));
                            const double w = wy * wx;
                            acc += w * image.at(c, clamp_index(iy, image.height), clamp_index(ix, image.width));
                            wsum += w;
                        }
                    }
                    out.at(c, oy, ox) = acc / wsum;
                }
            }
        }
    } else if (mode == ResizeMode::bilinear) {
        for (int c = 0; c < image.channels; ++c) {
            for (int oy = 0; oy < out_h; ++oy) {
                const double fy = (oy + 0.5) * sy - 0.5;
                const int y0 = static_cast<int>(std::floor(fy));
                const double ty = fy - y0;
                const int ya = clamp_index(y0, image.height), yb = clamp_index(y0 + 1, image.height);
                for (int ox = 0; ox < out_w; ++ox) {
                    const double fx = (ox + 0.5) * sx - 0.5;
                    const int x0 = static_cast<int>(std::floor(fx));
                    const double tx = fx - x0;
                    const int xa = clamp_index(x0, image.width), xb = clamp_index(x0 + 1, image.width);
                    out.at(c, oy, ox) = (1.0 - ty) * ((1.0 - tx) * image.at(c, ya, xa) + tx * image.at(c, ya, xb)) +
                                        ty * ((1.0 - tx) * image.at(c, yb, xa) + tx * image.at(c, yb, xb));
                }
            }
        }
    } else {
        for (int c = 0; c < image.channels; ++c) {
            for (int oy = 0; oy < out_h; ++oy) {
                const double fy = (oy + 0.5) * sy - 0.5;
                const int y0 = static_cast<int>(std::floor(fy));
                const double ty = fy - y0;
                double wy[4];
                double wysum = 0.0;
                for (int i = 0; i < 4; ++i) {
                    wy[i] = cubic_weight(ty - (i - 1));
                    wysum += wy[i];
                }
                for (int i = 0; i < 4; ++i) wy[i] /= wysum;
                for (int ox = 0; ox < out_w; ++ox) {
                    const double fx = (ox + 0.5) * sx - 0.5;
                    const int x0 = static_cast<int>(std::floor(fx));
                    const double tx = fx - x0;
                    double wx[4];
                    double wxsum = 0.0;
                    for (int i = 0; i < 4; ++i) {
                        wx[i] = cubic_weight(tx - (i - 1));
                        wxsum += wx[i];
                    }
                    for (int i = 0; i < 4; ++i) wx[i] /= wxsum;
                    double acc = 0.0;
                    for (int i = 0; i < 4; ++i) {
                        const int iy = clamp_index(y0 - 1 + i, image.height);
                        double row = 0.0;
                        for (int j = 0; j < 4; ++j) {
                            const int ix = clamp_index(x0 - 1 + j, image.width);
                            row += wx[j] * image.at(c, iy, ix);
                        }
                        acc += wy[i] * row;
                    }
                    out.at(c, oy, ox) = acc;
                }
            }
        }
    }
    out.clamp01();
    return out;
}

ImageBuffer add_noise(const ImageBuffer& image, NoiseKind kind, double sigma,
                      nn::DeterministicRng& rng) {
    img::validate(image, "add_noise");
    if (sigma < 0.0 || sigma > 50.0 / 255.0)
        throw ParameterError("add_noise: sigma must be in [0, 50/255]");

    ImageBuffer out = image;
    if (sigma == 0.0) return out;
    if (kind == NoiseKind::gaussian_gray) {
        for (int y = 0; y < image.height; ++y) {
            for (int x = 0; x < image.width; ++x) {
                const double n = sigma * rng.next_gaussian();
                for (int c = 0; c < image.channels; ++c) out.at(c, y, x) += n;
            }
        }
    } else {
        for (int c = 0; c < image.channels; ++c)
            for (int y = 0; y < image.height; ++y)
                for (int x = 0; x < image.width; ++x) out.at(c, y, x) += sigma * rng.next_gaussian();
    }
    out.clamp01();
    return out;
}

}  // namespace usr::degrade
