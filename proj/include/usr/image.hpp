#pragma once

#include <vector>

#include "usr/error.hpp"
#include "usr/tensor.hpp"

namespace usr::img {

// Planar real-valued image in [0,1]; data[(c*H + y)*W + x].
struct ImageBuffer {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    static ImageBuffer zeros(int channels, int height, int width);
    static ImageBuffer constant(int channels, int height, int width, double value);

    double& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    bool same_dims(const ImageBuffer& other) const {
        return channels == other.channels && height == other.height && width == other.width;
    }

    ImageBuffer crop(int y0, int x0, int h, int w) const;
    void clamp01();
};

// Throws DataError unless the buffer is a well-formed 1- or 3-channel image
// with dims >= 8 and a matching data payload.
void validate(const ImageBuffer& img, const char* what);

// 3-D C x H x W tensor (constant leaf) from an image and back. Conversion to
// an image clamps to [0,1]; tensors inside loss graphs stay unclamped.
nn::TensorPtr image_to_tensor(const ImageBuffer& img);
ImageBuffer tensor_to_image(const nn::Tensor& t);

// BT.601 luma plane of an RGB (or gray) image.
ImageBuffer to_gray(const ImageBuffer& img);

bool bit_equal(const ImageBuffer& a, const ImageBuffer& b);

}  // namespace usr::img
