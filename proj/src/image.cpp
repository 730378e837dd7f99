#include "usr/image.hpp"

#include <algorithm>
#include <cmath>

namespace usr::img {

ImageBuffer ImageBuffer::zeros(int channels, int height, int width) {
    ImageBuffer img;
    img.channels = channels;
    img.height = height;
    img.width = width;
    img.data.assign(static_cast<std::size_t>(channels) * height * width, 0.0);
    return img;
}

ImageBuffer ImageBuffer::constant(int channels, int height, int width, double value) {
    ImageBuffer img = zeros(channels, height, width);
    std::fill(img.data.begin(), img.data.end(), value);
    return img;
}

ImageBuffer ImageBuffer::crop(int y0, int x0, int h, int w) const {
    if (y0 < 0 || x0 < 0 || y0 + h > height || x0 + w > width)
        throw DataError("crop outside image bounds");
    ImageBuffer out = zeros(channels, h, w);
    for (int c = 0; c < channels; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(c, y, x) = at(c, y0 + y, x0 + x);
    return out;
}

void ImageBuffer::clamp01() {
    for (double& v : data) v = std::min(1.0, std::max(0.0, v));
}

void validate(const ImageBuffer& img, const char* what) {
    if (img.channels != 1 && img.channels != 3)
        throw DataError(std::string(what) + ": image must have 1 or 3 channels");
    if (img.height < 8 || img.width < 8)
        throw DataError(std::string(what) + ": image dims must be >= 8");
    if (img.data.size() != static_cast<std::size_t>(img.channels) * img.height * img.width)
        throw DataError(std::string(what) + ": image payload size mismatch");
}

nn::TensorPtr image_to_tensor(const ImageBuffer& img) {
    return nn::Tensor::from_values({img.channels, img.height, img.width}, img.data);
}

ImageBuffer tensor_to_image(const nn::Tensor& t) {
    if (t.shape.size() != 3) throw DimensionError("tensor_to_image: expected C x H x W");
    ImageBuffer img;
    img.channels = t.shape[0];
    img.height = t.shape[1];
    img.width = t.shape[2];
    img.data = t.data;
    img.clamp01();
    return img;
}

ImageBuffer to_gray(const ImageBuffer& img) {
    if (img.channels == 1) return img;
    ImageBuffer out = ImageBuffer::zeros(1, img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            out.at(0, y, x) =
                0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) + 0.114 * img.at(2, y, x);
    return out;
}

bool bit_equal(const ImageBuffer& a, const ImageBuffer& b) {
    return a.same_dims(b) && a.data == b.data;
}

}  // namespace usr::img
