#pragma once

#include <string>

#include "usr/image.hpp"

namespace usr::img {

// Binary P6, maxval 255 only; header comments (#) permitted. Bytes map to
// v/255 exactly on read; write rounds clamp(x)*255. Gray buffers are written
// with replicated channels.
ImageBuffer read_ppm(const std::string& path);
void write_ppm(const ImageBuffer& image, const std::string& path);

}  // namespace usr::img
