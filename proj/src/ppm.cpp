#include "usr/ppm.hpp"

#include <cmath>
#include <fstream>

namespace usr::img {

namespace {

// next whitespace-separated token, skipping '#' comments to end of line
std::string next_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

}  // namespace

ImageBuffer read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open image: " + path);

    const std::string magic = next_token(f);
    if (magic != "P6") throw DataError("unsupported image format (want binary P6): " + path);
    const std::string ws = next_token(f), hs = next_token(f), ms = next_token(f);
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(ws);
        h = std::stoi(hs);
        maxval = std::stoi(ms);
    } catch (...) {
        throw DataError("malformed PPM header: " + path);
    }
    if (w < 1 || h < 1) throw DataError("malformed PPM dims: " + path);
    if (maxval != 255) throw DataError("unsupported PPM maxval (must be 255): " + path);

    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (f.gcount() != static_cast<std::streamsize>(raw.size()))
        throw DataError("PPM pixel data truncated: " + path);

    ImageBuffer img = ImageBuffer::zeros(3, h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = raw[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0;
    return img;
}

void write_ppm(const ImageBuffer& image, const std::string& path) {
    if (image.channels != 1 && image.channels != 3)
        throw DataError("write_ppm: image must have 1 or 3 channels");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open image for writing: " + path);

    f << "P6\n" << image.width << " " << image.height << "\n255\n";
    std::vector<unsigned char> raw(static_cast<std::size_t>(image.width) * image.height * 3);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double v = image.at(image.channels == 1 ? 0 : c, y, x);
                const double clamped = std::min(1.0, std::max(0.0, v));
                raw[(static_cast<std::size_t>(y) * image.width + x) * 3 + c] =
                    static_cast<unsigned char>(std::lround(clamped * 255.0));
            }
        }
    }
    f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!f) throw DataError("failed writing image: " + path);
}

}  // namespace usr::img
