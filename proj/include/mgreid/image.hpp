#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mgreid {

// H x W x 3 image, values in [0, 1]. The synthetic renderer emits values
// quantized to multiples of 1/255 so a PNG round trip is lossless.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> pix;  // row-major, 3 channels interleaved

    Image() = default;
    Image(int h, int w, double fill = 0.0) : height(h), width(w), pix(static_cast<size_t>(h) * w * 3, fill) {}

    double& at(int y, int x, int c) { return pix[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    double at(int y, int x, int c) const { return pix[(static_cast<size_t>(y) * width + x) * 3 + c]; }

    void quantize8();  // snap every channel to the nearest /255 level
};

// Minimal PNG codec (8-bit RGB and grayscale, non-interlaced) on top of zlib.
void write_png_rgb(const std::string& path, const Image& img);
void write_png_gray(const std::string& path, int height, int width, const std::vector<uint8_t>& gray);
Image read_png_rgb(const std::string& path);

}  // namespace mgreid
