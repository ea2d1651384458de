#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace cflx {

// 8-bit raster, row-major, 1 (gray) or 3 (RGB) channels.
struct Image8 {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<std::uint8_t> data;

    Image8() = default;
    Image8(int w, int h, int c) : width(w), height(h), channels(c) {
        if (w < 1 || h < 1 || (c != 1 && c != 3))
            throw std::invalid_argument("Image8: bad dimensions");
        data.assign(static_cast<std::size_t>(w) * h * c, 0);
    }

    std::size_t size() const { return data.size(); }
    std::uint8_t& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    bool operator==(const Image8&) const = default;
};

// Math-domain mirror: 64-bit floats in [0,1].
struct ImageF {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<double> data;

    ImageF() = default;
    ImageF(int w, int h, int c) : width(w), height(h), channels(c) {
        if (w < 1 || h < 1 || (c != 1 && c != 3))
            throw std::invalid_argument("ImageF: bad dimensions");
        data.assign(static_cast<std::size_t>(w) * h * c, 0.0);
    }

    std::size_t size() const { return data.size(); }
    double& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
};

ImageF to_float(const Image8& img);
// Clamps to [0,1], rounds half-up to 0..255.
Image8 from_float(const ImageF& img);

// round(x + 0.5 floor) half-up on a nonnegative-or-negative double, then clamp.
std::uint8_t quantize8(double v);

}  // namespace cflx
