#include "cflx/image.hpp"

#include <cmath>

namespace cflx {

ImageF to_float(const Image8& img) {
    ImageF out(img.width, img.height, img.channels);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = img.data[i] / 255.0;
    return out;
}

std::uint8_t quantize8(double v) {
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
    const double scaled = std::floor(v * 255.0 + 0.5);  // half-up
    return static_cast<std::uint8_t>(scaled);
}

Image8 from_float(const ImageF& img) {
    Image8 out(img.width, img.height, img.channels);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = quantize8(img.data[i]);
    return out;
}

}  // namespace cflx
