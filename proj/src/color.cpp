#include "cflx/color.hpp"

#include <cmath>
#include <stdexcept>

namespace cflx {

Image8 rgb_to_gray(const Image8& img) {
    Image8 out(img.width, img.height, 1);
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    if (img.channels == 1) {
        out.data = img.data;
        return out;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned r = img.data[3 * i];
        const unsigned g = img.data[3 * i + 1];
        const unsigned b = img.data[3 * i + 2];
        out.data[i] = static_cast<std::uint8_t>((299u * r + 587u * g + 114u * b) / 1000u);
    }
    return out;
}

Hsv rgb_to_hsv(double r, double g, double b) {
    const double mx = std::max(r, std::max(g, b));
    const double mn = std::min(r, std::min(g, b));
    const double delta = mx - mn;
    Hsv out;
    out.v = mx;
    out.s = (mx <= 0.0) ? 0.0 : delta / mx;
    if (delta <= 0.0) {
        out.h = 0.0;
        return out;
    }
    double h;
    if (mx == r)
        h = std::fmod((g - b) / delta, 6.0);
    else if (mx == g)
        h = (b - r) / delta + 2.0;
    else
        h = (r - g) / delta + 4.0;
    h /= 6.0;
    if (h < 0.0) h += 1.0;
    if (h >= 1.0) h -= 1.0;
    out.h = h;
    return out;
}

void hsv_to_rgb(const Hsv& hsv, double& r, double& g, double& b) {
    const double h6 = hsv.h * 6.0;
    const int sector = static_cast<int>(std::floor(h6)) % 6;
    const double f = h6 - std::floor(h6);
    const double p = hsv.v * (1.0 - hsv.s);
    const double q = hsv.v * (1.0 - hsv.s * f);
    const double t = hsv.v * (1.0 - hsv.s * (1.0 - f));
    switch (sector) {
        case 0: r = hsv.v; g = t; b = p; break;
        case 1: r = q; g = hsv.v; b = p; break;
        case 2: r = p; g = hsv.v; b = t; break;
        case 3: r = p; g = q; b = hsv.v; break;
        case 4: r = t; g = p; b = hsv.v; break;
        default: r = hsv.v; g = p; b = q; break;
    }
}

double colorfulness(const Image8& img) {
    if (img.channels != 3)
        throw std::invalid_argument("colorfulness: 3-channel image required");
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    double sum_rg = 0.0, sum_yb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = img.data[3 * i];
        const double g = img.data[3 * i + 1];
        const double b = img.data[3 * i + 2];
        sum_rg += r - g;
        sum_yb += 0.5 * (r + g) - b;
    }
    const double mu_rg = sum_rg / n;
    const double mu_yb = sum_yb / n;
    // two-pass population variance
    double var_rg = 0.0, var_yb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = img.data[3 * i];
        const double g = img.data[3 * i + 1];
        const double b = img.data[3 * i + 2];
        const double drg = (r - g) - mu_rg;
        const double dyb = (0.5 * (r + g) - b) - mu_yb;
        var_rg += drg * drg;
        var_yb += dyb * dyb;
    }
    var_rg /= n;
    var_yb /= n;
    return std::sqrt(var_rg + var_yb) + 0.3 * std::sqrt(mu_rg * mu_rg + mu_yb * mu_yb);
}

HsvStats hsv_stats(const Image8& img) {
    if (img.channels != 3)
        throw std::invalid_argument("hsv_stats: 3-channel image required");
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    double s = 0.0, v = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Hsv hsv = rgb_to_hsv(img.data[3 * i] / 255.0, img.data[3 * i + 1] / 255.0,
                                   img.data[3 * i + 2] / 255.0);
        s += hsv.s;
        v += hsv.v;
    }
    return {s / n, v / n};
}

}  // namespace cflx
