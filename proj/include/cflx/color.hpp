#pragma once

#include "cflx/image.hpp"

namespace cflx {

struct HsvStats {
    double mean_saturation = 0.0;  // [0,1]
    double mean_brightness = 0.0;  // [0,1]
};

struct Hsv {
    double h = 0.0;  // [0,1), 0 when achromatic
    double s = 0.0;
    double v = 0.0;
};

// Integer BT.601: L = floor((299 R + 587 G + 114 B) / 1000).
Image8 rgb_to_gray(const Image8& img);

// Hexcone HSV on [0,1] components.
Hsv rgb_to_hsv(double r, double g, double b);
void hsv_to_rgb(const Hsv& hsv, double& r, double& g, double& b);

// Hasler-Suesstrunk colorfulness over opponent channels rg = R-G,
// yb = (R+G)/2 - B, population standard deviations.
double colorfulness(const Image8& img);

HsvStats hsv_stats(const Image8& img);

}  // namespace cflx
