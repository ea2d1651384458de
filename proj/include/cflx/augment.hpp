#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cflx/image.hpp"
#include "cflx/rng.hpp"

namespace cflx {

enum class AugKind : char { Brightness = 'B', Contrast = 'C', Saturation = 'S' };

struct AugStep {
    AugKind kind;
    double factor;
    bool operator==(const AugStep&) const = default;
};

// Ordered fading-augmentation chain; kinds within one record are distinct.
struct AugRecord {
    std::vector<AugStep> steps;
    bool operator==(const AugRecord&) const = default;
};

struct AugRange {
    double lo = 0.5;
    double hi = 0.8;
    void validate() const;
};

// Blend-with-black: out = clamp(round_half_up(in * f)).
Image8 adjust_brightness(const Image8& img, double f);
// Blend with the rounded mean of the gray conversion.
Image8 adjust_contrast(const Image8& img, double f);
// Blend with the replicated gray conversion.
Image8 adjust_saturation(const Image8& img, double f);

// Uniformly pick one of the 7 nonempty subsets of {B,C,S}, shuffle the order,
// draw each factor uniformly from [lo,hi]. Deterministic given the seed.
AugRecord sample_chain(std::uint64_t seed, const AugRange& range);
AugRecord sample_chain(Rng& rng, const AugRange& range);

Image8 apply_chain(const Image8& img, const AugRecord& rec);

// "S:0.62|B:0.71" style token, factors at full precision in manifests.
std::string aug_token(const AugRecord& rec);
AugRecord parse_aug_token(const std::string& token);

}  // namespace cflx
