#include "cflx/augment.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

#include "cflx/color.hpp"

namespace cflx {
namespace {

std::uint8_t clamp_round(double v) {
    const double r = std::floor(v + 0.5);  // half-up
    if (r <= 0.0) return 0;
    if (r >= 255.0) return 255;
    return static_cast<std::uint8_t>(r);
}

void check_factor(double f, const char* op) {
    if (!(f >= 0.0))
        throw std::invalid_argument(std::string(op) + ": factor must be >= 0");
}

}  // namespace

void AugRange::validate() const {
    if (!(lo > 0.0 && lo <= hi))
        throw std::invalid_argument("AugRange: need 0 < lo <= hi");
}

Image8 adjust_brightness(const Image8& img, double f) {
    check_factor(f, "adjust_brightness");
    Image8 out(img.width, img.height, img.channels);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = clamp_round(img.data[i] * f);
    return out;
}

Image8 adjust_contrast(const Image8& img, double f) {
    check_factor(f, "adjust_contrast");
    const Image8 gray = rgb_to_gray(img);
    double mean = 0.0;
    for (std::uint8_t v : gray.data) mean += v;
    mean /= static_cast<double>(gray.data.size());
    const double m = std::floor(mean + 0.5);
    Image8 out(img.width, img.height, img.channels);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = clamp_round(m + f * (img.data[i] - m));
    return out;
}

Image8 adjust_saturation(const Image8& img, double f) {
    check_factor(f, "adjust_saturation");
    if (img.channels != 3)
        throw std::invalid_argument("adjust_saturation: 3-channel image required");
    const Image8 gray = rgb_to_gray(img);
    Image8 out(img.width, img.height, 3);
    const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = gray.data[i];
        for (int c = 0; c < 3; ++c)
            out.data[3 * i + c] = clamp_round(d + f * (img.data[3 * i + c] - d));
    }
    return out;
}

AugRecord sample_chain(Rng& rng, const AugRange& range) {
    range.validate();
    // 7 nonempty subsets of {B,C,S}, equiprobable
    const unsigned mask = 1u + static_cast<unsigned>(rng.next_below(7));
    std::vector<AugKind> kinds;
    if (mask & 1u) kinds.push_back(AugKind::Brightness);
    if (mask & 2u) kinds.push_back(AugKind::Contrast);
    if (mask & 4u) kinds.push_back(AugKind::Saturation);
    // Fisher-Yates
    for (std::size_t i = kinds.size(); i > 1; --i)
        std::swap(kinds[i - 1], kinds[rng.next_below(i)]);
    AugRecord rec;
    for (AugKind k : kinds)
        rec.steps.push_back({k, rng.uniform(range.lo, range.hi)});
    return rec;
}

AugRecord sample_chain(std::uint64_t seed, const AugRange& range) {
    Rng rng(seed);
    return sample_chain(rng, range);
}

Image8 apply_chain(const Image8& img, const AugRecord& rec) {
    if (rec.steps.empty())
        throw std::invalid_argument("apply_chain: empty AugRecord");
    Image8 out = img;
    for (const AugStep& s : rec.steps) {
        switch (s.kind) {
            case AugKind::Brightness: out = adjust_brightness(out, s.factor); break;
            case AugKind::Contrast: out = adjust_contrast(out, s.factor); break;
            case AugKind::Saturation: out = adjust_saturation(out, s.factor); break;
        }
    }
    return out;
}

std::string aug_token(const AugRecord& rec) {
    std::string out;
    char buf[40];
    for (std::size_t i = 0; i < rec.steps.size(); ++i) {
        if (i) out += '|';
        out += static_cast<char>(rec.steps[i].kind);
        out += ':';
        const auto res = std::to_chars(buf, buf + sizeof(buf), rec.steps[i].factor);
        out.append(buf, res.ptr);
    }
    return out;
}

AugRecord parse_aug_token(const std::string& token) {
    AugRecord rec;
    std::size_t pos = 0;
    while (pos < token.size()) {
        std::size_t end = token.find('|', pos);
        if (end == std::string::npos) end = token.size();
        const std::string part = token.substr(pos, end - pos);
        if (part.size() < 3 || part[1] != ':')
            throw std::runtime_error("parse_aug_token: malformed step '" + part + "'");
        const char k = part[0];
        if (k != 'B' && k != 'C' && k != 'S')
            throw std::runtime_error("parse_aug_token: unknown kind '" + part + "'");
        double f = 0.0;
        const char* first = part.data() + 2;
        const char* last = part.data() + part.size();
        const auto res = std::from_chars(first, last, f);
        if (res.ec != std::errc() || res.ptr != last)
            throw std::runtime_error("parse_aug_token: bad factor in '" + part + "'");
        rec.steps.push_back({static_cast<AugKind>(k), f});
        pos = end + 1;
    }
    if (rec.steps.empty()) throw std::runtime_error("parse_aug_token: empty token");
    return rec;
}

}  // namespace cflx
