#include "cflx/pref_data.hpp"

#include <sys/stat.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cflx/color.hpp"
#include "cflx/png_io.hpp"
#include "cflx/rng.hpp"

namespace fs = std::filesystem;

namespace cflx {

void Triplet::check() const {
    if (winner.width != loser.width || winner.height != loser.height ||
        condition.width != loser.width || condition.height != loser.height)
        throw std::runtime_error("Triplet: dimension mismatch");
    if (condition.channels != 1)
        throw std::runtime_error("Triplet: condition must be 1-channel");
    if (rgb_to_gray(loser).data != condition.data)
        throw std::runtime_error("Triplet: condition != gray(loser)");
}

FilterSpec FilterSpec::preset(const std::string& name) {
    FilterSpec s;
    if (name == "basic-color") {
        s.enable_colorfulness = true;
        s.enable_saturation = false;
        s.enable_brightness = false;
    } else if (name == "dpo") {
        s.enable_colorfulness = true;
        s.enable_saturation = true;
        s.enable_brightness = true;
    } else if (name == "none") {
        s.enable_colorfulness = false;
        s.enable_saturation = false;
        s.enable_brightness = false;
    } else {
        throw std::invalid_argument("FilterSpec: unknown preset '" + name + "'");
    }
    return s;
}

FilterResult filter_dataset(const std::vector<Image8>& images, const FilterSpec& spec) {
    if (images.empty())
        throw std::invalid_argument("filter_dataset: empty image list");
    FilterResult out;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const double cf = colorfulness(images[i]);
        const HsvStats hs = hsv_stats(images[i]);
        bool keep = true;
        if (spec.enable_colorfulness && cf < spec.min_colorfulness) keep = false;
        if (spec.enable_saturation &&
            (hs.mean_saturation < spec.sat_lo || hs.mean_saturation > spec.sat_hi))
            keep = false;
        if (spec.enable_brightness &&
            (hs.mean_brightness < spec.bright_lo || hs.mean_brightness > spec.bright_hi))
            keep = false;
        out.reports.push_back({i, cf, hs.mean_saturation, hs.mean_brightness, keep});
        if (keep) out.kept.push_back(i);
    }
    return out;
}

Triplet build_triplet(const Image8& gt, std::uint64_t seed, const AugRange& range) {
    if (gt.channels != 3)
        throw std::invalid_argument("build_triplet: 3-channel ground truth required");
    Triplet t;
    t.aug = sample_chain(seed, range);
    t.winner = gt;
    t.loser = apply_chain(gt, t.aug);
    t.condition = rgb_to_gray(t.loser);
    return t;
}

std::vector<CorpusImage> gen_synthetic_corpus(int n, int size, std::uint64_t palette_seed) {
    if (n < 1) throw std::invalid_argument("gen_synthetic_corpus: n >= 1 required");
    if (size < 8 || size > 64)
        throw std::invalid_argument("gen_synthetic_corpus: size must be in [8,64]");
    Rng rng = Rng::stream(palette_seed, "corpus");
    std::vector<CorpusImage> out;
    out.reserve(n);
    for (int i = 0; i < n; ++i) {
        const int hue_class = static_cast<int>(rng.next_below(2));
        Image8 img(size, size, 3);
        // warm hues for disks, cool for rectangles
        const double hue = hue_class == 0 ? rng.uniform(0.98, 1.06) : rng.uniform(0.55, 0.65);
        // Muted same-hue background keeps every pixel carrying class color,
        // so the corpus is vivid overall while the shape stays distinct.
        Hsv bg_hsv;
        bg_hsv.h = hue >= 1.0 ? hue - 1.0 : hue;
        bg_hsv.s = rng.uniform(0.55, 0.75);
        bg_hsv.v = rng.uniform(0.35, 0.55);
        double br, bgc, bb;
        hsv_to_rgb(bg_hsv, br, bgc, bb);
        const std::uint8_t b0 = quantize8(br), b1 = quantize8(bgc), b2 = quantize8(bb);
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) {
                img.at(x, y, 0) = b0;
                img.at(x, y, 1) = b1;
                img.at(x, y, 2) = b2;
            }
        Hsv hsv;
        hsv.h = bg_hsv.h;
        hsv.s = rng.uniform(0.85, 1.0);
        hsv.v = rng.uniform(0.85, 1.0);
        double r, g, b;
        hsv_to_rgb(hsv, r, g, b);
        const std::uint8_t cr = quantize8(r), cg = quantize8(g), cb = quantize8(b);

        const double cx = rng.uniform(size * 0.35, size * 0.65);
        const double cy = rng.uniform(size * 0.35, size * 0.65);
        if (hue_class == 0) {
            const double rad = rng.uniform(size * 0.25, size * 0.38);
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    const double dx = x - cx, dy = y - cy;
                    if (dx * dx + dy * dy <= rad * rad) {
                        img.at(x, y, 0) = cr;
                        img.at(x, y, 1) = cg;
                        img.at(x, y, 2) = cb;
                    }
                }
        } else {
            const double hw = rng.uniform(size * 0.22, size * 0.34);
            const double hh = rng.uniform(size * 0.22, size * 0.34);
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x)
                    if (std::abs(x - cx) <= hw && std::abs(y - cy) <= hh) {
                        img.at(x, y, 0) = cr;
                        img.at(x, y, 1) = cg;
                        img.at(x, y, 2) = cb;
                    }
        }
        out.push_back({std::move(img), hue_class});
    }
    return out;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_manifest: cannot open " + path);
    for (const ManifestEntry& e : entries)
        f << e.condition_path << '\t' << e.winner_path << '\t' << e.loser_path
          << '\t' << e.aug << '\t' << e.label << '\n';
    if (!f) throw std::runtime_error("write_manifest: write failed: " + path);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_manifest: cannot open " + path);
    std::vector<ManifestEntry> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t pos = 0;
        while (true) {
            const std::size_t tab = line.find('\t', pos);
            fields.push_back(line.substr(pos, tab == std::string::npos ? tab : tab - pos));
            if (tab == std::string::npos) break;
            pos = tab + 1;
        }
        if (fields.size() != 5)
            throw std::runtime_error("read_manifest: malformed line " +
                                     std::to_string(lineno) + " in " + path);
        ManifestEntry e;
        e.condition_path = fields[0];
        e.winner_path = fields[1];
        e.loser_path = fields[2];
        e.aug = fields[3];
        try {
            e.label = std::stoi(fields[4]);
        } catch (const std::exception&) {
            throw std::runtime_error("read_manifest: bad label at line " +
                                     std::to_string(lineno) + " in " + path);
        }
        out.push_back(std::move(e));
    }
    return out;
}

std::string write_triplets(const std::string& dir, const std::vector<Triplet>& triplets) {
    fs::create_directories(dir);
    std::vector<ManifestEntry> entries;
    for (std::size_t i = 0; i < triplets.size(); ++i) {
        const std::string base = "t" + std::to_string(i);
        ManifestEntry e;
        e.condition_path = base + "_cond.png";
        e.winner_path = base + "_win.png";
        e.loser_path = base + "_lose.png";
        e.aug = aug_token(triplets[i].aug);
        e.label = triplets[i].label;
        write_png(dir + "/" + e.condition_path, triplets[i].condition);
        write_png(dir + "/" + e.winner_path, triplets[i].winner);
        write_png(dir + "/" + e.loser_path, triplets[i].loser);
        entries.push_back(std::move(e));
    }
    const std::string manifest = dir + "/manifest.tsv";
    write_manifest(entries, manifest);
    return manifest;
}

std::vector<Triplet> load_triplets(const std::string& manifest_path) {
    const std::vector<ManifestEntry> entries = read_manifest(manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();
    std::vector<Triplet> out;
    for (const ManifestEntry& e : entries) {
        for (const std::string* p : {&e.condition_path, &e.winner_path, &e.loser_path}) {
            const fs::path full = base / *p;
            if (!fs::exists(full))
                throw std::runtime_error("load_triplets: missing referenced file " +
                                         full.string());
        }
        Triplet t;
        t.condition = read_png((base / e.condition_path).string());
        t.winner = read_png((base / e.winner_path).string());
        t.loser = read_png((base / e.loser_path).string());
        t.aug = parse_aug_token(e.aug);
        t.label = e.label;
        t.check();
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace cflx
