#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cflx/augment.hpp"
#include "cflx/image.hpp"

namespace cflx {

// Preference record: condition c = gray(loser), winner x^w = ground truth,
// loser x^l = augmented ground truth.
struct Triplet {
    Image8 condition;  // 1-channel
    Image8 winner;
    Image8 loser;
    AugRecord aug;
    int label = -1;  // dominant-hue class, -1 when unknown

    void check() const;  // enforces condition == gray(loser), equal dims
};

struct FilterSpec {
    double min_colorfulness = 15.0;
    double sat_lo = 0.3, sat_hi = 0.7;
    double bright_lo = 0.4, bright_hi = 0.8;
    bool enable_colorfulness = true;
    bool enable_saturation = false;
    bool enable_brightness = false;

    static FilterSpec preset(const std::string& name);  // basic-color | dpo | none
};

struct FilterReport {
    std::size_t index;
    double colorfulness;
    double mean_saturation;
    double mean_brightness;
    bool kept;
};

struct FilterResult {
    std::vector<std::size_t> kept;
    std::vector<FilterReport> reports;
};

FilterResult filter_dataset(const std::vector<Image8>& images, const FilterSpec& spec);

Triplet build_triplet(const Image8& gt, std::uint64_t seed, const AugRange& range);

struct CorpusImage {
    Image8 img;
    int hue_class;  // 0 = warm (red family), 1 = cool (blue family)
};

// Deterministic colored-shape images over neutral backgrounds. Disks carry
// warm hues, rectangles cool hues, so the class is recoverable from the
// grayscale structure.
std::vector<CorpusImage> gen_synthetic_corpus(int n, int size, std::uint64_t palette_seed);

// Manifest line: condition_path \t winner_path \t loser_path \t aug_token \t label
struct ManifestEntry {
    std::string condition_path;
    std::string winner_path;
    std::string loser_path;
    std::string aug;
    int label = -1;
};

// Writes PNGs plus manifest.tsv under dir; returns the manifest path.
std::string write_triplets(const std::string& dir, const std::vector<Triplet>& triplets);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);
std::vector<ManifestEntry> read_manifest(const std::string& path);
// Reads images relative to the manifest's directory and checks the triplet
// invariant. A missing referenced file is an error naming the path.
std::vector<Triplet> load_triplets(const std::string& manifest_path);

}  // namespace cflx
