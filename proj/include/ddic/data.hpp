#ifndef DDIC_DATA_HPP
#define DDIC_DATA_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ddic/image.hpp"

namespace ddic {

// Center/rotation alignment comes from sidecar annotations (no automatic
// anatomy detection): rotating by -angle_deg makes the annotated axis
// horizontal; (center_row, center_col) maps to the output grid center.
struct Alignment {
    double center_row = 0.0;
    double center_col = 0.0;
    double angle_deg = 0.0;
};

struct AnnotatedImage {
    std::string name;
    ImageGrid image;
    double pixel_size_mm = 1.0;
    std::optional<double> hc_mm; // head circumference
    std::optional<ImageGrid> mask;
    std::optional<Alignment> alignment;
};

struct PreprocessConfig {
    int out_rows = 128;
    int out_cols = 128;
    double out_pixel_mm = 1.094;
    bool apply_mask = true;
    double norm_lo = 0.0;
    double norm_hi = 1.0;

    void validate() const;
};

// Keeps items with lo <= HC <= hi (inclusive); items without an HC value are
// excluded and counted in *excluded_missing when provided.
std::vector<AnnotatedImage> filter_by_hc(const std::vector<AnnotatedImage>& items,
                                         double lo, double hi, int* excluded_missing = nullptr);

// Mask -> rotate (bilinear) -> recenter -> rescale to the target pixel size
// -> crop/pad to the output grid -> normalize intensities. The geometric part
// is composed into a single inverse-mapped bilinear resampling; identity
// geometry reproduces input pixels exactly.
ImageGrid preprocess(const AnnotatedImage& item, const PreprocessConfig& cfg);

// Deterministic shuffled split: train size = floor(n * train_fraction),
// remainder is test. Returns index lists into the original order.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_dataset(std::size_t n, double train_fraction, std::uint64_t seed);

// Dataset directory layout: images referenced by an annotations JSON file
// ({"images":[{"file","pixel_size_mm","hc_mm","center","angle_deg","mask"}]}).
std::vector<AnnotatedImage> load_dataset(const std::filesystem::path& annotations_file);

} // namespace ddic

#endif
