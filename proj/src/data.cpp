#include "ddic/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ddic/io.hpp"
#include "ddic/rng.hpp"

namespace ddic {

void PreprocessConfig::validate() const {
    if (out_rows < 1 || out_cols < 1) throw ConfigError("preprocess: output size must be positive");
    if (!(out_pixel_mm > 0.0)) throw ConfigError("preprocess: output pixel size must be positive");
    if (!(norm_hi > norm_lo)) throw ConfigError("preprocess: degenerate normalization range");
}

std::vector<AnnotatedImage> filter_by_hc(const std::vector<AnnotatedImage>& items,
                                         double lo, double hi, int* excluded_missing) {
    if (!(lo < hi)) throw ConfigError("filter_by_hc: lo must be < hi");
    std::vector<AnnotatedImage> kept;
    int missing = 0;
    for (const auto& it : items) {
        if (!it.hc_mm) {
            ++missing;
            continue;
        }
        if (*it.hc_mm >= lo && *it.hc_mm <= hi) kept.push_back(it);
    }
    if (excluded_missing) *excluded_missing = missing;
    return kept;
}

ImageGrid preprocess(const AnnotatedImage& item, const PreprocessConfig& cfg) {
    cfg.validate();
    if (!item.alignment)
        throw DataError("preprocess: item \"" + item.name + "\" lacks alignment metadata");
    if (cfg.apply_mask && !item.mask)
        throw DataError("preprocess: item \"" + item.name + "\" lacks a mask");
    if (!(item.pixel_size_mm > 0.0))
        throw DataError("preprocess: item \"" + item.name + "\" has non-positive pixel size");

    const ImageGrid& src = item.image;
    ImageGrid masked = src;
    if (cfg.apply_mask) {
        require_same_shape(src, *item.mask, "preprocess mask");
        for (std::size_t i = 0; i < masked.size(); ++i)
            if ((*item.mask)[i] < 0.5) masked[i] = 0.0;
    }

    const Alignment& al = *item.alignment;
    const double theta = al.angle_deg * std::numbers::pi / 180.0;
    const double ct = std::cos(theta), st = std::sin(theta);
    const double scale = cfg.out_pixel_mm / item.pixel_size_mm; // output px -> input px
    const double ocr = (cfg.out_rows - 1) / 2.0;
    const double occ = (cfg.out_cols - 1) / 2.0;

    ImageGrid out(cfg.out_rows, cfg.out_cols, 0.0);
    const int h = src.rows(), w = src.cols();
    for (int r = 0; r < cfg.out_rows; ++r) {
        const double dy = (r - ocr) * scale;
        for (int c = 0; c < cfg.out_cols; ++c) {
            const double dx = (c - occ) * scale;
            const double yin = al.center_row + (dy * ct + dx * st);
            const double xin = al.center_col + (-dy * st + dx * ct);
            const int y0 = static_cast<int>(std::floor(yin));
            const int x0 = static_cast<int>(std::floor(xin));
            const double fy = yin - y0, fx = xin - x0;
            auto sample = [&](int y, int x) -> double {
                if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
                return masked.at(y, x);
            };
            if (fy == 0.0 && fx == 0.0) {
                out.at(r, c) = sample(y0, x0);
            } else {
                out.at(r, c) = (1 - fy) * (1 - fx) * sample(y0, x0) +
                               (1 - fy) * fx * sample(y0, x0 + 1) +
                               fy * (1 - fx) * sample(y0 + 1, x0) +
                               fy * fx * sample(y0 + 1, x0 + 1);
            }
        }
    }
    out.range_lo = src.range_lo;
    out.range_hi = src.range_hi;
    return normalize_to(out, cfg.norm_lo, cfg.norm_hi);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_dataset(std::size_t n, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("split_dataset: fraction must lie in (0, 1)");
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng = stream_rng(seed, /*stream=*/0x5b11f);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng() % i; // pinned draw, independent of stdlib
        std::swap(idx[i - 1], idx[j]);
    }
    const auto n_train = static_cast<std::size_t>(
        std::floor(static_cast<double>(n) * train_fraction));
    std::vector<std::size_t> train(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    return {std::move(train), std::move(test)};
}

std::vector<AnnotatedImage> load_dataset(const std::filesystem::path& annotations_file) {
    const json j = read_json_file(annotations_file);
    check_known_keys(j, {"images"}, "annotations");
    if (!j.contains("images") || !j.at("images").is_array())
        throw DataError(annotations_file.string() + ": missing \"images\" array");
    const auto base = annotations_file.parent_path();

    std::vector<AnnotatedImage> items;
    for (const auto& rec : j.at("images")) {
        check_known_keys(rec, {"file", "pixel_size_mm", "hc_mm", "center", "angle_deg", "mask"},
                         "annotations.images[]");
        AnnotatedImage item;
        item.name = rec.at("file").get<std::string>();
        const auto img_path = base / item.name;
        if (!std::filesystem::exists(img_path))
            throw DataError("annotations reference missing image file: " + img_path.string());
        item.image = read_pgm(img_path);
        item.pixel_size_mm = rec.value("pixel_size_mm", 1.0);
        if (rec.contains("hc_mm")) item.hc_mm = rec.at("hc_mm").get<double>();
        if (rec.contains("center") || rec.contains("angle_deg")) {
            Alignment al;
            if (rec.contains("center")) {
                const auto& ctr = rec.at("center");
                al.center_row = ctr.at(0).get<double>();
                al.center_col = ctr.at(1).get<double>();
            }
            al.angle_deg = rec.value("angle_deg", 0.0);
            item.alignment = al;
        }
        if (rec.contains("mask")) {
            const auto mask_path = base / rec.at("mask").get<std::string>();
            if (!std::filesystem::exists(mask_path))
                throw DataError("annotations reference missing mask file: " + mask_path.string());
            item.mask = read_pgm(mask_path);
        }
        items.push_back(std::move(item));
    }
    return items;
}

} // namespace ddic
