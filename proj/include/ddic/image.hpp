#ifndef DDIC_IMAGE_HPP
#define DDIC_IMAGE_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "ddic/errors.hpp"

namespace ddic {

// 2-D scalar field, row-major. `range_lo`/`range_hi` carry the nominal
// intensity range of the stored values (used when quantizing for PSNR and
// when writing rasters); they are metadata and never clamp the pixels.
class ImageGrid {
public:
    ImageGrid() = default;
    ImageGrid(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
        if (rows <= 0 || cols <= 0)
            throw ConfigError("ImageGrid: dimensions must be positive");
    }
    ImageGrid(int rows, int cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (rows <= 0 || cols <= 0 || data_.size() != static_cast<std::size_t>(rows) * cols)
            throw ConfigError("ImageGrid: data size does not match dimensions");
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<const double> pixels() const { return data_; }
    std::span<double> pixels() { return data_; }

    bool same_shape(const ImageGrid& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    double range_lo = 0.0;
    double range_hi = 1.0;

    bool operator==(const ImageGrid& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

inline void require_same_shape(const ImageGrid& a, const ImageGrid& b, const char* what) {
    if (!a.same_shape(b))
        throw DataError(std::string(what) + ": shape mismatch");
}

// out = a*x + b*y, shapes must agree; range metadata taken from x.
inline ImageGrid lincomb(double a, const ImageGrid& x, double b, const ImageGrid& y) {
    require_same_shape(x, y, "lincomb");
    ImageGrid out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x[i] + b * y[i];
    return out;
}

inline ImageGrid scaled(const ImageGrid& x, double a) {
    ImageGrid out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x[i];
    return out;
}

inline double dot(const ImageGrid& a, const ImageGrid& b) {
    require_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const ImageGrid& a) { return std::sqrt(dot(a, a)); }

inline double mean(const ImageGrid& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i];
    return s / static_cast<double>(a.size());
}

// Population variance (1/N).
inline double variance(const ImageGrid& a) {
    const double m = mean(a);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - m;
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

inline bool all_finite(const ImageGrid& a) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!std::isfinite(a[i])) return false;
    return true;
}

} // namespace ddic

#endif
