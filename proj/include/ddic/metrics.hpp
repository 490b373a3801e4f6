#ifndef DDIC_METRICS_HPP
#define DDIC_METRICS_HPP

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ddic/image.hpp"

namespace ddic {

struct HistogramSpec {
    int bins = 64;
    // explicit value ranges; when absent each image uses its own min..max
    std::optional<std::pair<double, double>> range_x;
    std::optional<std::pair<double, double>> range_y;
    double log_base = 2.0;
};

// Joint-histogram mutual information (in units of log_base).
double mutual_information(const ImageGrid& x, const ImageGrid& y, const HistogramSpec& spec = {});

// Marginal entropy from the same histogram estimator, same units.
double marginal_entropy(const ImageGrid& x, const HistogramSpec& spec = {});

// Peak signal-to-noise ratio in dB with MAX_I = 255; both operands are
// quantized to the 8-bit range using their own range metadata first.
// Identical quantized images return +infinity.
double psnr(const ImageGrid& a, const ImageGrid& b);

constexpr double kPsnrInfinite = std::numeric_limits<double>::infinity();

// ROI rectangle + background rectangle, in pixel coordinates.
struct RoiSpec {
    int roi_row = 0, roi_col = 0, roi_height = 0, roi_width = 0;
    int bg_row = 0, bg_col = 0, bg_height = 0, bg_width = 0;

    void validate(int rows, int cols) const;
};

// Contrast-to-noise ratio |mean_roi - mean_bg| / sqrt(var_roi + var_bg)
// with population variances. Throws NumericError when both patches are
// constant and equal.
double cnr(const ImageGrid& img, const RoiSpec& roi);

class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::vector<double> embed(const ImageGrid& img) const = 0;
    virtual int dim() const = 0;
    virtual std::string name() const = 0;
};

// Default pixel-space features: average-pool to target x target, flatten.
// Makes the Frechet distance exactly computable without a pretrained network;
// a learned extractor can be plugged in through the same interface.
class DownsampleFlattenExtractor : public FeatureExtractor {
public:
    explicit DownsampleFlattenExtractor(int target = 16) : target_(target) {}
    std::vector<double> embed(const ImageGrid& img) const override;
    int dim() const override { return target_ * target_; }
    std::string name() const override { return "downsample" + std::to_string(target_) + "-flatten"; }

private:
    int target_;
};

// Frechet distance between Gaussian fits of the embedded sets:
// |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}).
// cov_reg adds reg*I to both covariances (required when a set is smaller
// than the feature dimension); pass 0 to disable.
double fid(const std::vector<ImageGrid>& set_a, const std::vector<ImageGrid>& set_b,
           const FeatureExtractor& fx, double cov_reg = 1e-6);

double fid_from_features(const std::vector<std::vector<double>>& feats_a,
                         const std::vector<std::vector<double>>& feats_b, double cov_reg = 1e-6);

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0; // two-sided
};

// Unequal-variance (Welch) t-test.
WelchResult compare_groups(std::span<const double> a, std::span<const double> b);

// Regularized incomplete beta I_x(a, b); exposed for testing.
double incomplete_beta(double a, double b, double x);

} // namespace ddic

#endif
