#include "ddic/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace ddic {

namespace {

std::vector<int> bin_indices(const ImageGrid& img, int bins,
                             const std::optional<std::pair<double, double>>& range) {
    double lo, hi;
    if (range) {
        lo = range->first;
        hi = range->second;
    } else {
        lo = img[0];
        hi = img[0];
        for (std::size_t i = 1; i < img.size(); ++i) {
            lo = std::min(lo, img[i]);
            hi = std::max(hi, img[i]);
        }
    }
    if (!(hi > lo))
        throw HistogramError("histogram: degenerate value range");
    std::vector<int> idx(img.size());
    const double scale = bins / (hi - lo);
    for (std::size_t i = 0; i < img.size(); ++i) {
        int b = static_cast<int>((img[i] - lo) * scale);
        idx[i] = std::clamp(b, 0, bins - 1);
    }
    return idx;
}

} // namespace

double mutual_information(const ImageGrid& x, const ImageGrid& y, const HistogramSpec& spec) {
    require_same_shape(x, y, "mutual_information");
    if (spec.bins < 2) throw ConfigError("mutual_information: need at least 2 bins");
    const int B = spec.bins;
    const std::vector<int> bx = bin_indices(x, B, spec.range_x);
    const std::vector<int> by = bin_indices(y, B, spec.range_y);

    std::vector<double> joint(static_cast<std::size_t>(B) * B, 0.0);
    for (std::size_t i = 0; i < bx.size(); ++i)
        joint[static_cast<std::size_t>(bx[i]) * B + by[i]] += 1.0;
    const double n = static_cast<double>(bx.size());
    std::vector<double> px(B, 0.0), py(B, 0.0);
    for (int i = 0; i < B; ++i)
        for (int j = 0; j < B; ++j) {
            const double p = joint[static_cast<std::size_t>(i) * B + j] / n;
            px[i] += p;
            py[j] += p;
        }
    const double log_b = std::log(spec.log_base);
    double mi = 0.0;
    for (int i = 0; i < B; ++i)
        for (int j = 0; j < B; ++j) {
            const double p = joint[static_cast<std::size_t>(i) * B + j] / n;
            if (p > 0.0) mi += p * std::log(p / (px[i] * py[j])) / log_b;
        }
    return mi;
}

double marginal_entropy(const ImageGrid& x, const HistogramSpec& spec) {
    if (spec.bins < 2) throw ConfigError("marginal_entropy: need at least 2 bins");
    const std::vector<int> bx = bin_indices(x, spec.bins, spec.range_x);
    std::vector<double> px(spec.bins, 0.0);
    for (int b : bx) px[b] += 1.0;
    const double n = static_cast<double>(bx.size());
    const double log_b = std::log(spec.log_base);
    double h = 0.0;
    for (double c : px)
        if (c > 0.0) {
            const double p = c / n;
            h -= p * std::log(p) / log_b;
        }
    return h;
}

namespace {

int quantize8(double v, double lo, double hi) {
    const double t = (v - lo) / (hi - lo);
    return std::clamp(static_cast<int>(std::lround(t * 255.0)), 0, 255);
}

} // namespace

double psnr(const ImageGrid& a, const ImageGrid& b) {
    require_same_shape(a, b, "psnr");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = quantize8(a[i], a.range_lo, a.range_hi) -
                         quantize8(b[i], b.range_lo, b.range_hi);
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return kPsnrInfinite;
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

void RoiSpec::validate(int rows, int cols) const {
    auto inside = [&](int r, int c, int h, int w) {
        return h > 0 && w > 0 && r >= 0 && c >= 0 && r + h <= rows && c + w <= cols;
    };
    if (!inside(roi_row, roi_col, roi_height, roi_width) ||
        !inside(bg_row, bg_col, bg_height, bg_width))
        throw ConfigError("RoiSpec: rectangle outside the image");
    const bool overlap = roi_row < bg_row + bg_height && bg_row < roi_row + roi_height &&
                         roi_col < bg_col + bg_width && bg_col < roi_col + roi_width;
    if (overlap) throw ConfigError("RoiSpec: ROI and background overlap");
}

namespace {

std::pair<double, double> patch_stats(const ImageGrid& img, int r0, int c0, int h, int w) {
    double s = 0.0;
    for (int r = r0; r < r0 + h; ++r)
        for (int c = c0; c < c0 + w; ++c) s += img.at(r, c);
    const double n = static_cast<double>(h) * w;
    const double m = s / n;
    double v = 0.0;
    for (int r = r0; r < r0 + h; ++r)
        for (int c = c0; c < c0 + w; ++c) {
            const double d = img.at(r, c) - m;
            v += d * d;
        }
    return {m, v / n};
}

} // namespace

double cnr(const ImageGrid& img, const RoiSpec& roi) {
    roi.validate(img.rows(), img.cols());
    const auto [m_roi, v_roi] = patch_stats(img, roi.roi_row, roi.roi_col, roi.roi_height, roi.roi_width);
    const auto [m_bg, v_bg] = patch_stats(img, roi.bg_row, roi.bg_col, roi.bg_height, roi.bg_width);
    const double denom = std::sqrt(v_roi + v_bg);
    if (denom == 0.0) {
        if (m_roi == m_bg)
            throw NumericError("cnr: both regions constant and equal");
        return kPsnrInfinite; // constant unequal patches: infinite contrast
    }
    return std::abs(m_roi - m_bg) / denom;
}

std::vector<double> DownsampleFlattenExtractor::embed(const ImageGrid& img) const {
    const int t = target_;
    std::vector<double> out(static_cast<std::size_t>(t) * t, 0.0);
    // average pool with fractional bins so any input size maps to t x t
    const double sr = static_cast<double>(img.rows()) / t;
    const double sc = static_cast<double>(img.cols()) / t;
    for (int i = 0; i < t; ++i) {
        const int r0 = static_cast<int>(std::floor(i * sr));
        const int r1 = std::max(r0 + 1, static_cast<int>(std::floor((i + 1) * sr)));
        for (int j = 0; j < t; ++j) {
            const int c0 = static_cast<int>(std::floor(j * sc));
            const int c1 = std::max(c0 + 1, static_cast<int>(std::floor((j + 1) * sc)));
            double s = 0.0;
            int n = 0;
            for (int r = r0; r < std::min(r1, img.rows()); ++r)
                for (int c = c0; c < std::min(c1, img.cols()); ++c) {
                    s += img.at(r, c);
                    ++n;
                }
            out[static_cast<std::size_t>(i) * t + j] = n ? s / n : 0.0;
        }
    }
    return out;
}

double fid_from_features(const std::vector<std::vector<double>>& fa,
                         const std::vector<std::vector<double>>& fb, double cov_reg) {
    if (fa.size() < 2 || fb.size() < 2)
        throw DataError("fid: each set needs at least 2 items");
    const int d = static_cast<int>(fa.front().size());
    const auto n_a = static_cast<Eigen::Index>(fa.size());
    const auto n_b = static_cast<Eigen::Index>(fb.size());
    if (cov_reg <= 0.0 && (n_a <= d || n_b <= d))
        throw NumericError("fid: sets smaller than the feature dimension require covariance regularization");

    auto fit = [&](const std::vector<std::vector<double>>& f, Eigen::Index n) {
        Eigen::MatrixXd X(n, d);
        for (Eigen::Index i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) X(i, j) = f[static_cast<std::size_t>(i)][j];
        Eigen::VectorXd mu = X.colwise().mean();
        Eigen::MatrixXd C = X.rowwise() - mu.transpose();
        Eigen::MatrixXd cov = (C.transpose() * C) / static_cast<double>(n - 1);
        if (cov_reg > 0.0) cov.diagonal().array() += cov_reg;
        return std::make_pair(mu, cov);
    };
    const auto [mu_a, cov_a] = fit(fa, n_a);
    const auto [mu_b, cov_b] = fit(fb, n_b);

    // Tr((Sa Sb)^{1/2}) = Tr((Sa^{1/2} Sb Sa^{1/2})^{1/2}), symmetric PSD form;
    // negative eigenvalues from rounding are clipped at zero.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_a(cov_a);
    Eigen::VectorXd ev_a = es_a.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    Eigen::MatrixXd sqrt_a = es_a.eigenvectors() * ev_a.asDiagonal() * es_a.eigenvectors().transpose();
    Eigen::MatrixXd inner = sqrt_a * cov_b * sqrt_a;
    inner = 0.5 * (inner + inner.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_i(inner);
    const double tr_sqrt = es_i.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

    const double mean_term = (mu_a - mu_b).squaredNorm();
    const double dist = mean_term + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
    return std::max(dist, 0.0);
}

double fid(const std::vector<ImageGrid>& set_a, const std::vector<ImageGrid>& set_b,
           const FeatureExtractor& fx, double cov_reg) {
    auto embed_all = [&](const std::vector<ImageGrid>& set) {
        std::vector<std::vector<double>> f;
        f.reserve(set.size());
        for (const auto& img : set) f.push_back(fx.embed(img));
        return f;
    };
    return fid_from_features(embed_all(set_a), embed_all(set_b), cov_reg);
}

namespace {

// log Gamma via Lanczos
double lgamma_(double x) { return std::lgamma(x); }

double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16, kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

} // namespace

double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = lgamma_(a + b) - lgamma_(a) - lgamma_(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

WelchResult compare_groups(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2)
        throw StatsError("compare_groups: each group needs at least 2 values");
    auto msv = [](std::span<const double> v) {
        double s = 0.0;
        for (double x : v) s += x;
        const double m = s / static_cast<double>(v.size());
        double q = 0.0;
        for (double x : v) q += (x - m) * (x - m);
        return std::make_pair(m, q / static_cast<double>(v.size() - 1)); // sample variance
    };
    const auto [ma, va] = msv(a);
    const auto [mb, vb] = msv(b);
    if (va == 0.0 && vb == 0.0)
        throw StatsError("compare_groups: degenerate variance in both groups");

    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double sa = va / na, sb = vb / nb;
    WelchResult res;
    res.t = (ma - mb) / std::sqrt(sa + sb);
    res.df = (sa + sb) * (sa + sb) /
             (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    if (res.t == 0.0) {
        res.p = 1.0;
    } else {
        const double x = res.df / (res.df + res.t * res.t);
        res.p = incomplete_beta(res.df / 2.0, 0.5, x);
    }
    return res;
}

} // namespace ddic
