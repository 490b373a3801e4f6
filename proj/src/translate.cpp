#include "ddic/translate.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ddic/sampler.hpp"

namespace ddic {

void DdicConfig::validate() const {
    if (!(lr >= 0.0))
        throw ConfigError("ddic: lr must be >= 0");
    if (median_kernel < 1 || median_kernel % 2 == 0)
        throw ConfigError("ddic: median kernel must be odd and >= 1, got " +
                          std::to_string(median_kernel));
    if (steps < 0)
        throw ConfigError("ddic: steps must be >= 0");
}

namespace {

// Index of the median element of a k*k window anchored at (r0, c0) with edge
// replication; returns the flat index of the source pixel, ties toward the
// lowest flat index. `buf` is scratch of size k*k.
std::size_t window_median_source(const ImageGrid& img, int r0, int c0, int k,
                                 std::pair<double, std::size_t>* buf) {
    const int h = img.rows(), w = img.cols(), half = k / 2;
    int n = 0;
    for (int dr = -half; dr <= half; ++dr) {
        const int r = std::clamp(r0 + dr, 0, h - 1);
        for (int dc = -half; dc <= half; ++dc) {
            const int c = std::clamp(c0 + dc, 0, w - 1);
            buf[n++] = {img.at(r, c), static_cast<std::size_t>(r) * w + c};
        }
    }
    const int mid = (k * k) / 2;
    std::nth_element(buf, buf + mid, buf + n);
    const double med = buf[mid].first;
    // ties toward the lowest flat index among pixels carrying the median value
    std::size_t src = buf[mid].second;
    for (int i = 0; i < n; ++i)
        if (buf[i].first == med && buf[i].second < src) src = buf[i].second;
    return src;
}

} // namespace

ImageGrid median_filter(const ImageGrid& img, int k) {
    if (k < 1 || k % 2 == 0)
        throw ConfigError("median_filter: window size must be odd and >= 1, got " + std::to_string(k));
    if (k == 1) return img;
    ImageGrid out = img;
    std::vector<std::pair<double, std::size_t>> buf(static_cast<std::size_t>(k) * k);
    for (int r = 0; r < img.rows(); ++r)
        for (int c = 0; c < img.cols(); ++c)
            out.at(r, c) = img[window_median_source(img, r, c, k, buf.data())];
    return out;
}

ImageGrid median_filter_vjp(const ImageGrid& img, int k, const ImageGrid& cotangent) {
    if (k < 1 || k % 2 == 0)
        throw ConfigError("median_filter_vjp: window size must be odd and >= 1");
    require_same_shape(img, cotangent, "median_filter_vjp");
    if (k == 1) return cotangent;
    ImageGrid grad(img.rows(), img.cols(), 0.0);
    std::vector<std::pair<double, std::size_t>> buf(static_cast<std::size_t>(k) * k);
    for (int r = 0; r < img.rows(); ++r)
        for (int c = 0; c < img.cols(); ++c)
            grad[window_median_source(img, r, c, k, buf.data())] += cotangent.at(r, c);
    return grad;
}

double corrcoef(const ImageGrid& a, const ImageGrid& b) {
    require_same_shape(a, b, "corrcoef");
    const double ma = mean(a), mb = mean(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0)
        throw DegenerateCorrelationError("corrcoef: zero-variance input");
    return sab / std::sqrt(saa * sbb);
}

ImageGrid corrcoef_grad_b(const ImageGrid& a, const ImageGrid& b) {
    require_same_shape(a, b, "corrcoef_grad_b");
    const double ma = mean(a), mb = mean(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0)
        throw DegenerateCorrelationError("corrcoef_grad_b: zero-variance input");
    const double denom = std::sqrt(saa * sbb);
    const double r = sab / denom;
    // d r / d b_i = (a_i - ma)/denom - r * (b_i - mb)/sbb
    ImageGrid g = b;
    for (std::size_t i = 0; i < b.size(); ++i)
        g[i] = (a[i] - ma) / denom - r * (b[i] - mb) / sbb;
    return g;
}

namespace {

bool filtered_degenerate(const ImageGrid& x) {
    const double v0 = x[0];
    for (std::size_t i = 1; i < x.size(); ++i)
        if (x[i] != v0) return false;
    return true;
}

} // namespace

DdicStepResult ddic_step(const ImageGrid& x_t, const ImageGrid& y_t, int t,
                         const Denoiser& den_src, const Denoiser& den_dst,
                         const DdicConfig& cfg) {
    cfg.validate();
    require_same_shape(x_t, y_t, "ddic_step");
    if (!den_dst.differentiable())
        throw CapabilityError("ddic_step: target denoiser must expose input gradients");

    DdicStepResult res;
    res.trace.t = t;

    // (1) source chain, constant reference
    res.x_prev = ddim_step(x_t, t, -1, den_src);
    const ImageGrid x_med = median_filter(res.x_prev, cfg.median_kernel);

    // (2) primary target reconstruction
    const DiffusionSchedule& s = den_dst.schedule();
    const double ab_t = s.alpha_bar(t);
    const double ab_p = s.alpha_bar(t - 1);
    const double ratio = std::sqrt(ab_p / ab_t);
    const double coef_eps = std::sqrt(1.0 - ab_p) - std::sqrt(1.0 - ab_t) * ratio;

    ImageGrid eps = den_dst.predict_eps(y_t, t);
    ImageGrid y_hat = lincomb(ratio, y_t, coef_eps, eps);
    ImageGrid y_med = median_filter(y_hat, cfg.median_kernel);

    if (filtered_degenerate(x_med) || filtered_degenerate(y_med)) {
        // correlation undefined; skip the update and keep the primary reconstruction
        res.trace.skipped = true;
        res.y_prev = std::move(y_hat);
        return res;
    }

    // (3) correlation loss on the filtered reconstructions
    const double corr = corrcoef(x_med, y_med);
    res.trace.corr_before = corr;
    res.trace.loss_before = -corr;

    // (4) g = d loss / d y_t: back through the median, then through
    // y_hat = ratio * y_t + coef_eps * eps(y_t).
    ImageGrid d_loss_d_ymed = scaled(corrcoef_grad_b(x_med, y_med), -1.0);
    ImageGrid d_loss_d_yhat = median_filter_vjp(y_hat, cfg.median_kernel, d_loss_d_ymed);
    ImageGrid g = lincomb(ratio, d_loss_d_yhat, coef_eps,
                          den_dst.eps_vjp(y_t, t, d_loss_d_yhat));
    if (!all_finite(g))
        throw NumericError("ddic_step: non-finite gradient at t = " + std::to_string(t));
    const double gnorm = norm2(g);
    res.trace.grad_norm = gnorm;

    // (5) single descent step; (6) recompute the target reconstruction
    if (cfg.lr > 0.0 && gnorm > 0.0) {
        double step_scale = cfg.lr;
        if (cfg.normalized_gradient) step_scale /= gnorm;
        ImageGrid y_new = lincomb(1.0, y_t, -step_scale, g);
        res.y_prev = ddim_step(y_new, t, -1, den_dst);
    } else {
        res.y_prev = std::move(y_hat);
    }

    const ImageGrid y_med_after = median_filter(res.y_prev, cfg.median_kernel);
    if (filtered_degenerate(y_med_after)) {
        res.trace.corr_after = 0.0;
        res.trace.loss_after = 0.0;
        res.trace.skipped = true;
    } else {
        const double corr_after = corrcoef(x_med, y_med_after);
        res.trace.corr_after = corr_after;
        res.trace.loss_after = -corr_after;
    }
    return res;
}

ImageGrid translate_ddib(const ImageGrid& x_src, const Denoiser& den_src, const Denoiser& den_dst) {
    if (den_src.schedule().steps() != den_dst.schedule().steps())
        throw ConfigError("translate: denoisers disagree on schedule length");
    return decode(encode(x_src, den_src), den_dst);
}

DdicRun translate_ddic(const ImageGrid& x_src, const Denoiser& den_src, const Denoiser& den_dst,
                       const DdicConfig& cfg) {
    cfg.validate();
    const int T = den_src.schedule().steps();
    if (T != den_dst.schedule().steps())
        throw ConfigError("translate: denoisers disagree on schedule length");
    if (cfg.steps != 0 && cfg.steps != T)
        throw ConfigError("translate: configured step count " + std::to_string(cfg.steps) +
                          " does not match denoiser schedule T = " + std::to_string(T));

    DdicRun run;
    ImageGrid latent = encode(x_src, den_src);
    ImageGrid x = latent;
    ImageGrid y = std::move(latent);
    for (int t = T; t > 0; --t) {
        DdicStepResult step = ddic_step(x, y, t, den_src, den_dst, cfg);
        x = std::move(step.x_prev);
        y = std::move(step.y_prev);
        if (cfg.trace_stride > 0 && (t % cfg.trace_stride == 0 || t == 1))
            run.trace.push_back(step.trace);
    }
    run.output = std::move(y);
    return run;
}

} // namespace ddic
