#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ddic/rng.hpp"
#include "ddic/sampler.hpp"
#include "ddic/translate.hpp"

using namespace ddic;

namespace {

ImageGrid random_smooth(int n, std::uint64_t seed, double base = 0.3, double amp = 0.2) {
    std::mt19937_64 rng = stream_rng(seed, 77);
    std::normal_distribution<double> gauss(0.0, 1.0);
    ImageGrid img(n, n, 0.0);
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = base + amp * gauss(rng);
    return img;
}

// brute-force reference median: materialize each window with clamped
// coordinates and sort
double reference_median(const ImageGrid& img, int r0, int c0, int k) {
    std::vector<double> win;
    const int half = k / 2;
    for (int dr = -half; dr <= half; ++dr)
        for (int dc = -half; dc <= half; ++dc)
            win.push_back(img.at(std::clamp(r0 + dr, 0, img.rows() - 1),
                                 std::clamp(c0 + dc, 0, img.cols() - 1)));
    std::sort(win.begin(), win.end());
    return win[win.size() / 2];
}

} // namespace

TEST_CASE("median filter basics") {
    SUBCASE("k = 1 is the identity") {
        const ImageGrid img = random_smooth(5, 1);
        CHECK(median_filter(img, 1) == img);
    }
    SUBCASE("constant image is unchanged for any k") {
        const ImageGrid img(6, 6, 0.42);
        CHECK(median_filter(img, 3) == img);
        CHECK(median_filter(img, 5) == img);
    }
    SUBCASE("even kernel rejected") {
        CHECK_THROWS_AS(median_filter(ImageGrid(3, 3, 0.0), 2), ConfigError);
        CHECK_THROWS_AS(median_filter(ImageGrid(3, 3, 0.0), 0), ConfigError);
    }
    SUBCASE("single impulse on zero background is removed (brute-force oracle)") {
        ImageGrid img(5, 5, 0.0);
        img.at(2, 2) = 10.0;
        const ImageGrid out = median_filter(img, 3);
        for (int r = 0; r < 5; ++r)
            for (int c = 0; c < 5; ++c) {
                CHECK(out.at(r, c) == reference_median(img, r, c, 3));
                CHECK(out.at(r, c) == 0.0);
            }
    }
    SUBCASE("random image matches the brute-force oracle, k = 3 and 5") {
        const ImageGrid img = random_smooth(9, 5);
        for (const int k : {3, 5}) {
            const ImageGrid out = median_filter(img, k);
            for (int r = 0; r < 9; ++r)
                for (int c = 0; c < 9; ++c)
                    CHECK(out.at(r, c) == reference_median(img, r, c, k));
        }
    }
}

TEST_CASE("median subgradient equals the finite-difference gradient at strict medians") {
    const ImageGrid img = random_smooth(7, 9);
    const int k = 3;
    const ImageGrid base = median_filter(img, k);
    // random cotangent
    ImageGrid u = random_smooth(7, 10, 0.0, 1.0);
    const ImageGrid g = median_filter_vjp(img, k, u);

    // directional derivative along random v via central differences
    ImageGrid v = random_smooth(7, 11, 0.0, 1.0);
    const double h = 1e-7;
    ImageGrid ip = img, im = img;
    for (std::size_t i = 0; i < img.size(); ++i) {
        ip[i] += h * v[i];
        im[i] -= h * v[i];
    }
    const ImageGrid fp = median_filter(ip, k), fm = median_filter(im, k);
    double fd = 0.0; // u . d(median)/dh
    for (std::size_t i = 0; i < img.size(); ++i) fd += u[i] * (fp[i] - fm[i]) / (2.0 * h);
    const double an = dot(g, v);
    CHECK(an == doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("corrcoef identities and frozen hand value") {
    ImageGrid a(2, 2, 0.0);
    a[0] = 1; a[1] = 2; a[2] = 3; a[3] = 4;
    SUBCASE("self-correlation is one") {
        CHECK(corrcoef(a, a) == doctest::Approx(1.0).epsilon(1e-14));
    }
    SUBCASE("negation flips the sign") {
        CHECK(corrcoef(a, scaled(a, -1.0)) == doctest::Approx(-1.0).epsilon(1e-14));
    }
    SUBCASE("affine maps give sign(c)") {
        ImageGrid b = a;
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = 2.5 * a[i] + 7.0;
        CHECK(corrcoef(a, b) == doctest::Approx(1.0).epsilon(1e-14));
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = -0.3 * a[i] + 1.0;
        CHECK(corrcoef(a, b) == doctest::Approx(-1.0).epsilon(1e-14));
    }
    SUBCASE("hand-computed covariance case") {
        ImageGrid b(2, 2, 0.0);
        b[0] = 1; b[1] = 3; b[2] = 2; b[3] = 5;
        // frozen from an arbitrary-precision evaluation
        CHECK(corrcoef(a, b) == doctest::Approx(0.83152184062029989987).epsilon(1e-12));
    }
    SUBCASE("zero variance throws") {
        CHECK_THROWS_AS(corrcoef(a, ImageGrid(2, 2, 1.0)), DegenerateCorrelationError);
        CHECK_THROWS_AS(corrcoef(ImageGrid(2, 2, 1.0), a), DegenerateCorrelationError);
    }
}

TEST_CASE("corrcoef gradient against central finite differences") {
    const ImageGrid a = random_smooth(6, 21);
    const ImageGrid b = random_smooth(6, 22);
    const ImageGrid g = corrcoef_grad_b(a, b);
    const ImageGrid v = random_smooth(6, 23, 0.0, 1.0);
    const double h = 1e-7;
    ImageGrid bp = b, bm = b;
    for (std::size_t i = 0; i < b.size(); ++i) {
        bp[i] += h * v[i];
        bm[i] -= h * v[i];
    }
    const double fd = (corrcoef(a, bp) - corrcoef(a, bm)) / (2.0 * h);
    CHECK(dot(g, v) == doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("corrcoef gradient vanishes on the positive-affine manifold") {
    const ImageGrid a = random_smooth(8, 31);
    ImageGrid b = a;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = 1.7 * a[i] + 0.3;
    const ImageGrid g = corrcoef_grad_b(a, b);
    CHECK(norm2(g) < 1e-12);
}

namespace {

DdicConfig small_cfg(double lr = 3.0) {
    DdicConfig cfg;
    cfg.lr = lr;
    cfg.median_kernel = 3;
    return cfg;
}

// standalone loss evaluation used for the finite-difference oracle
double ddic_loss_of_y(const ImageGrid& x_med, const ImageGrid& y_t, int t,
                      const Denoiser& den_dst, int k) {
    const ImageGrid y_hat = ddim_step(y_t, t, -1, den_dst);
    return -corrcoef(x_med, median_filter(y_hat, k));
}

} // namespace

TEST_CASE("ddic_step gradient vanishes when the chains already agree") {
    const auto sched = DiffusionSchedule::cosine(200, 0.008);
    const AnalyticGaussianDenoiser den(ImageGrid(8, 8, 0.3), 0.04, sched);
    const ImageGrid x_t = random_smooth(8, 41);
    // positive-affine target: the backward map of the analytic denoiser is
    // affine, so y_hat is a positive-affine image of x_hat and corr = 1
    ImageGrid y_t = x_t;
    for (std::size_t i = 0; i < y_t.size(); ++i) y_t[i] = 1.5 * x_t[i] + 0.1;

    // same-denoiser, affine relation only holds exactly with den_src == den_dst
    const auto res = ddic_step(x_t, x_t, 100, den, den, small_cfg());
    CHECK(res.trace.grad_norm < 1e-8);
    const ImageGrid direct = ddim_step(x_t, 100, -1, den);
    for (std::size_t i = 0; i < direct.size(); ++i)
        CHECK(std::fabs(res.y_prev[i] - direct[i]) < 1e-8);
    CHECK(res.trace.corr_before == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ddic_step latent gradient matches central finite differences") {
    const auto sched = DiffusionSchedule::cosine(200, 0.008);
    const AnalyticGaussianDenoiser den_src(ImageGrid(8, 8, 0.25), 0.04, sched);
    const AnalyticGaussianDenoiser den_dst(ImageGrid(8, 8, 0.55), 0.09, sched);

    int checked = 0;
    for (int probe = 0; probe < 20; ++probe) {
        const int t = 60 + 7 * probe;
        const ImageGrid x_t = random_smooth(8, 100 + probe);
        const ImageGrid y_t = random_smooth(8, 200 + probe, 0.4, 0.25);

        DdicConfig cfg = small_cfg(0.0); // gradient only, no update
        const auto res = ddic_step(x_t, y_t, t, den_src, den_dst, cfg);
        REQUIRE(!res.trace.skipped);

        const ImageGrid x_med = median_filter(res.x_prev, cfg.median_kernel);
        const ImageGrid dir = random_smooth(8, 300 + probe, 0.0, 1.0);
        const double h = 1e-6;
        ImageGrid yp = y_t, ym = y_t;
        for (std::size_t i = 0; i < y_t.size(); ++i) {
            yp[i] += h * dir[i];
            ym[i] -= h * dir[i];
        }
        const double fd = (ddic_loss_of_y(x_med, yp, t, den_dst, 3) -
                           ddic_loss_of_y(x_med, ym, t, den_dst, 3)) /
                          (2.0 * h);
        // recover g . dir from the traced norm? recompute the gradient directly
        // via a tiny lr step is lossy; instead call the pieces the step uses.
        const ImageGrid y_hat = ddim_step(y_t, t, -1, den_dst);
        const ImageGrid y_med = median_filter(y_hat, 3);
        ImageGrid dl_dymed = scaled(corrcoef_grad_b(x_med, y_med), -1.0);
        ImageGrid dl_dyhat = median_filter_vjp(y_hat, 3, dl_dymed);
        const double ab_t = sched.alpha_bar(t), ab_p = sched.alpha_bar(t - 1);
        const double ratio = std::sqrt(ab_p / ab_t);
        const double coef = std::sqrt(1.0 - ab_p) - std::sqrt(1.0 - ab_t) * ratio;
        const ImageGrid g = lincomb(ratio, dl_dyhat, coef, den_dst.eps_vjp(y_t, t, dl_dyhat));

        const double an = dot(g, dir);
        if (std::fabs(fd) > 1e-10) {
            CHECK(std::fabs(an - fd) / std::fabs(fd) < 1e-3);
            ++checked;
        }
    }
    CHECK(checked >= 18); // nearly all probes must be informative
}

TEST_CASE("small steps along the ddic gradient do not decrease correlation") {
    const auto sched = DiffusionSchedule::cosine(100, 0.008);
    const AnalyticGaussianDenoiser den_src(ImageGrid(8, 8, 0.2), 0.04, sched);
    const AnalyticGaussianDenoiser den_dst(ImageGrid(8, 8, 0.6), 0.09, sched);
    int improved = 0;
    for (int probe = 0; probe < 100; ++probe) {
        const int t = 20 + (probe % 60);
        const ImageGrid x_t = random_smooth(8, 1000 + probe);
        const ImageGrid y_t = random_smooth(8, 2000 + probe, 0.5, 0.3);
        DdicConfig cfg = small_cfg(3.0 * 1e-3);
        const auto res = ddic_step(x_t, y_t, t, den_src, den_dst, cfg);
        if (res.trace.skipped) continue;
        if (res.trace.corr_after >= res.trace.corr_before) ++improved;
    }
    CHECK(improved == 100);
}

TEST_CASE("translate_ddib degenerates to the roundtrip for a shared domain") {
    const auto sched = DiffusionSchedule::cosine(1000, 0.008);
    ImageGrid m(6, 6, 0.0);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = 0.3 + 0.05 * std::sin(1.3 * static_cast<double>(i));
    const AnalyticGaussianDenoiser den(m, 0.04, sched);
    ImageGrid x = m;
    std::mt19937_64 rng = stream_rng(5, 5);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += 0.2 * gauss(rng);
    const ImageGrid out = translate_ddib(x, den, den);
    CHECK(norm2(lincomb(1.0, out, -1.0, x)) / norm2(x) < 1e-2);
}

// Scalar two-domain composition: encode with domain 1, decode with domain 2.
// The closed-form flow gives out = m2 + s*(xbar_T - m2)/sqrt(s2 + sbar_T^2)
// with xbar_T = m1 + sqrt(s2 + sbar_T^2)*(x - m1)/s, i.e. slope 1 in (x - m1).
TEST_CASE("translate_ddib shifts the deviation pattern onto the target mean") {
    const int T = 1000;
    const auto sched = DiffusionSchedule::cosine(T, 0.008);
    const double m1 = 0.2, m2 = 0.7, s2 = 0.04;
    const AnalyticGaussianDenoiser d1(ImageGrid(1, 1, m1), s2, sched);
    const AnalyticGaussianDenoiser d2(ImageGrid(1, 1, m2), s2, sched);

    const double ab_T = sched.alpha_bar(T);
    const double sbar_T = std::sqrt((1.0 - ab_T) / ab_T);
    auto oracle = [&](double x) {
        const double xbar_T = m1 + std::sqrt(s2 + sbar_T * sbar_T) * (x - m1) / std::sqrt(s2);
        return m2 + std::sqrt(s2) * (xbar_T - m2) / std::sqrt(s2 + sbar_T * sbar_T);
    };
    const double xs[] = {m1 - 0.3, m1 - 0.1, m1, m1 + 0.1, m1 + 0.3};
    double sxx = 0, sxy = 0, sx = 0, sy = 0, oxx = 0, oxy = 0, ox = 0, oy = 0;
    for (const double x : xs) {
        const double y = translate_ddib(ImageGrid(1, 1, x), d1, d2)[0];
        const double yo = oracle(x);
        sx += x - m1; sy += y; sxx += (x - m1) * (x - m1); sxy += (x - m1) * y;
        ox += x - m1; oy += yo; oxx += (x - m1) * (x - m1); oxy += (x - m1) * yo;
    }
    const int n = 5;
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double slope_oracle = (n * oxy - ox * oy) / (n * oxx - ox * ox);
    const double intercept = (sy - slope * sx) / n;
    CHECK(slope > 0.0);
    CHECK(std::fabs(slope - slope_oracle) / slope_oracle < 0.10);
    CHECK(intercept == doctest::Approx(m2).epsilon(0.05));
}

TEST_CASE("translate_ddic with lr = 0 is bit-identical to translate_ddib") {
    const auto sched = DiffusionSchedule::cosine(150, 0.008);
    const AnalyticGaussianDenoiser d1(ImageGrid(6, 6, 0.25), 0.04, sched);
    const AnalyticGaussianDenoiser d2(ImageGrid(6, 6, 0.6), 0.09, sched);
    const ImageGrid x = random_smooth(6, 51);
    const ImageGrid ddib = translate_ddib(x, d1, d2);
    const DdicRun run = translate_ddic(x, d1, d2, small_cfg(0.0));
    CHECK(run.output == ddib);
    CHECK(run.trace.size() == 150);
}

TEST_CASE("translate_ddic is bit-deterministic with a sane trace") {
    const auto sched = DiffusionSchedule::cosine(120, 0.008);
    const AnalyticGaussianDenoiser d1(ImageGrid(8, 8, 0.25), 0.04, sched);
    const AnalyticGaussianDenoiser d2(ImageGrid(8, 8, 0.6), 0.09, sched);
    const ImageGrid x = random_smooth(8, 61);
    const DdicRun a = translate_ddic(x, d1, d2, small_cfg(1.0));
    const DdicRun b = translate_ddic(x, d1, d2, small_cfg(1.0));
    CHECK(a.output == b.output);

    // the two analytic backward chains are affinely related, so the guided
    // chain stays pinned at the correlation optimum; the majority-improvement
    // trace property is exercised on trained denoisers in the acceptance run
    REQUIRE(!a.trace.empty());
    for (const auto& tr : a.trace) {
        if (tr.skipped) continue;
        CHECK(std::isfinite(tr.loss_before));
        CHECK(std::isfinite(tr.grad_norm));
        CHECK(tr.corr_before > 0.9);
        CHECK(tr.corr_after > 0.9);
    }
}

TEST_CASE("ddic validation errors") {
    const auto sched = DiffusionSchedule::cosine(50, 0.008);
    const AnalyticGaussianDenoiser d1(ImageGrid(4, 4, 0.2), 0.04, sched);
    DdicConfig bad;
    bad.median_kernel = 4;
    CHECK_THROWS_AS(translate_ddic(ImageGrid(4, 4, 0.1), d1, d1, bad), ConfigError);
    DdicConfig mismatched;
    mismatched.steps = 49;
    CHECK_THROWS_AS(translate_ddic(ImageGrid(4, 4, 0.1), d1, d1, mismatched), ConfigError);
    const auto sched2 = DiffusionSchedule::cosine(60, 0.008);
    const AnalyticGaussianDenoiser d2(ImageGrid(4, 4, 0.2), 0.04, sched2);
    CHECK_THROWS_AS(translate_ddib(ImageGrid(4, 4, 0.1), d1, d2), ConfigError);
}
