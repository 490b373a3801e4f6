#include <doctest.h>

#include <cmath>
#include <random>

#include "ddic/rng.hpp"
#include "ddic/sampler.hpp"

using namespace ddic;

namespace {

// test denoiser predicting a constant value everywhere
class ConstDenoiser : public Denoiser {
public:
    ConstDenoiser(double value, DiffusionSchedule sched) : value_(value), sched_(std::move(sched)) {}
    ImageGrid predict_eps(const ImageGrid& x, int) const override {
        return ImageGrid(x.rows(), x.cols(), value_);
    }
    const DiffusionSchedule& schedule() const override { return sched_; }

private:
    double value_;
    DiffusionSchedule sched_;
};

} // namespace

TEST_CASE("ddpm_step with zero prediction and zero noise rescales by 1/sqrt(alpha)") {
    const auto sched = DiffusionSchedule::from_betas({0.1, 0.2, 0.3});
    const ConstDenoiser den(0.0, sched);
    ImageGrid x(2, 2, 0.0);
    x[0] = 0.5; x[1] = -1.0; x[2] = 0.25; x[3] = 2.0;
    const ImageGrid noise(2, 2, 0.0);
    const ImageGrid out = ddpm_step(x, 2, den, noise);
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(out[i] == x[i] / std::sqrt(1.0 - 0.2));
}

TEST_CASE("ddpm_step scalar hand-evaluated case") {
    // alpha_t = 0.99 with abar_t = 0.5: beta_1 = 1 - 0.5/0.99, beta_2 = 0.01
    const auto sched = DiffusionSchedule::from_betas({1.0 - 0.5 / 0.99, 0.01});
    CHECK(sched.alpha_bar(2) == doctest::Approx(0.5).epsilon(1e-14));
    const ConstDenoiser den(0.2, sched);
    const ImageGrid x(1, 1, 1.0);
    const ImageGrid noise(1, 1, 0.0);
    const ImageGrid out = ddpm_step(x, 2, den, noise);
    // (1/sqrt(0.99)) * (1 - (0.01/sqrt(0.5)) * 0.2), frozen from an
    // arbitrary-precision evaluation
    CHECK(out[0] == doctest::Approx(1.0021951390411372697).epsilon(1e-12));
}

TEST_CASE("ddpm_step final step returns the mean (noise suppressed)") {
    const auto sched = DiffusionSchedule::cosine(10);
    const ConstDenoiser den(0.3, sched);
    const ImageGrid x(1, 1, 0.7);
    ImageGrid huge_noise(1, 1, 1e6);
    const ImageGrid a = ddpm_step(x, 1, den, huge_noise);
    const ImageGrid b = ddpm_step(x, 1, den, ImageGrid(1, 1, 0.0));
    CHECK(a == b);
}

TEST_CASE("ddim_step scalar hand-evaluated case") {
    // abar_1 = 0.8, abar_2 = 0.7
    const auto sched = DiffusionSchedule::from_betas({0.2, 1.0 - 0.7 / 0.8});
    CHECK(sched.alpha_bar(1) == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(sched.alpha_bar(2) == doctest::Approx(0.7).epsilon(1e-14));
    const ConstDenoiser den(0.5, sched);
    const ImageGrid x(1, 1, 1.0);
    const ImageGrid out = ddim_step(x, 1, +1, den);
    // sqrt(0.7/0.8) + (sqrt(0.3) - sqrt(0.2) * sqrt(0.7/0.8)) * 0.5, frozen
    CHECK(out[0] == doctest::Approx(1.0001106188125495161).epsilon(1e-12));
}

TEST_CASE("ddim_step is the identity when alpha_bar does not move") {
    // beta = 1e-300 keeps abar bit-identical across the step
    const auto sched = DiffusionSchedule::from_betas({0.1, 1e-300});
    CHECK(sched.alpha_bar(2) == sched.alpha_bar(1));
    const ConstDenoiser den(0.37, sched);
    ImageGrid x(2, 3, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.21 * static_cast<double>(i) - 0.5;
    CHECK(ddim_step(x, 1, +1, den) == x);
}

TEST_CASE("ddim forward/backward single-step roundtrip with the analytic denoiser") {
    const auto sched = DiffusionSchedule::cosine(1000, 0.008);
    ImageGrid m(4, 4, 0.3);
    const AnalyticGaussianDenoiser den(m, 0.04, sched);
    ImageGrid x(4, 4, 0.0);
    std::mt19937_64 rng = stream_rng(3, 0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.3 + 0.2 * gauss(rng);
    const int t = 500;
    const ImageGrid fwd = ddim_step(x, t, +1, den);
    const ImageGrid back = ddim_step(fwd, t + 1, -1, den);
    const double rel = norm2(lincomb(1.0, back, -1.0, x)) / norm2(x);
    CHECK(rel < 1e-3);
}

TEST_CASE("ddim_step range checks") {
    const auto sched = DiffusionSchedule::cosine(10);
    const ConstDenoiser den(0.0, sched);
    const ImageGrid x(1, 1, 0.0);
    CHECK_THROWS_AS(ddim_step(x, 10, +1, den), IndexError);
    CHECK_THROWS_AS(ddim_step(x, 0, -1, den), IndexError);
    CHECK_THROWS_AS(ddim_step(x, 3, 2, den), IndexError);
}

TEST_CASE("encode with a zero denoiser telescopes to a pure rescaling") {
    const auto sched = DiffusionSchedule::cosine(300, 0.008);
    const ConstDenoiser den(0.0, sched);
    ImageGrid x(2, 2, 0.0);
    x[0] = 1.0; x[1] = -0.5; x[2] = 0.25; x[3] = 0.75;
    const ImageGrid latent = encode(x, den);
    const double scale = std::sqrt(sched.alpha_bar(300));
    for (std::size_t i = 0; i < x.size(); ++i)
        CHECK(latent[i] == doctest::Approx(scale * x[i]).epsilon(1e-12));
}

TEST_CASE("encode/decode roundtrip error shrinks with T and is < 1e-2 at T=1000") {
    ImageGrid m(8, 8, 0.0);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) m.at(r, c) = 0.3 + 0.1 * std::sin(0.7 * (r * 8 + c));
    std::mt19937_64 rng = stream_rng(11, 0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    ImageGrid x0 = m;
    for (std::size_t i = 0; i < x0.size(); ++i) x0[i] += 0.2 * gauss(rng);

    double prev = 1e9;
    for (const int T : {100, 300, 1000}) {
        const auto sched = DiffusionSchedule::cosine(T, 0.008);
        const AnalyticGaussianDenoiser den(m, 0.04, sched);
        const ImageGrid rec = decode(encode(x0, den), den);
        const double rel = norm2(lincomb(1.0, rec, -1.0, x0)) / norm2(x0);
        CHECK(rel < prev);
        if (T == 1000) CHECK(rel < 1e-2);
        prev = rel;
    }
}

TEST_CASE("encode and decode are bit-deterministic") {
    const auto sched = DiffusionSchedule::cosine(200, 0.008);
    const AnalyticGaussianDenoiser den(ImageGrid(4, 4, 0.2), 0.09, sched);
    ImageGrid x(4, 4, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.05 * static_cast<double>(i) - 0.4;
    const ImageGrid l1 = encode(x, den), l2 = encode(x, den);
    CHECK(l1 == l2);
    CHECK(decode(l1, den) == decode(l2, den));
}

// Scalar probability-flow oracle: in xbar = x/sqrt(abar), sbar = sqrt((1-abar)/abar)
// coordinates the deterministic sampler discretizes dxbar/dsbar = eps_hat, which for
// the analytic denoiser is sbar*(xbar - m)/(s2 + sbar^2) with closed-form solution
// xbar = m + C*sqrt(s2 + sbar^2). Integrate it independently with RK4 and compare.
TEST_CASE("decode(0) matches an independently integrated scalar flow to 1e-3") {
    const int T = 1000;
    const auto sched = DiffusionSchedule::cosine(T, 0.008);
    const double m = 0.3, s2 = 0.04;
    const AnalyticGaussianDenoiser den(ImageGrid(1, 1, m), s2, sched);
    const ImageGrid out = decode(ImageGrid(1, 1, 0.0), den);

    auto rhs = [&](double sbar, double xbar) { return sbar * (xbar - m) / (s2 + sbar * sbar); };
    const double ab_T = sched.alpha_bar(T);
    const double sbar_T = std::sqrt((1.0 - ab_T) / ab_T);
    double xbar = 0.0 / std::sqrt(ab_T);
    // geometric grid from sbar_T down to 1e-6, then linear to 0
    std::vector<double> grid;
    const int n_geo = 4000, n_lin = 2000;
    for (int i = 0; i <= n_geo; ++i)
        grid.push_back(sbar_T * std::pow(1e-6 / sbar_T, static_cast<double>(i) / n_geo));
    for (int i = 1; i <= n_lin; ++i)
        grid.push_back(1e-6 * (1.0 - static_cast<double>(i) / n_lin));
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        const double h = grid[i + 1] - grid[i];
        const double s = grid[i];
        const double k1 = rhs(s, xbar);
        const double k2 = rhs(s + h / 2, xbar + h / 2 * k1);
        const double k3 = rhs(s + h / 2, xbar + h / 2 * k2);
        const double k4 = rhs(s + h, xbar + h * k3);
        xbar += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    const double ode_value = xbar; // at sbar = 0, x = xbar
    // cross-check the integrator against the closed form
    const double C = (0.0 / std::sqrt(ab_T) - m) / std::sqrt(s2 + sbar_T * sbar_T);
    const double closed = m + C * std::sqrt(s2);
    CHECK(ode_value == doctest::Approx(closed).epsilon(1e-6));
    CHECK(std::fabs(out[0] - ode_value) / std::fabs(ode_value) < 1e-3);
}

// Exact affine recursion for the reverse ancestral chain: with the analytic
// denoiser every conditional is Gaussian, so the chain's mean/variance follow
// mu' = A*mu + B, v' = A^2*v + beta.
TEST_CASE("ddpm reverse chain reproduces data moments (Monte Carlo, T=200)") {
    const int T = 200;
    const auto sched = DiffusionSchedule::cosine(T, 0.008);
    const double m = 0.3, s2 = 0.04;
    const AnalyticGaussianDenoiser den(ImageGrid(1, 1, m), s2, sched);

    // independent oracle: exact chain moments
    double mu_th = 0.0, v_th = 1.0;
    for (int t = T; t >= 1; --t) {
        const double a = sched.alpha(t), ab = sched.alpha_bar(t), b = sched.beta(t);
        const double c = std::sqrt(1.0 - ab) / (ab * s2 + 1.0 - ab);
        const double k = (1.0 - a) / std::sqrt(1.0 - ab);
        const double A = (1.0 - k * c) / std::sqrt(a);
        const double B = k * c * std::sqrt(ab) * m / std::sqrt(a);
        mu_th = A * mu_th + B;
        v_th = A * A * v_th + (t > 1 ? b : 0.0);
    }

    const int n_chains = 10000;
    std::mt19937_64 rng = stream_rng(23, 0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    double sum = 0, sq = 0;
    for (int n = 0; n < n_chains; ++n) {
        ImageGrid x(1, 1, gauss(rng));
        for (int t = T; t >= 1; --t) {
            ImageGrid noise(1, 1, t > 1 ? gauss(rng) : 0.0);
            x = ddpm_step(x, t, den, noise);
        }
        sum += x[0];
        sq += x[0] * x[0];
    }
    const double mean = sum / n_chains;
    const double var = sq / n_chains - mean * mean;
    const double se_mean = std::sqrt(var / n_chains);
    const double se_var = var * std::sqrt(2.0 / (n_chains - 1));

    // sampled moments match the exact recursion ...
    CHECK(std::fabs(mean - mu_th) < 4.0 * se_mean);
    CHECK(std::fabs(var - v_th) < 4.0 * se_var);
    // ... and the recursion converges to the data distribution
    CHECK(std::fabs(mean - m) < 4.0 * se_mean);
    CHECK(std::fabs(var - s2) < 4.0 * se_var);
}

TEST_CASE("trace snapshots honour the stride") {
    const auto sched = DiffusionSchedule::cosine(10);
    const ConstDenoiser den(0.0, sched);
    SampleTrace trace;
    encode(ImageGrid(2, 2, 0.5), den, &trace, 5);
    REQUIRE(trace.timesteps.size() == 3);
    CHECK(trace.timesteps[0] == 0);
    CHECK(trace.timesteps[1] == 5);
    CHECK(trace.timesteps[2] == 10);
}
