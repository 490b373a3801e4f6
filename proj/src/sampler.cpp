#include "ddic/sampler.hpp"

#include <cmath>
#include <string>

namespace ddic {

namespace {

void maybe_snapshot(SampleTrace* trace, int stride, int t, int t_final, const ImageGrid& x) {
    if (!trace || stride <= 0) return;
    if (t % stride == 0 || t == t_final) {
        trace->timesteps.push_back(t);
        trace->snapshots.push_back(x);
    }
}

} // namespace

ImageGrid ddpm_step(const ImageGrid& x_t, int t, const Denoiser& den, const ImageGrid& noise) {
    const DiffusionSchedule& s = den.schedule();
    const double a = s.alpha(t); // throws IndexError outside 1..T
    const double ab = s.alpha_bar(t);
    const ImageGrid eps = den.predict_eps(x_t, t);

    const double inv_sqrt_a = 1.0 / std::sqrt(a);
    const double k = (1.0 - a) / std::sqrt(1.0 - ab);
    ImageGrid mu = lincomb(inv_sqrt_a, x_t, -inv_sqrt_a * k, eps);
    if (t == 1) return mu;

    const double sigma = std::sqrt(s.beta(t));
    return lincomb(1.0, mu, sigma, noise);
}

ImageGrid ddim_step(const ImageGrid& x_t, int t, int dt, const Denoiser& den) {
    if (dt != 1 && dt != -1)
        throw IndexError("ddim_step: dt must be +1 or -1, got " + std::to_string(dt));
    const DiffusionSchedule& s = den.schedule();
    const double ab_t = s.alpha_bar(t);
    const double ab_n = s.alpha_bar(t + dt); // throws IndexError outside 0..T

    const double ratio = std::sqrt(ab_n / ab_t);
    const double coef_eps = std::sqrt(1.0 - ab_n) - std::sqrt(1.0 - ab_t) * ratio;
    const ImageGrid eps = den.predict_eps(x_t, t);
    return lincomb(ratio, x_t, coef_eps, eps);
}

ImageGrid encode(const ImageGrid& x0, const Denoiser& den, SampleTrace* trace, int trace_stride) {
    const int T = den.schedule().steps();
    ImageGrid x = x0;
    maybe_snapshot(trace, trace_stride, 0, T, x);
    for (int t = 0; t < T; ++t) {
        x = ddim_step(x, t, +1, den);
        maybe_snapshot(trace, trace_stride, t + 1, T, x);
    }
    return x;
}

ImageGrid decode(const ImageGrid& latent, const Denoiser& den, SampleTrace* trace, int trace_stride) {
    const int T = den.schedule().steps();
    ImageGrid x = latent;
    maybe_snapshot(trace, trace_stride, T, 0, x);
    for (int t = T; t > 0; --t) {
        x = ddim_step(x, t, -1, den);
        maybe_snapshot(trace, trace_stride, t - 1, 0, x);
    }
    return x;
}

} // namespace ddic
