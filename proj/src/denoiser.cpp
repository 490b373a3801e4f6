#include "ddic/denoiser.hpp"

#include <cmath>

namespace ddic {

ImageGrid Denoiser::eps_vjp(const ImageGrid&, int, const ImageGrid&, ImageGrid*) const {
    throw CapabilityError("denoiser does not expose input gradients");
}

AnalyticGaussianDenoiser::AnalyticGaussianDenoiser(ImageGrid mean, double variance, DiffusionSchedule sched)
    : mean_(std::move(mean)), variance_(variance), sched_(std::move(sched)) {
    if (!(variance_ > 0.0))
        throw ConfigError("AnalyticGaussianDenoiser: variance must be > 0");
}

ImageGrid oracle_eps(const ImageGrid& x_t, int t, const ImageGrid& mean, double variance,
                     const DiffusionSchedule& sched) {
    require_same_shape(x_t, mean, "oracle_eps");
    const double ab = sched.alpha_bar(t);
    const double denom = ab * variance + 1.0 - ab;
    const double c = std::sqrt(1.0 - ab) / denom;
    const double sab = std::sqrt(ab);
    ImageGrid out = x_t;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * (x_t[i] - sab * mean[i]);
    return out;
}

ImageGrid AnalyticGaussianDenoiser::predict_eps(const ImageGrid& x_t, int t) const {
    return oracle_eps(x_t, t, mean_, variance_, sched_);
}

double AnalyticGaussianDenoiser::input_jacobian(int t) const {
    const double ab = sched_.alpha_bar(t);
    return std::sqrt(1.0 - ab) / (ab * variance_ + 1.0 - ab);
}

ImageGrid AnalyticGaussianDenoiser::eps_vjp(const ImageGrid& x_t, int t, const ImageGrid& cotangent,
                                            ImageGrid* eps_out) const {
    require_same_shape(x_t, cotangent, "eps_vjp");
    if (eps_out) *eps_out = predict_eps(x_t, t);
    return scaled(cotangent, input_jacobian(t));
}

} // namespace ddic
