#ifndef DDIC_DENOISER_HPP
#define DDIC_DENOISER_HPP

#include "ddic/image.hpp"
#include "ddic/schedule.hpp"

namespace ddic {

// Noise-prediction interface: eps_hat(x_t, t). Implementations are immutable
// once constructed and safe for concurrent inference.
class Denoiser {
public:
    virtual ~Denoiser() = default;

    virtual ImageGrid predict_eps(const ImageGrid& x_t, int t) const = 0;

    // Whether gradients of predict_eps with respect to x_t are available.
    virtual bool differentiable() const { return false; }

    // v^T * d(eps)/d(x_t). When eps_out is non-null the forward prediction is
    // written there, saving a second pass. Throws CapabilityError when not
    // differentiable.
    virtual ImageGrid eps_vjp(const ImageGrid& x_t, int t, const ImageGrid& cotangent,
                              ImageGrid* eps_out = nullptr) const;

    virtual const DiffusionSchedule& schedule() const = 0;
};

// Exact minimizer of the eps-prediction objective when x0 ~ N(mean, variance*I):
// eps_hat(x_t, t) = sqrt(1-abar_t) * (x_t - sqrt(abar_t)*mean) / (abar_t*variance + 1 - abar_t).
// Affine in x_t; its input Jacobian is input_jacobian(t) times identity.
class AnalyticGaussianDenoiser : public Denoiser {
public:
    AnalyticGaussianDenoiser(ImageGrid mean, double variance, DiffusionSchedule sched);

    ImageGrid predict_eps(const ImageGrid& x_t, int t) const override;
    bool differentiable() const override { return true; }
    ImageGrid eps_vjp(const ImageGrid& x_t, int t, const ImageGrid& cotangent,
                      ImageGrid* eps_out = nullptr) const override;
    const DiffusionSchedule& schedule() const override { return sched_; }

    double input_jacobian(int t) const;
    const ImageGrid& data_mean() const { return mean_; }
    double data_variance() const { return variance_; }

private:
    ImageGrid mean_;
    double variance_;
    DiffusionSchedule sched_;
};

// Free-function form of the analytic prediction.
ImageGrid oracle_eps(const ImageGrid& x_t, int t, const ImageGrid& mean, double variance,
                     const DiffusionSchedule& sched);

} // namespace ddic

#endif
