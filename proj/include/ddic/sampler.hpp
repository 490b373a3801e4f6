#ifndef DDIC_SAMPLER_HPP
#define DDIC_SAMPLER_HPP

#include <vector>

#include "ddic/denoiser.hpp"

namespace ddic {

// Optional per-step snapshots of the iterate; stride 0 disables tracing,
// stride k keeps every k-th step plus the final one.
struct SampleTrace {
    std::vector<int> timesteps;
    std::vector<ImageGrid> snapshots;
};

// Stochastic ancestral reverse step:
// mu = (1/sqrt(alpha_t)) * (x_t - (1-alpha_t)/sqrt(1-abar_t) * eps_hat),
// x_{t-1} = mu + sqrt(beta_t) * noise. The final step (t = 1) returns the
// mean; the noise argument is ignored there.
ImageGrid ddpm_step(const ImageGrid& x_t, int t, const Denoiser& den, const ImageGrid& noise);

// Deterministic step between adjacent timesteps, dt in {+1, -1}:
// x_{t+dt} = sqrt(abar_{t+dt}/abar_t) * x_t
//          + (sqrt(1-abar_{t+dt}) - sqrt(1-abar_t) * sqrt(abar_{t+dt}/abar_t)) * eps_hat(x_t, t).
ImageGrid ddim_step(const ImageGrid& x_t, int t, int dt, const Denoiser& den);

// Deterministic noising ODE, t = 0..T-1; returns the latent code x_T.
ImageGrid encode(const ImageGrid& x0, const Denoiser& den,
                 SampleTrace* trace = nullptr, int trace_stride = 0);

// Deterministic denoising ODE, t = T..1; returns x_0.
ImageGrid decode(const ImageGrid& latent, const Denoiser& den,
                 SampleTrace* trace = nullptr, int trace_stride = 0);

} // namespace ddic

#endif
