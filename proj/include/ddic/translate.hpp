#ifndef DDIC_TRANSLATE_HPP
#define DDIC_TRANSLATE_HPP

#include <vector>

#include "ddic/denoiser.hpp"

namespace ddic {

struct DdicConfig {
    double lr = 3.0;       // gradient step size on the target latent
    int median_kernel = 3; // odd window size
    int steps = 0;         // 0 = take T from the denoisers' schedule
    bool normalized_gradient = false;
    int trace_stride = 1;  // record every k-th step trace; 0 disables

    void validate() const;
};

// Per-step record of the guided translation. When `skipped` is set the
// correlation was degenerate (a filtered image was constant) and the update
// was suppressed; loss/correlation fields are zero in that case.
struct DdicStepTrace {
    int t = 0;
    double loss_before = 0.0;
    double loss_after = 0.0;
    double corr_before = 0.0;
    double corr_after = 0.0;
    double grad_norm = 0.0;
    bool skipped = false;
};

// k x k median with edge replication. k = 1 is the identity.
ImageGrid median_filter(const ImageGrid& img, int k);

// Subgradient transpose of median_filter: each output pixel routes its
// cotangent entirely to the input pixel selected as the window median
// (ties broken toward the lowest flat index).
ImageGrid median_filter_vjp(const ImageGrid& img, int k, const ImageGrid& cotangent);

// Pearson correlation over all pixels. Throws DegenerateCorrelationError
// when either image has zero variance.
double corrcoef(const ImageGrid& a, const ImageGrid& b);

// d corrcoef(a, b) / d b, holding a fixed.
ImageGrid corrcoef_grad_b(const ImageGrid& a, const ImageGrid& b);

struct DdicStepResult {
    ImageGrid x_prev; // source-chain reconstruction, a constant reference
    ImageGrid y_prev; // target-chain image after the latent update
    DdicStepTrace trace;
};

// One guided reverse step (both chains at timestep t):
//   1. x_{t-1} from the source backward ODE (no gradient flows here);
//   2. y_hat from the target backward ODE as a function of y_t;
//   3. loss = -corrcoef(median(x_{t-1}), median(y_hat));
//   4. g = d loss / d y_t through the target denoiser and the median subgradient;
//   5. y_t <- y_t - lr * g (single step);
//   6. y_{t-1} recomputed from the updated y_t.
DdicStepResult ddic_step(const ImageGrid& x_t, const ImageGrid& y_t, int t,
                         const Denoiser& den_src, const Denoiser& den_dst,
                         const DdicConfig& cfg);

// Latent-bridge baseline: decode(encode(x, src), dst). Deterministic.
ImageGrid translate_ddib(const ImageGrid& x_src, const Denoiser& den_src, const Denoiser& den_dst);

struct DdicRun {
    ImageGrid output;
    std::vector<DdicStepTrace> trace;
};

// Correlation-guided translation: encode with the source ODE, then run both
// backward chains from the shared latent with one gradient step on the
// target iterate per timestep. lr = 0 reduces bit-exactly to translate_ddib.
DdicRun translate_ddic(const ImageGrid& x_src, const Denoiser& den_src, const Denoiser& den_dst,
                       const DdicConfig& cfg);

} // namespace ddic

#endif
