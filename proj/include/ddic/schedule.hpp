#ifndef DDIC_SCHEDULE_HPP
#define DDIC_SCHEDULE_HPP

#include <vector>

#include "ddic/image.hpp"

namespace ddic {

struct ScheduleConfig {
    int steps = 1000;             // T
    double cosine_offset = 0.008; // s
    double beta_clip = 0.999;
};

// Variance schedule for the diffusion forward/backward processes.
// All tables are precomputed at construction and immutable afterwards,
// so concurrent reads are safe. Indexing follows the usual convention:
// beta/alpha are defined for t in 1..T, alpha_bar for t in 0..T with
// alpha_bar(0) == 1 (t = 0 is the clean image).
class DiffusionSchedule {
public:
    static DiffusionSchedule cosine(int steps, double offset = 0.008, double beta_clip = 0.999);
    static DiffusionSchedule cosine(const ScheduleConfig& cfg) {
        return cosine(cfg.steps, cfg.cosine_offset, cfg.beta_clip);
    }
    // explicit beta table, each in (0, 1); mainly for experiments and tests
    static DiffusionSchedule from_betas(std::vector<double> betas);

    int steps() const { return cfg_.steps; }

    double beta(int t) const { check_t(t, 1); return betas_[t - 1]; }
    double alpha(int t) const { check_t(t, 1); return alphas_[t - 1]; }
    double alpha_bar(int t) const { check_t(t, 0); return alpha_bars_[t]; }

    bool is_cosine() const { return cosine_form_; }
    const std::vector<double>& betas() const { return betas_; }
    const std::vector<double>& alpha_bars() const { return alpha_bars_; }
    const ScheduleConfig& config() const { return cfg_; }

    bool operator==(const DiffusionSchedule& o) const {
        return betas_ == o.betas_ && alpha_bars_ == o.alpha_bars_;
    }

private:
    void check_t(int t, int lo) const;
    ScheduleConfig cfg_;
    bool cosine_form_ = true;
    std::vector<double> betas_;      // beta_1..beta_T
    std::vector<double> alphas_;     // alpha_1..alpha_T
    std::vector<double> alpha_bars_; // alpha_bar_0..alpha_bar_T
};

// One forward noising step, Gaussian reparameterized:
// sqrt(1 - beta_t) * x_prev + sqrt(beta_t) * noise.
ImageGrid q_step(const ImageGrid& x_prev, int t, const ImageGrid& noise, const DiffusionSchedule& sched);

// Closed-form jump to step t: sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.
// t = 0 returns x0 exactly.
ImageGrid q_sample(const ImageGrid& x0, int t, const ImageGrid& eps, const DiffusionSchedule& sched);

} // namespace ddic

#endif
