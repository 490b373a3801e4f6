#include "ddic/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace ddic {

DiffusionSchedule DiffusionSchedule::cosine(int steps, double offset, double beta_clip) {
    if (steps < 1)
        throw ConfigError("cosine schedule: step count must be >= 1, got " + std::to_string(steps));
    if (!(offset > 0.0))
        throw ConfigError("cosine schedule: offset must be > 0");
    if (!(beta_clip > 0.0 && beta_clip < 1.0))
        throw ConfigError("cosine schedule: beta clip must lie in (0, 1)");

    DiffusionSchedule s;
    s.cfg_ = ScheduleConfig{steps, offset, beta_clip};
    s.betas_.resize(steps);
    s.alphas_.resize(steps);
    s.alpha_bars_.resize(steps + 1);

    // beta_t = 1 - cos^2(u_t)/cos^2(u_{t-1}) evaluated in the cancellation-free
    // product form sin(u_{t-1}+u_t) * sin(u_t-u_{t-1}) / cos^2(u_{t-1})
    auto u = [&](int t) {
        return ((static_cast<double>(t) / steps + offset) / (1.0 + offset)) * (std::numbers::pi / 2.0);
    };
    s.alpha_bars_[0] = 1.0;
    for (int t = 1; t <= steps; ++t) {
        const double up = u(t - 1), ut = u(t);
        const double cp = std::cos(up);
        double beta = std::sin(up + ut) * std::sin(ut - up) / (cp * cp);
        beta = std::min(beta, beta_clip);
        s.betas_[t - 1] = beta;
        s.alphas_[t - 1] = 1.0 - beta;
        s.alpha_bars_[t] = s.alpha_bars_[t - 1] * s.alphas_[t - 1];
    }
    return s;
}

DiffusionSchedule DiffusionSchedule::from_betas(std::vector<double> betas) {
    if (betas.empty()) throw ConfigError("schedule: beta table must be non-empty");
    DiffusionSchedule s;
    s.cfg_ = ScheduleConfig{static_cast<int>(betas.size()), 0.0, 1.0};
    s.cosine_form_ = false;
    s.betas_ = std::move(betas);
    s.alphas_.resize(s.betas_.size());
    s.alpha_bars_.resize(s.betas_.size() + 1);
    s.alpha_bars_[0] = 1.0;
    for (std::size_t i = 0; i < s.betas_.size(); ++i) {
        if (!(s.betas_[i] > 0.0 && s.betas_[i] < 1.0))
            throw ConfigError("schedule: every beta must lie in (0, 1)");
        s.alphas_[i] = 1.0 - s.betas_[i];
        s.alpha_bars_[i + 1] = s.alpha_bars_[i] * s.alphas_[i];
    }
    return s;
}

void DiffusionSchedule::check_t(int t, int lo) const {
    if (t < lo || t > cfg_.steps)
        throw IndexError("schedule: timestep " + std::to_string(t) + " outside [" +
                         std::to_string(lo) + ", " + std::to_string(cfg_.steps) + "]");
}

ImageGrid q_step(const ImageGrid& x_prev, int t, const ImageGrid& noise, const DiffusionSchedule& sched) {
    const double b = sched.beta(t);
    return lincomb(std::sqrt(1.0 - b), x_prev, std::sqrt(b), noise);
}

ImageGrid q_sample(const ImageGrid& x0, int t, const ImageGrid& eps, const DiffusionSchedule& sched) {
    const double ab = sched.alpha_bar(t);
    if (t == 0) return x0;
    return lincomb(std::sqrt(ab), x0, std::sqrt(1.0 - ab), eps);
}

} // namespace ddic
