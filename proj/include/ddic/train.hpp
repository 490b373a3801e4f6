#ifndef DDIC_TRAIN_HPP
#define DDIC_TRAIN_HPP

#include <filesystem>
#include <functional>

#include "ddic/net/adam.hpp"
#include "ddic/network_denoiser.hpp"

namespace ddic {

struct TrainConfig {
    int batch_size = 16;
    double learning_rate = 1e-3;
    int steps = 2000; // total optimization steps (resume continues toward this)
    std::uint64_t seed = 0;
    int checkpoint_interval = 500;
    bool augment_flip = false;
    double ema_decay = 0.0; // 0 disables EMA tracking

    void validate() const;
};

// Mutable optimizer state; preserved across checkpoint save/load so a
// resumed run is bit-identical to an uninterrupted one.
struct TrainState {
    net::Adam opt;
    std::vector<double> ema;
    int step = 0;
    bool initialized = false;
};

struct TrainResult {
    std::vector<double> loss_trace; // one entry per step actually run
    int steps_done = 0;
    double smoothed_initial = 0.0;
    double smoothed_final = 0.0;
    std::filesystem::path last_checkpoint;
};

// Stochastic minimization of E || eps - eps_theta(q_sample(x0, t, eps), t) ||^2
// with t drawn uniformly from 1..T per step and per item. All randomness is
// derived from (seed, step), so runs are reproducible and resumable.
// `checkpoint_dir` empty disables checkpointing.
TrainResult train_denoiser(NetworkDenoiser& den, const std::vector<ImageGrid>& dataset,
                           const TrainConfig& cfg,
                           const std::filesystem::path& checkpoint_dir = {},
                           TrainState* state = nullptr,
                           const std::function<void(int, double)>& progress = {});

// Mean squared eps-prediction error of an arbitrary predictor on fixed draws;
// used to compare trained networks against the analytic oracle.
double eps_objective(const Denoiser& den, const std::vector<ImageGrid>& x0s,
                     const std::vector<ImageGrid>& eps_draws, const std::vector<int>& ts);

} // namespace ddic

#endif
