#ifndef DDIC_NETWORK_DENOISER_HPP
#define DDIC_NETWORK_DENOISER_HPP

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>

#include "ddic/denoiser.hpp"
#include "ddic/net/unet.hpp"

namespace ddic {

// Optimizer/EMA payload carried inside training checkpoints so interrupted
// runs resume bit-exactly.
struct CheckpointExtras {
    std::vector<double> adam_m, adam_v;
    std::int64_t adam_steps = 0;
    std::vector<double> ema;
    std::uint64_t train_seed = 0;
};

class NetworkDenoiser : public Denoiser {
public:
    NetworkDenoiser(net::UNetConfig arch, DiffusionSchedule sched, std::uint64_t init_seed,
                    double norm_lo = -1.0, double norm_hi = 1.0);

    ImageGrid predict_eps(const ImageGrid& x_t, int t) const override;
    bool differentiable() const override { return true; }
    ImageGrid eps_vjp(const ImageGrid& x_t, int t, const ImageGrid& cotangent,
                      ImageGrid* eps_out = nullptr) const override;
    const DiffusionSchedule& schedule() const override { return sched_; }

    net::UNet& network() { return *net_; }
    const net::UNet& network() const { return *net_; }
    std::uint64_t init_seed() const { return init_seed_; }
    std::int64_t trained_steps() const { return trained_steps_; }
    void set_trained_steps(std::int64_t s) { trained_steps_ = s; }
    double norm_lo() const { return norm_lo_; }
    double norm_hi() const { return norm_hi_; }

    // Self-describing binary checkpoint: JSON header (schema version,
    // architecture, schedule, normalization, seed, step count) followed by
    // the raw parameter payload, plus optimizer state when provided.
    void save_checkpoint(const std::filesystem::path& path,
                         const CheckpointExtras* extras = nullptr) const;
    static NetworkDenoiser load_checkpoint(const std::filesystem::path& path,
                                           CheckpointExtras* extras = nullptr);

private:
    net::UNetConfig arch_;
    DiffusionSchedule sched_;
    std::unique_ptr<net::UNet> net_;
    std::uint64_t init_seed_ = 0;
    std::int64_t trained_steps_ = 0;
    double norm_lo_ = -1.0, norm_hi_ = 1.0;
};

// conversions between the image type and network tensors
net::Tensor to_tensor(const ImageGrid& img);
ImageGrid to_image(const net::Tensor& t, const ImageGrid& like);

} // namespace ddic

#endif
