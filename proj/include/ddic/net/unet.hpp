#ifndef DDIC_NET_UNET_HPP
#define DDIC_NET_UNET_HPP

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "ddic/net/layers.hpp"

namespace ddic::net {

struct UNetConfig {
    int in_channels = 1;
    int base_channels = 16;
    std::vector<int> channel_mults = {1, 2, 4};
    int time_dim = 64;
    int groups = 8;

    void validate() const;
    int levels() const { return static_cast<int>(channel_mults.size()); }
    int channels(int level) const { return base_channels * channel_mults[static_cast<std::size_t>(level)]; }

    nlohmann::json to_json() const;
    static UNetConfig from_json(const nlohmann::json& j);
    bool operator==(const UNetConfig&) const = default;
};

// GroupNorm -> SiLU -> conv3 -> (+ time bias) -> GroupNorm -> SiLU -> conv3,
// with an identity or 1x1 shortcut.
class ResBlock {
public:
    ResBlock() = default;
    ResBlock(ParamStore& ps, int cin, int cout, int tdim, int groups);
    void init(ParamStore& ps, std::mt19937_64& rng) const;

    struct Cache {
        Tensor x, t0, t1, t3, t4, t5;
        GroupNormStats s1, s2;
    };

    Tensor forward(const Tensor& x, const std::vector<double>& temb,
                   const ParamStore& ps, Cache& cache) const;
    Tensor backward(const Tensor& gout, const Cache& cache, const std::vector<double>& temb,
                    const ParamStore& ps, ParamStore* pg, std::vector<double>& g_temb) const;

private:
    GroupNorm n1_, n2_;
    Conv2d c1_, c2_;
    Linear time_proj_;
    Conv2d skip_;
    bool has_skip_ = false;
    int cout_ = 0;
};

// Encoder-decoder noise predictor with sinusoidal timestep embedding and
// skip connections; one res block per resolution level.
class UNet {
public:
    explicit UNet(const UNetConfig& cfg);

    void init_params(std::uint64_t seed);

    struct Workspace {
        std::vector<double> t_sin, t_pre, t_act, temb;
        Tensor x;
        std::vector<ResBlock::Cache> enc_cache, dec_cache;
        ResBlock::Cache mid_cache;
        std::vector<Tensor> enc_out;
        Tensor head_in, head_gn, head_act;
        GroupNormStats s_out;
    };

    Tensor forward(const Tensor& x, int t, Workspace& ws) const;
    // d loss / d input; accumulates parameter gradients into pg when non-null
    // (pg may alias params()). Thread-safe when pg is null.
    Tensor backward(const Tensor& gout, const Workspace& ws, ParamStore* pg) const;

    std::size_t param_count() const { return ps_.w.size(); }
    ParamStore& params() { return ps_; }
    const ParamStore& params() const { return ps_; }
    const UNetConfig& config() const { return cfg_; }

private:
    std::vector<double> time_embedding(int t) const;

    UNetConfig cfg_;
    ParamStore ps_;
    Linear tl1_, tl2_;
    Conv2d conv_in_;
    std::vector<ResBlock> enc_;
    std::vector<Conv2d> down_;
    ResBlock mid_;
    std::vector<ResBlock> dec_;
    GroupNorm n_out_;
    Conv2d conv_out_;
};

} // namespace ddic::net

#endif
