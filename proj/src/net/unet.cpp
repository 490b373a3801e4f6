#include "ddic/net/unet.hpp"

#include <cmath>
#include <string>

#include "ddic/errors.hpp"
#include "ddic/rng.hpp"

namespace ddic::net {

void UNetConfig::validate() const {
    if (in_channels < 1) throw ConfigError("unet: in_channels must be >= 1");
    if (base_channels < 1) throw ConfigError("unet: base_channels must be >= 1");
    if (channel_mults.empty()) throw ConfigError("unet: channel_mults must be non-empty");
    for (int m : channel_mults)
        if (m < 1) throw ConfigError("unet: channel multipliers must be >= 1");
    if (time_dim < 2 || time_dim % 2 != 0) throw ConfigError("unet: time_dim must be even and >= 2");
    if (groups < 1) throw ConfigError("unet: groups must be >= 1");
    for (std::size_t i = 0; i < channel_mults.size(); ++i)
        if ((base_channels * channel_mults[i]) % groups != 0)
            throw ConfigError("unet: channels at level " + std::to_string(i) +
                              " not divisible by groups");
}

nlohmann::json UNetConfig::to_json() const {
    return nlohmann::json{{"in_channels", in_channels},
                          {"base_channels", base_channels},
                          {"channel_mults", channel_mults},
                          {"time_dim", time_dim},
                          {"groups", groups}};
}

UNetConfig UNetConfig::from_json(const nlohmann::json& j) {
    UNetConfig c;
    c.in_channels = j.value("in_channels", 1);
    c.base_channels = j.at("base_channels").get<int>();
    c.channel_mults = j.at("channel_mults").get<std::vector<int>>();
    c.time_dim = j.value("time_dim", 64);
    c.groups = j.value("groups", 8);
    c.validate();
    return c;
}

ResBlock::ResBlock(ParamStore& ps, int cin, int cout, int tdim, int groups)
    : n1_(ps, cin, groups),
      c1_(ps, cin, cout, 3),
      n2_(ps, cout, groups),
      c2_(ps, cout, cout, 3),
      time_proj_(ps, tdim, cout),
      cout_(cout) {
    if (cin != cout) {
        skip_ = Conv2d(ps, cin, cout, 1);
        has_skip_ = true;
    }
}

void ResBlock::init(ParamStore& ps, std::mt19937_64& rng) const {
    n1_.init(ps);
    c1_.init(ps, rng);
    n2_.init(ps);
    c2_.init(ps, rng);
    time_proj_.init(ps, rng);
    if (has_skip_) skip_.init(ps, rng);
}

Tensor ResBlock::forward(const Tensor& x, const std::vector<double>& temb,
                         const ParamStore& ps, Cache& cache) const {
    cache.x = x;
    cache.t0 = n1_.forward(x, ps, cache.s1);
    cache.t1 = cache.t0;
    for (double& v : cache.t1.v) v = silu(v);
    Tensor t2 = c1_.forward(cache.t1, ps);
    const std::vector<double> tb = time_proj_.forward(temb, ps);
    for (int c = 0; c < t2.c; ++c) {
        double* p = t2.ch(c);
        const double b = tb[static_cast<std::size_t>(c)];
        for (std::size_t i = 0; i < t2.plane(); ++i) p[i] += b;
    }
    cache.t3 = std::move(t2);
    cache.t4 = n2_.forward(cache.t3, ps, cache.s2);
    cache.t5 = cache.t4;
    for (double& v : cache.t5.v) v = silu(v);
    Tensor out = c2_.forward(cache.t5, ps);
    if (has_skip_) {
        Tensor sk = skip_.forward(x, ps);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += sk[i];
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += x[i];
    }
    return out;
}

Tensor ResBlock::backward(const Tensor& gout, const Cache& cache, const std::vector<double>& temb,
                          const ParamStore& ps, ParamStore* pg, std::vector<double>& g_temb) const {
    Tensor g_t5 = c2_.backward(cache.t5, gout, ps, pg);
    Tensor g_t4 = g_t5;
    for (std::size_t i = 0; i < g_t4.size(); ++i) g_t4[i] = g_t5[i] * silu_grad(cache.t4[i]);
    Tensor g_t3 = n2_.backward(cache.t3, g_t4, cache.s2, ps, pg);

    std::vector<double> g_tb(static_cast<std::size_t>(cout_), 0.0);
    for (int c = 0; c < g_t3.c; ++c) {
        const double* p = g_t3.ch(c);
        double s = 0.0;
        for (std::size_t i = 0; i < g_t3.plane(); ++i) s += p[i];
        g_tb[static_cast<std::size_t>(c)] = s;
    }
    const std::vector<double> g_te = time_proj_.backward(temb, g_tb, ps, pg);
    for (std::size_t i = 0; i < g_temb.size(); ++i) g_temb[i] += g_te[i];

    Tensor g_t1 = c1_.backward(cache.t1, g_t3, ps, pg);
    Tensor g_t0 = g_t1;
    for (std::size_t i = 0; i < g_t0.size(); ++i) g_t0[i] = g_t1[i] * silu_grad(cache.t0[i]);
    Tensor g_x = n1_.backward(cache.x, g_t0, cache.s1, ps, pg);

    if (has_skip_) {
        Tensor g_sk = skip_.backward(cache.x, gout, ps, pg);
        for (std::size_t i = 0; i < g_x.size(); ++i) g_x[i] += g_sk[i];
    } else {
        for (std::size_t i = 0; i < g_x.size(); ++i) g_x[i] += gout[i];
    }
    return g_x;
}

UNet::UNet(const UNetConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const int L = cfg_.levels();
    const int td = cfg_.time_dim;
    tl1_ = Linear(ps_, td, td);
    tl2_ = Linear(ps_, td, td);
    conv_in_ = Conv2d(ps_, cfg_.in_channels, cfg_.channels(0), 3);
    enc_.reserve(static_cast<std::size_t>(L));
    for (int i = 0; i < L; ++i) {
        const int cin = cfg_.channels(std::max(i - 1, 0));
        enc_.emplace_back(ps_, cin, cfg_.channels(i), td, cfg_.groups);
        if (i + 1 < L) down_.emplace_back(ps_, cfg_.channels(i), cfg_.channels(i), 3, 2);
    }
    mid_ = ResBlock(ps_, cfg_.channels(L - 1), cfg_.channels(L - 1), td, cfg_.groups);
    dec_.resize(static_cast<std::size_t>(L));
    for (int i = L - 1; i >= 0; --i) {
        const int ch_h = cfg_.channels(i);
        const int ch_out = cfg_.channels(std::max(i - 1, 0));
        dec_[static_cast<std::size_t>(i)] = ResBlock(ps_, ch_h + cfg_.channels(i), ch_out, td, cfg_.groups);
    }
    n_out_ = GroupNorm(ps_, cfg_.channels(0), cfg_.groups);
    conv_out_ = Conv2d(ps_, cfg_.channels(0), cfg_.in_channels, 3);
}

void UNet::init_params(std::uint64_t seed) {
    std::mt19937_64 rng = stream_rng(seed, /*stream=*/0xfeed);
    tl1_.init(ps_, rng);
    tl2_.init(ps_, rng);
    conv_in_.init(ps_, rng);
    for (std::size_t i = 0; i < enc_.size(); ++i) {
        enc_[i].init(ps_, rng);
        if (i < down_.size()) down_[i].init(ps_, rng);
    }
    mid_.init(ps_, rng);
    for (int i = static_cast<int>(dec_.size()) - 1; i >= 0; --i)
        dec_[static_cast<std::size_t>(i)].init(ps_, rng);
    n_out_.init(ps_);
    conv_out_.init(ps_, rng, /*scale=*/0.0); // zero-initialized head
}

std::vector<double> UNet::time_embedding(int t) const {
    const int half = cfg_.time_dim / 2;
    std::vector<double> emb(static_cast<std::size_t>(cfg_.time_dim));
    const double denom = half > 1 ? static_cast<double>(half - 1) : 1.0;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / denom);
        emb[static_cast<std::size_t>(i)] = std::sin(t * freq);
        emb[static_cast<std::size_t>(half + i)] = std::cos(t * freq);
    }
    return emb;
}

Tensor UNet::forward(const Tensor& x, int t, Workspace& ws) const {
    const int L = cfg_.levels();
    ws.x = x;
    ws.t_sin = time_embedding(t);
    ws.t_pre = tl1_.forward(ws.t_sin, ps_);
    ws.t_act = ws.t_pre;
    for (double& v : ws.t_act) v = silu(v);
    ws.temb = tl2_.forward(ws.t_act, ps_);

    ws.enc_cache.resize(static_cast<std::size_t>(L));
    ws.dec_cache.resize(static_cast<std::size_t>(L));
    ws.enc_out.resize(static_cast<std::size_t>(L));

    Tensor h = conv_in_.forward(x, ps_);
    ws.enc_out[0] = enc_[0].forward(h, ws.temb, ps_, ws.enc_cache[0]);
    for (int i = 1; i < L; ++i) {
        Tensor d = down_[static_cast<std::size_t>(i - 1)].forward(ws.enc_out[static_cast<std::size_t>(i - 1)], ps_);
        ws.enc_out[static_cast<std::size_t>(i)] =
            enc_[static_cast<std::size_t>(i)].forward(d, ws.temb, ps_, ws.enc_cache[static_cast<std::size_t>(i)]);
    }
    h = mid_.forward(ws.enc_out[static_cast<std::size_t>(L - 1)], ws.temb, ps_, ws.mid_cache);
    for (int i = L - 1; i >= 0; --i) {
        Tensor cat = concat_channels(h, ws.enc_out[static_cast<std::size_t>(i)]);
        h = dec_[static_cast<std::size_t>(i)].forward(cat, ws.temb, ps_, ws.dec_cache[static_cast<std::size_t>(i)]);
        if (i > 0) h = upsample2(h);
    }
    ws.head_in = std::move(h);
    ws.head_gn = n_out_.forward(ws.head_in, ps_, ws.s_out);
    ws.head_act = ws.head_gn;
    for (double& v : ws.head_act.v) v = silu(v);
    return conv_out_.forward(ws.head_act, ps_);
}

Tensor UNet::backward(const Tensor& gout, const Workspace& ws, ParamStore* pg) const {
    const int L = cfg_.levels();
    std::vector<double> g_temb(static_cast<std::size_t>(cfg_.time_dim), 0.0);

    Tensor g_head_act = conv_out_.backward(ws.head_act, gout, ps_, pg);
    Tensor g_head_gn = g_head_act;
    for (std::size_t i = 0; i < g_head_gn.size(); ++i)
        g_head_gn[i] = g_head_act[i] * silu_grad(ws.head_gn[i]);
    Tensor g_h = n_out_.backward(ws.head_in, g_head_gn, ws.s_out, ps_, pg);

    std::vector<Tensor> g_enc(static_cast<std::size_t>(L));
    for (int i = 0; i < L; ++i) {
        const Tensor& e = ws.enc_out[static_cast<std::size_t>(i)];
        g_enc[static_cast<std::size_t>(i)] = Tensor(e.c, e.h, e.w);
    }

    Tensor g_mid;
    for (int i = 0; i < L; ++i) {
        if (i > 0) g_h = upsample2_backward(g_h);
        Tensor g_cat = dec_[static_cast<std::size_t>(i)].backward(
            g_h, ws.dec_cache[static_cast<std::size_t>(i)], ws.temb, ps_, pg, g_temb);
        const Tensor& e = ws.enc_out[static_cast<std::size_t>(i)];
        Tensor g_prev(g_cat.c - e.c, g_cat.h, g_cat.w);
        Tensor g_e(e.c, e.h, e.w);
        split_channels(g_cat, g_prev, g_e);
        for (std::size_t k = 0; k < g_e.size(); ++k) g_enc[static_cast<std::size_t>(i)][k] += g_e[k];
        if (i < L - 1)
            g_h = std::move(g_prev);
        else
            g_mid = std::move(g_prev);
    }

    Tensor g_mid_in = mid_.backward(g_mid, ws.mid_cache, ws.temb, ps_, pg, g_temb);
    for (std::size_t k = 0; k < g_mid_in.size(); ++k)
        g_enc[static_cast<std::size_t>(L - 1)][k] += g_mid_in[k];

    for (int i = L - 1; i >= 1; --i) {
        Tensor g_d = enc_[static_cast<std::size_t>(i)].backward(
            g_enc[static_cast<std::size_t>(i)], ws.enc_cache[static_cast<std::size_t>(i)], ws.temb, ps_,
            pg, g_temb);
        Tensor g_prev = down_[static_cast<std::size_t>(i - 1)].backward(
            ws.enc_out[static_cast<std::size_t>(i - 1)], g_d, ps_, pg);
        for (std::size_t k = 0; k < g_prev.size(); ++k) g_enc[static_cast<std::size_t>(i - 1)][k] += g_prev[k];
    }
    Tensor g_convin_out = enc_[0].backward(g_enc[0], ws.enc_cache[0], ws.temb, ps_, pg, g_temb);
    Tensor g_x = conv_in_.backward(ws.x, g_convin_out, ps_, pg);

    // time-embedding MLP
    std::vector<double> g_tact = tl2_.backward(ws.t_act, g_temb, ps_, pg);
    std::vector<double> g_tpre = g_tact;
    for (std::size_t i = 0; i < g_tpre.size(); ++i) g_tpre[i] = g_tact[i] * silu_grad(ws.t_pre[i]);
    tl1_.backward(ws.t_sin, g_tpre, ps_, pg);

    return g_x;
}

} // namespace ddic::net
