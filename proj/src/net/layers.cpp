#include "ddic/net/layers.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#include <algorithm>

#include "ddic/errors.hpp"

namespace ddic::net {

Conv2d::Conv2d(ParamStore& ps, int cin, int cout, int k, int stride)
    : cin_(cin), cout_(cout), k_(k), stride_(stride), pad_(k / 2) {
    if (stride != 1 && stride != 2) throw ConfigError("Conv2d: stride must be 1 or 2");
    w_off_ = ps.alloc(static_cast<std::size_t>(cout) * cin * k * k);
    b_off_ = ps.alloc(static_cast<std::size_t>(cout));
}

void Conv2d::init(ParamStore& ps, std::mt19937_64& rng, double scale) const {
    const double std_dev = scale * std::sqrt(2.0 / (static_cast<double>(cin_) * k_ * k_));
    std::normal_distribution<double> dist(0.0, 1.0);
    const std::size_t nw = static_cast<std::size_t>(cout_) * cin_ * k_ * k_;
    for (std::size_t i = 0; i < nw; ++i) ps.w[w_off_ + i] = std_dev * dist(rng);
    for (int i = 0; i < cout_; ++i) ps.w[b_off_ + i] = 0.0;
}

Tensor Conv2d::forward(const Tensor& x, const ParamStore& ps) const {
    const int h = x.h, w = x.w;
    const int oh = out_hw(h), ow = out_hw(w);
    Tensor out(cout_, oh, ow);
    const double* W = ps.w.data() + w_off_;
    const double* B = ps.w.data() + b_off_;
    const std::size_t kk = static_cast<std::size_t>(k_) * k_;

#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < cout_; ++oc) {
        double* o = out.ch(oc);
        std::fill(o, o + out.plane(), B[oc]);
        for (int ic = 0; ic < cin_; ++ic) {
            const double* src = x.ch(ic);
            const double* wk = W + (static_cast<std::size_t>(oc) * cin_ + ic) * kk;
            for (int ky = 0; ky < k_; ++ky) {
                for (int kx = 0; kx < k_; ++kx) {
                    const double wv = wk[ky * k_ + kx];
                    if (wv == 0.0) continue;
                    if (stride_ == 1) {
                        const int y0 = std::max(0, pad_ - ky);
                        const int y1 = std::min(oh, h + pad_ - ky);
                        const int x0 = std::max(0, pad_ - kx);
                        const int x1 = std::min(ow, w + pad_ - kx);
                        for (int y = y0; y < y1; ++y) {
                            const double* s = src + static_cast<std::size_t>(y + ky - pad_) * w + (x0 + kx - pad_);
                            double* op = o + static_cast<std::size_t>(y) * ow + x0;
                            for (int xx = 0; xx < x1 - x0; ++xx) op[xx] += wv * s[xx];
                        }
                    } else {
                        for (int y = 0; y < oh; ++y) {
                            const int yi = 2 * y + ky - pad_;
                            if (yi < 0 || yi >= h) continue;
                            const double* srow = src + static_cast<std::size_t>(yi) * w;
                            double* op = o + static_cast<std::size_t>(y) * ow;
                            for (int xx = 0; xx < ow; ++xx) {
                                const int xi = 2 * xx + kx - pad_;
                                if (xi >= 0 && xi < w) op[xx] += wv * srow[xi];
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& gout, const ParamStore& ps, ParamStore* pg) const {
    const int h = x.h, w = x.w;
    const int oh = gout.h, ow = gout.w;
    Tensor gin(cin_, h, w);
    const double* W = ps.w.data() + w_off_;
    const std::size_t kk = static_cast<std::size_t>(k_) * k_;

    // d loss / d input, each thread owns one input channel
#pragma omp parallel for schedule(static)
    for (int ic = 0; ic < cin_; ++ic) {
        double* gi = gin.ch(ic);
        for (int oc = 0; oc < cout_; ++oc) {
            const double* go = gout.ch(oc);
            const double* wk = W + (static_cast<std::size_t>(oc) * cin_ + ic) * kk;
            for (int ky = 0; ky < k_; ++ky) {
                for (int kx = 0; kx < k_; ++kx) {
                    const double wv = wk[ky * k_ + kx];
                    if (wv == 0.0) continue;
                    if (stride_ == 1) {
                        const int y0 = std::max(0, pad_ - ky);
                        const int y1 = std::min(oh, h + pad_ - ky);
                        const int x0 = std::max(0, pad_ - kx);
                        const int x1 = std::min(ow, w + pad_ - kx);
                        for (int y = y0; y < y1; ++y) {
                            double* gi_row = gi + static_cast<std::size_t>(y + ky - pad_) * w + (x0 + kx - pad_);
                            const double* go_row = go + static_cast<std::size_t>(y) * ow + x0;
                            for (int xx = 0; xx < x1 - x0; ++xx) gi_row[xx] += wv * go_row[xx];
                        }
                    } else {
                        for (int y = 0; y < oh; ++y) {
                            const int yi = 2 * y + ky - pad_;
                            if (yi < 0 || yi >= h) continue;
                            double* gi_row = gi + static_cast<std::size_t>(yi) * w;
                            const double* go_row = go + static_cast<std::size_t>(y) * ow;
                            for (int xx = 0; xx < ow; ++xx) {
                                const int xi = 2 * xx + kx - pad_;
                                if (xi >= 0 && xi < w) gi_row[xi] += wv * go_row[xx];
                            }
                        }
                    }
                }
            }
        }
    }

    if (pg) {
        double* GW = pg->g.data() + w_off_;
        double* GB = pg->g.data() + b_off_;
#pragma omp parallel for schedule(static)
        for (int oc = 0; oc < cout_; ++oc) {
            const double* go = gout.ch(oc);
            double bsum = 0.0;
            for (std::size_t i = 0; i < gout.plane(); ++i) bsum += go[i];
            GB[oc] += bsum;
            for (int ic = 0; ic < cin_; ++ic) {
                const double* src = x.ch(ic);
                double* gw = GW + (static_cast<std::size_t>(oc) * cin_ + ic) * kk;
                for (int ky = 0; ky < k_; ++ky) {
                    for (int kx = 0; kx < k_; ++kx) {
                        double acc = 0.0;
                        if (stride_ == 1) {
                            const int y0 = std::max(0, pad_ - ky);
                            const int y1 = std::min(oh, h + pad_ - ky);
                            const int x0 = std::max(0, pad_ - kx);
                            const int x1 = std::min(ow, w + pad_ - kx);
                            for (int y = y0; y < y1; ++y) {
                                const double* s = src + static_cast<std::size_t>(y + ky - pad_) * w + (x0 + kx - pad_);
                                const double* go_row = go + static_cast<std::size_t>(y) * ow + x0;
                                for (int xx = 0; xx < x1 - x0; ++xx) acc += s[xx] * go_row[xx];
                            }
                        } else {
                            for (int y = 0; y < oh; ++y) {
                                const int yi = 2 * y + ky - pad_;
                                if (yi < 0 || yi >= h) continue;
                                const double* srow = src + static_cast<std::size_t>(yi) * w;
                                const double* go_row = go + static_cast<std::size_t>(y) * ow;
                                for (int xx = 0; xx < ow; ++xx) {
                                    const int xi = 2 * xx + kx - pad_;
                                    if (xi >= 0 && xi < w) acc += srow[xi] * go_row[xx];
                                }
                            }
                        }
                        gw[ky * k_ + kx] += acc;
                    }
                }
            }
        }
    }
    return gin;
}

GroupNorm::GroupNorm(ParamStore& ps, int channels, int groups, double eps)
    : channels_(channels), groups_(groups), eps_(eps) {
    if (channels % groups != 0)
        throw ConfigError("GroupNorm: channels must be divisible by groups");
    gamma_off_ = ps.alloc(static_cast<std::size_t>(channels));
    beta_off_ = ps.alloc(static_cast<std::size_t>(channels));
}

void GroupNorm::init(ParamStore& ps) const {
    for (int i = 0; i < channels_; ++i) {
        ps.w[gamma_off_ + i] = 1.0;
        ps.w[beta_off_ + i] = 0.0;
    }
}

Tensor GroupNorm::forward(const Tensor& x, const ParamStore& ps, GroupNormStats& stats) const {
    const int cpg = channels_ / groups_;
    const std::size_t plane = x.plane();
    const std::size_t gsize = static_cast<std::size_t>(cpg) * plane;
    stats.mean.assign(groups_, 0.0);
    stats.inv_std.assign(groups_, 0.0);
    Tensor out(x.c, x.h, x.w);
    const double* gamma = ps.w.data() + gamma_off_;
    const double* beta = ps.w.data() + beta_off_;

    for (int g = 0; g < groups_; ++g) {
        const double* base = x.ch(g * cpg);
        double m = 0.0;
        for (std::size_t i = 0; i < gsize; ++i) m += base[i];
        m /= static_cast<double>(gsize);
        double var = 0.0;
        for (std::size_t i = 0; i < gsize; ++i) {
            const double d = base[i] - m;
            var += d * d;
        }
        var /= static_cast<double>(gsize);
        const double inv = 1.0 / std::sqrt(var + eps_);
        stats.mean[g] = m;
        stats.inv_std[g] = inv;
        for (int cc = 0; cc < cpg; ++cc) {
            const int c = g * cpg + cc;
            const double a = gamma[c] * inv;
            const double b = beta[c] - gamma[c] * inv * m;
            const double* src = x.ch(c);
            double* dst = out.ch(c);
            for (std::size_t i = 0; i < plane; ++i) dst[i] = a * src[i] + b;
        }
    }
    return out;
}

Tensor GroupNorm::backward(const Tensor& x, const Tensor& gout, const GroupNormStats& stats,
                           const ParamStore& ps, ParamStore* pg) const {
    const int cpg = channels_ / groups_;
    const std::size_t plane = x.plane();
    const double n = static_cast<double>(cpg) * static_cast<double>(plane);
    Tensor gin(x.c, x.h, x.w);
    const double* gamma = ps.w.data() + gamma_off_;

    for (int g = 0; g < groups_; ++g) {
        const double m = stats.mean[g];
        const double inv = stats.inv_std[g];
        // ghat = gout * gamma (per channel); means over the group
        double sum_gh = 0.0, sum_gh_xhat = 0.0;
        for (int cc = 0; cc < cpg; ++cc) {
            const int c = g * cpg + cc;
            const double* go = gout.ch(c);
            const double* src = x.ch(c);
            const double gm = gamma[c];
            for (std::size_t i = 0; i < plane; ++i) {
                const double gh = go[i] * gm;
                sum_gh += gh;
                sum_gh_xhat += gh * (src[i] - m) * inv;
            }
        }
        const double mean_gh = sum_gh / n;
        const double mean_gh_xhat = sum_gh_xhat / n;
        for (int cc = 0; cc < cpg; ++cc) {
            const int c = g * cpg + cc;
            const double* go = gout.ch(c);
            const double* src = x.ch(c);
            double* gi = gin.ch(c);
            const double gm = gamma[c];
            for (std::size_t i = 0; i < plane; ++i) {
                const double xhat = (src[i] - m) * inv;
                gi[i] = inv * (go[i] * gm - mean_gh - xhat * mean_gh_xhat);
            }
        }
        if (pg) {
            double* ggamma = pg->g.data() + gamma_off_;
            double* gbeta = pg->g.data() + beta_off_;
            for (int cc = 0; cc < cpg; ++cc) {
                const int c = g * cpg + cc;
                const double* go = gout.ch(c);
                const double* src = x.ch(c);
                double dg = 0.0, db = 0.0;
                for (std::size_t i = 0; i < plane; ++i) {
                    dg += go[i] * (src[i] - m) * inv;
                    db += go[i];
                }
                ggamma[c] += dg;
                gbeta[c] += db;
            }
        }
    }
    return gin;
}

Linear::Linear(ParamStore& ps, int in, int out) : in_(in), out_(out) {
    w_off_ = ps.alloc(static_cast<std::size_t>(out) * in);
    b_off_ = ps.alloc(static_cast<std::size_t>(out));
}

void Linear::init(ParamStore& ps, std::mt19937_64& rng, double scale) const {
    const double std_dev = scale * std::sqrt(1.0 / static_cast<double>(in_));
    std::normal_distribution<double> dist(0.0, 1.0);
    for (std::size_t i = 0; i < static_cast<std::size_t>(out_) * in_; ++i)
        ps.w[w_off_ + i] = std_dev * dist(rng);
    for (int i = 0; i < out_; ++i) ps.w[b_off_ + i] = 0.0;
}

std::vector<double> Linear::forward(const std::vector<double>& x, const ParamStore& ps) const {
    std::vector<double> y(static_cast<std::size_t>(out_));
    const double* W = ps.w.data() + w_off_;
    const double* B = ps.w.data() + b_off_;
    for (int o = 0; o < out_; ++o) {
        double acc = B[o];
        const double* wr = W + static_cast<std::size_t>(o) * in_;
        for (int i = 0; i < in_; ++i) acc += wr[i] * x[static_cast<std::size_t>(i)];
        y[static_cast<std::size_t>(o)] = acc;
    }
    return y;
}

std::vector<double> Linear::backward(const std::vector<double>& x, const std::vector<double>& gout,
                                     const ParamStore& ps, ParamStore* pg) const {
    std::vector<double> gin(static_cast<std::size_t>(in_), 0.0);
    const double* W = ps.w.data() + w_off_;
    for (int o = 0; o < out_; ++o) {
        const double go = gout[static_cast<std::size_t>(o)];
        const double* wr = W + static_cast<std::size_t>(o) * in_;
        for (int i = 0; i < in_; ++i) gin[static_cast<std::size_t>(i)] += wr[i] * go;
    }
    if (pg) {
        double* GW = pg->g.data() + w_off_;
        double* GB = pg->g.data() + b_off_;
        for (int o = 0; o < out_; ++o) {
            const double go = gout[static_cast<std::size_t>(o)];
            GB[o] += go;
            double* gw = GW + static_cast<std::size_t>(o) * in_;
            for (int i = 0; i < in_; ++i) gw[i] += go * x[static_cast<std::size_t>(i)];
        }
    }
    return gin;
}

Tensor upsample2(const Tensor& x) {
    Tensor out(x.c, x.h * 2, x.w * 2);
    for (int c = 0; c < x.c; ++c) {
        const double* src = x.ch(c);
        double* dst = out.ch(c);
        for (int y = 0; y < x.h; ++y)
            for (int xx = 0; xx < x.w; ++xx) {
                const double v = src[static_cast<std::size_t>(y) * x.w + xx];
                double* d = dst + static_cast<std::size_t>(2 * y) * out.w + 2 * xx;
                d[0] = v;
                d[1] = v;
                d[out.w] = v;
                d[out.w + 1] = v;
            }
    }
    return out;
}

Tensor upsample2_backward(const Tensor& gout) {
    Tensor gin(gout.c, gout.h / 2, gout.w / 2);
    for (int c = 0; c < gout.c; ++c) {
        const double* go = gout.ch(c);
        double* gi = gin.ch(c);
        for (int y = 0; y < gin.h; ++y)
            for (int xx = 0; xx < gin.w; ++xx) {
                const double* s = go + static_cast<std::size_t>(2 * y) * gout.w + 2 * xx;
                gi[static_cast<std::size_t>(y) * gin.w + xx] = s[0] + s[1] + s[gout.w] + s[gout.w + 1];
            }
    }
    return gin;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    Tensor out(a.c + b.c, a.h, a.w);
    std::copy(a.v.begin(), a.v.end(), out.v.begin());
    std::copy(b.v.begin(), b.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(a.size()));
    return out;
}

void split_channels(const Tensor& g, Tensor& ga, Tensor& gb) {
    std::copy(g.v.begin(), g.v.begin() + static_cast<std::ptrdiff_t>(ga.size()), ga.v.begin());
    std::copy(g.v.begin() + static_cast<std::ptrdiff_t>(ga.size()), g.v.end(), gb.v.begin());
}

} // namespace ddic::net
