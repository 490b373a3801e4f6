#ifndef DDIC_NET_LAYERS_HPP
#define DDIC_NET_LAYERS_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ddic/net/tensor.hpp"

namespace ddic::net {

// Flat parameter/gradient storage; layers hold offsets into it so the whole
// model serializes as one contiguous double array.
struct ParamStore {
    std::vector<double> w;
    std::vector<double> g;

    std::size_t alloc(std::size_t n) {
        const std::size_t off = w.size();
        w.resize(off + n, 0.0);
        g.resize(off + n, 0.0);
        return off;
    }
    void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }
};

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }
inline double silu_grad(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

// k x k convolution, stride 1 (pad k/2) or stride 2 (pad k/2, floor output).
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(ParamStore& ps, int cin, int cout, int k, int stride = 1);

    void init(ParamStore& ps, std::mt19937_64& rng, double scale = 1.0) const;

    Tensor forward(const Tensor& x, const ParamStore& ps) const;
    // Returns d loss / d x; accumulates parameter gradients into pg when non-null.
    Tensor backward(const Tensor& x, const Tensor& gout, const ParamStore& ps, ParamStore* pg) const;

    int out_hw(int in) const { return stride_ == 1 ? in : (in + 2 * pad_ - k_) / 2 + 1; }
    int cin() const { return cin_; }
    int cout() const { return cout_; }

private:
    int cin_ = 0, cout_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
    std::size_t w_off_ = 0, b_off_ = 0;
};

struct GroupNormStats {
    std::vector<double> mean, inv_std;
};

class GroupNorm {
public:
    GroupNorm() = default;
    GroupNorm(ParamStore& ps, int channels, int groups, double eps = 1e-5);

    void init(ParamStore& ps) const; // gamma = 1, beta = 0

    Tensor forward(const Tensor& x, const ParamStore& ps, GroupNormStats& stats) const;
    Tensor backward(const Tensor& x, const Tensor& gout, const GroupNormStats& stats,
                    const ParamStore& ps, ParamStore* pg) const;

private:
    int channels_ = 0, groups_ = 0;
    double eps_ = 1e-5;
    std::size_t gamma_off_ = 0, beta_off_ = 0;
};

class Linear {
public:
    Linear() = default;
    Linear(ParamStore& ps, int in, int out);

    void init(ParamStore& ps, std::mt19937_64& rng, double scale = 1.0) const;

    std::vector<double> forward(const std::vector<double>& x, const ParamStore& ps) const;
    std::vector<double> backward(const std::vector<double>& x, const std::vector<double>& gout,
                                 const ParamStore& ps, ParamStore* pg) const;

    int in() const { return in_; }
    int out() const { return out_; }

private:
    int in_ = 0, out_ = 0;
    std::size_t w_off_ = 0, b_off_ = 0;
};

// Nearest-neighbour 2x upsampling.
Tensor upsample2(const Tensor& x);
Tensor upsample2_backward(const Tensor& gout);

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& g, Tensor& ga, Tensor& gb);

} // namespace ddic::net

#endif
