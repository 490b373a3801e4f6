#ifndef DDIC_NET_TENSOR_HPP
#define DDIC_NET_TENSOR_HPP

#include <cstddef>
#include <vector>

namespace ddic::net {

// Single-sample CHW tensor of doubles.
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_),
        v(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}

    std::size_t size() const { return v.size(); }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    double* ch(int i) { return v.data() + static_cast<std::size_t>(i) * plane(); }
    const double* ch(int i) const { return v.data() + static_cast<std::size_t>(i) * plane(); }
    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }

    void zero() { std::fill(v.begin(), v.end(), 0.0); }
};

} // namespace ddic::net

#endif
