#ifndef DDIC_NET_ADAM_HPP
#define DDIC_NET_ADAM_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "ddic/net/layers.hpp"

namespace ddic::net {

// Adam with bias correction. State is plain data so checkpoints can resume
// optimization bit-exactly.
class Adam {
public:
    Adam() = default;
    Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
          m_(n, 0.0), v_(n, 0.0) {}

    void step(ParamStore& ps) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < m_.size(); ++i) {
            const double g = ps.g[i];
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
            ps.w[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
        }
    }

    double learning_rate() const { return lr_; }
    std::int64_t steps_taken() const { return t_; }
    std::vector<double>& moment1() { return m_; }
    std::vector<double>& moment2() { return v_; }
    const std::vector<double>& moment1() const { return m_; }
    const std::vector<double>& moment2() const { return v_; }
    void restore(std::vector<double> m, std::vector<double> v, std::int64_t t) {
        m_ = std::move(m);
        v_ = std::move(v);
        t_ = t;
    }

private:
    double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    std::int64_t t_ = 0;
    std::vector<double> m_, v_;
};

} // namespace ddic::net

#endif
