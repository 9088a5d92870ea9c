#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgcn/tensor.hpp"

namespace dgcn {

// Adam with bias correction. Owns first/second moment buffers per parameter;
// the parameters themselves are shared handles into the model.
template <typename T>
class AdamT {
public:
    explicit AdamT(std::vector<TensorT<T>> params, double lr = 3e-4,
                   double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& p : params_) {
            if (!p.requires_grad())
                throw std::invalid_argument("adam: parameter without gradient buffer");
            m_.emplace_back(p.size(), T(0));
            v_.emplace_back(p.size(), T(0));
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& vals = params_[i].values();
            const auto& g = params_[i].grad();
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::size_t j = 0; j < vals.size(); ++j) {
                m[j] = static_cast<T>(beta1_ * m[j] + (1.0 - beta1_) * g[j]);
                v[j] = static_cast<T>(beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j]);
                const double mhat = static_cast<double>(m[j]) / bc1;
                const double vhat = static_cast<double>(v[j]) / bc2;
                vals[j] -= static_cast<T>(lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }
    std::size_t step_count() const { return t_; }
    void set_step_count(std::size_t t) { t_ = t; }
    std::size_t n_params() const { return params_.size(); }

private:
    std::vector<TensorT<T>> params_;
    std::vector<std::vector<T>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
};

// Linear warmup to a base rate, flat afterwards.
inline double warmup_lr(double base_lr, std::size_t step, std::size_t warmup_steps) {
    if (warmup_steps == 0 || step >= warmup_steps) return base_lr;
    return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
}

using Adam = AdamT<float>;

}  // namespace dgcn
