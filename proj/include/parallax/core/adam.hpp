#pragma once

#include "parallax/core/tensor.hpp"

namespace parallax {

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Parameters update in place; their gradients are
// cleared after every step, so the next tape accumulates from zero.
class Adam {
public:
    Adam(std::vector<Tensor> params, AdamConfig cfg = {}) : params_(std::move(params)), cfg_(cfg) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(static_cast<size_t>(params_[i].size()), 0.0);
            v_[i].assign(static_cast<size_t>(params_[i].size()), 0.0);
        }
    }

    void step() {
        for (const Tensor& p : params_)
            check(p.has_grad(), "Adam::step: parameter has no populated gradient");
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (size_t i = 0; i < params_.size(); ++i) {
            std::vector<double>& p = params_[i].mutable_values();
            const std::vector<double>& g = params_[i].grad();
            std::vector<double>& m = m_[i];
            std::vector<double>& v = v_[i];
            for (size_t j = 0; j < p.size(); ++j) {
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                p[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
            params_[i].zero_grad();
        }
    }

    void zero_grad() {
        for (Tensor& p : params_) p.zero_grad();
    }

    int steps_taken() const { return t_; }
    const std::vector<Tensor>& params() const { return params_; }
    AdamConfig& config() { return cfg_; }

private:
    std::vector<Tensor> params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    int t_ = 0;
};

}  // namespace parallax
