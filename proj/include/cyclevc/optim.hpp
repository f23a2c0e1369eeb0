#pragma once

#include <vector>

#include "cyclevc/autodiff.hpp"

namespace cyclevc {

// Adam with bias correction.
class Adam {
public:
    Adam(std::vector<ad::Param*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (auto* p : params_) {
            m_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
            v_.push_back(Mat::Zero(p->value.rows(), p->value.cols()));
        }
    }

    // Applies one update from the accumulated grads, then clears them.
    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            ad::Param& p = *params_[i];
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * p.grad;
            v_[i].array() = beta2_ * v_[i].array() + (1.0 - beta2_) * p.grad.array().square();
            p.value.array() -=
                lr_ * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + eps_);
            p.zero_grad();
        }
    }

private:
    std::vector<ad::Param*> params_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Mat> m_, v_;
};

}  // namespace cyclevc
