#include "canon/optim.hpp"

#include <cmath>
#include <numbers>

#include "canon/kernels.hpp"

namespace canon {

double CosineSchedule::lr_at(long step) const {
    if (step <= 0) return base_lr;
    if (step >= total_steps) return 0.0;
    const double frac = double(step) / double(total_steps);
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

Adam::Adam(std::vector<Tensor> params, CosineSchedule schedule, double beta1, double beta2,
           double eps)
    : params_(std::move(params)),
      schedule_(schedule),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {
    for (auto& p : params_) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

double Adam::clip_global_norm(double max_norm) {
    double sq = 0.0;
    for (auto& p : params_) {
        auto g = p.mutable_grad();
        sq += kern::active().dot(g.data(), g.data(), g.size());
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (auto& p : params_) {
            auto g = p.mutable_grad();
            kern::active().scale(g.data(), s, g.size());
        }
    }
    return norm;
}

void Adam::step() {
    const double lr = schedule_.lr_at(step_);
    last_lr_ = lr;
    ++step_;
    const double bias1 = 1.0 - std::pow(beta1_, double(step_));
    const double bias2 = 1.0 - std::pow(beta2_, double(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto data = params_[i].mutable_data();
        auto grad = params_[i].mutable_grad();
        kern::active().adam_update(data.data(), grad.data(), m_[i].data(), v_[i].data(),
                                   data.size(), lr, beta1_, beta2_, eps_, bias1, bias2);
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

}  // namespace canon
