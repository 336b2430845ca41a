#include "smartedit/optim.hpp"

#include <algorithm>
#include <cmath>

#include "smartedit/errors.hpp"

namespace smartedit {

void adamw_step(std::span<double> param, std::span<const double> grad, std::span<double> m,
                std::span<double> v, double lr, double weight_decay, double beta1, double beta2,
                double eps, int64_t step_index) {
    if (step_index < 1) throw InvariantViolation("adamw_step: step_index must be >= 1");
    if (param.size() != grad.size() || param.size() != m.size() || param.size() != v.size())
        throw InvariantViolation("adamw_step: param/grad/state sizes differ");

    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_index));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_index));
    for (size_t i = 0; i < param.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        param[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * param[i]);
    }
}

AdamW::AdamW(std::vector<std::pair<std::string, Tensor>> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(static_cast<size_t>(params_[i].second.size()), 0.0);
        v_[i].assign(static_cast<size_t>(params_[i].second.size()), 0.0);
    }
}

double AdamW::current_lr() const {
    const int64_t next = step_ + 1;
    const int64_t warmup_steps =
        static_cast<int64_t>(cfg_.warmup_ratio * static_cast<double>(cfg_.total_steps));
    if (warmup_steps > 0 && next <= warmup_steps)
        return cfg_.lr * static_cast<double>(next) / static_cast<double>(warmup_steps);
    return cfg_.lr;
}

void AdamW::step() {
    const double lr = current_lr();
    ++step_;
    for (size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i].second;
        if (!p.has_grad()) continue;
        adamw_step(p.raw(), p.grad(), m_[i], v_[i], lr, cfg_.weight_decay, cfg_.beta1, cfg_.beta2,
                   cfg_.eps, step_);
    }
}

void AdamW::zero_grad() {
    for (auto& [name, p] : params_) p.zero_grad();
}

}  // namespace smartedit
