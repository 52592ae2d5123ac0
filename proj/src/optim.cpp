#include "surgseg/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace surgseg {

void OptimConfig::validate() const {
    if (!(lr_base > 0.0)) throw std::invalid_argument("lr_base must be positive");
    if (lr_max < lr_base) throw std::invalid_argument("lr_max must be >= lr_base");
    if (cycle_steps < 0) throw std::invalid_argument("cycle_steps must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw std::invalid_argument("betas must lie in [0,1)");
    }
    if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
    if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
}

double lr_at_step(const OptimConfig& cfg, int64_t step) {
    if (cfg.cycle_steps <= 0 || cfg.lr_max == cfg.lr_base) return cfg.lr_base;
    const double phase = double(step % cfg.cycle_steps) / double(cfg.cycle_steps);
    return cfg.lr_max - (cfg.lr_max - cfg.lr_base) * std::abs(1.0 - 2.0 * phase);
}

Adam::Adam(ParamStore& params, OptimConfig cfg) : params_(&params), cfg_(cfg) {
    cfg_.validate();
    m_.reserve(params.items().size());
    v_.reserve(params.items().size());
    for (const auto& [name, p] : params.items()) {
        m_.push_back(Tensor::zeros(p->value.shape));
        v_.push_back(Tensor::zeros(p->value.shape));
    }
}

void Adam::zero_grad() {
    for (const auto& [name, p] : params_->items()) p->clear_grad();
}

double Adam::step() {
    const double lr = lr_at_step(cfg_, steps_);
    const int64_t t = steps_ + 1;  // bias correction is 1-based
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t));

    const auto& items = params_->items();
    for (size_t i = 0; i < items.size(); ++i) {
        ad::Node& p = *items[i].second;
        if (p.grad.data.empty()) continue;  // leaf did not take part in the graph
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (int64_t j = 0; j < p.value.numel(); ++j) {
            const double g = p.grad[j] + cfg_.weight_decay * p.value[j];
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p.value[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
    params_->round_to_f32();
    ++steps_;
    return lr;
}

}  // namespace surgseg
