#include "tqa/nn/optim.hpp"

#include <cmath>

namespace tqa::nn {

void AdamW::step(ParamStore& params, double lr_scale) {
    ++t_;
    const double lr = cfg_.lr * lr_scale;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (Param* p : params.all()) {
        if (!p->trainable) continue;
        p->adam_m = cfg_.beta1 * p->adam_m + (1.0 - cfg_.beta1) * p->grad;
        p->adam_v = cfg_.beta2 * p->adam_v.array().matrix() +
                    (1.0 - cfg_.beta2) * p->grad.array().square().matrix();
        const Mat m_hat = p->adam_m / bc1;
        const Mat v_hat = p->adam_v / bc2;
        p->value -= lr * (m_hat.array() / (v_hat.array().sqrt() + cfg_.eps)).matrix();
        if (!p->no_decay && cfg_.weight_decay > 0) {
            p->value -= lr * cfg_.weight_decay * p->value;
        }
    }
}

double cosine_lr_scale(int step, int total_steps) {
    if (total_steps <= 0) return 1.0;
    if (step >= total_steps) return 0.0;
    const double x = static_cast<double>(step) / static_cast<double>(total_steps);
    return 0.5 * (1.0 + std::cos(3.14159265358979323846 * x));
}

}  // namespace tqa::nn
