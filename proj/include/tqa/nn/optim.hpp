#pragma once

#include <string>

#include "tqa/nn/tape.hpp"

namespace tqa::nn {

struct AdamWConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// Decoupled weight decay Adam. Decay skips no_decay parameters (biases and
/// layer norm scales).
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

    /// One update over every trainable parameter; lr_scale multiplies the
    /// base learning rate (scheduler hook).
    void step(ParamStore& params, double lr_scale = 1.0);

    int steps_taken() const { return t_; }

private:
    AdamWConfig cfg_;
    int t_ = 0;
};

/// Cosine annealing from 1 at step 0 to 0 at step total_steps.
double cosine_lr_scale(int step, int total_steps);

}  // namespace tqa::nn
