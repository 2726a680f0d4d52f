#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "tqa/nn/tape.hpp"

namespace tqa::nn {

struct GradCheckOptions {
    double eps = 1e-5;
    int coords_per_tensor = 6;
    std::uint64_t seed = 0;
    /// Relative error denominator floor; keeps near-zero gradients from
    /// inflating the error through finite-difference round-off.
    double denom_floor = 1e-6;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    int worst_row = -1;
    int worst_col = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    int coords_checked = 0;
};

/// Compares analytic gradients against central finite differences on
/// randomly sampled coordinates of every trainable tensor.
///
/// loss_fn(true) must zero grads, run forward + backward and return the loss;
/// loss_fn(false) must run the same forward (same noise, same detached
/// targets) and return the loss without touching grads.
GradCheckReport grad_check(ParamStore& params, const std::function<double(bool)>& loss_fn,
                           const GradCheckOptions& opts = {});

}  // namespace tqa::nn
