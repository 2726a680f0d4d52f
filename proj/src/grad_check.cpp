#include "tqa/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace tqa::nn {

GradCheckReport grad_check(ParamStore& params, const std::function<double(bool)>& loss_fn,
                           const GradCheckOptions& opts) {
    GradCheckReport report;
    loss_fn(true);  // fill analytic gradients

    // Snapshot so coordinate perturbations cannot leak between tensors.
    std::vector<Mat> analytic;
    for (Param* p : params.all()) analytic.push_back(p->grad);

    std::mt19937_64 rng(opts.seed);
    for (std::size_t pi = 0; pi < params.all().size(); ++pi) {
        Param* p = params.all()[pi];
        if (!p->trainable || p->value.size() == 0) continue;
        const int n_coords =
            std::min<long>(opts.coords_per_tensor, p->value.size());
        for (int c = 0; c < n_coords; ++c) {
            const long flat = std::uniform_int_distribution<long>(0, p->value.size() - 1)(rng);
            const long row = flat % p->value.rows();
            const long col = flat / p->value.rows();
            const double saved = p->value(row, col);

            p->value(row, col) = saved + opts.eps;
            const double up = loss_fn(false);
            p->value(row, col) = saved - opts.eps;
            const double down = loss_fn(false);
            p->value(row, col) = saved;

            const double numeric = (up - down) / (2.0 * opts.eps);
            const double exact = analytic[pi](row, col);
            const double denom =
                std::max({opts.denom_floor, std::abs(numeric), std::abs(exact)});
            const double rel = std::abs(numeric - exact) / denom;
            ++report.coords_checked;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = p->name;
                report.worst_row = static_cast<int>(row);
                report.worst_col = static_cast<int>(col);
                report.worst_analytic = exact;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace tqa::nn
