#pragma once

#include <vector>

#include "sslhar/tensor.hpp"

namespace sslhar {

/// Itemized training cost for one batch. `total` is always
/// c_s + pseudo_weight * c_pseudo + sum_l lambdas[l] * c_r[l]; the pseudo term
/// is zero everywhere except the pseudo-label baseline.
struct CostBreakdown {
    double c_s = 0.0;
    std::vector<double> c_r;
    std::vector<double> lambdas;
    double c_pseudo = 0.0;
    double pseudo_weight = 0.0;
    double total = 0.0;

    void finalize();
};

/// Mean negative log softmax probability of the target class, via log-sum-exp.
/// logits: N x C, targets: N values in [0, C).
double supervised_cost(const Tensor& logits, const std::vector<int>& targets);

/// Gradient of supervised_cost w.r.t. the logits: (softmax - onehot) / N.
Tensor supervised_cost_grad(const Tensor& logits, const std::vector<int>& targets);

/// Mean over examples (leading dimension) of the squared Euclidean distance
/// between reconstruction and clean target. Shapes must match exactly.
double reconstruction_cost(const Tensor& zhat, const Tensor& z);

}  // namespace sslhar
