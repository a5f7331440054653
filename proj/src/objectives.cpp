#include "sslhar/objectives.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sslhar {

void CostBreakdown::finalize() {
    if (lambdas.size() != c_r.size()) {
        throw std::invalid_argument("cost breakdown: " + std::to_string(lambdas.size()) +
                                    " lambdas for " + std::to_string(c_r.size()) +
                                    " reconstruction terms");
    }
    total = c_s + pseudo_weight * c_pseudo;
    for (size_t l = 0; l < c_r.size(); ++l) total += lambdas[l] * c_r[l];
}

namespace {

void check_targets(const Tensor& logits, const std::vector<int>& targets) {
    if (logits.ndim() != 2) {
        throw std::invalid_argument("supervised_cost: logits must be N x C, got " +
                                    shape_str(logits));
    }
    if (static_cast<int>(targets.size()) != logits.dim(0)) {
        throw std::invalid_argument("supervised_cost: " + std::to_string(targets.size()) +
                                    " targets for " + std::to_string(logits.dim(0)) + " rows");
    }
    if (targets.empty()) throw std::invalid_argument("supervised_cost: empty batch");
    for (int t : targets) {
        if (t < 0 || t >= logits.dim(1)) {
            throw std::invalid_argument("supervised_cost: label " + std::to_string(t) +
                                        " outside [0, " + std::to_string(logits.dim(1)) + ")");
        }
    }
}

double log_sum_exp(const double* row, int n) {
    double mx = row[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, row[i]);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::exp(row[i] - mx);
    return mx + std::log(s);
}

}  // namespace

double supervised_cost(const Tensor& logits, const std::vector<int>& targets) {
    check_targets(logits, targets);
    const int n = logits.dim(0), classes = logits.dim(1);
    double cost = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* row = logits.data() + static_cast<int64_t>(i) * classes;
        cost += log_sum_exp(row, classes) - row[targets[static_cast<size_t>(i)]];
    }
    return cost / static_cast<double>(n);
}

Tensor supervised_cost_grad(const Tensor& logits, const std::vector<int>& targets) {
    check_targets(logits, targets);
    const int n = logits.dim(0), classes = logits.dim(1);
    Tensor g(logits.shape());
    const double inv_n = 1.0 / static_cast<double>(n);
    for (int i = 0; i < n; ++i) {
        const double* row = logits.data() + static_cast<int64_t>(i) * classes;
        double* grow = g.data() + static_cast<int64_t>(i) * classes;
        const double lse = log_sum_exp(row, classes);
        for (int c = 0; c < classes; ++c) grow[c] = std::exp(row[c] - lse) * inv_n;
        grow[targets[static_cast<size_t>(i)]] -= inv_n;
    }
    return g;
}

double reconstruction_cost(const Tensor& zhat, const Tensor& z) {
    if (!zhat.same_shape(z)) {
        throw std::invalid_argument("reconstruction_cost: shape mismatch " + shape_str(zhat) +
                                    " vs " + shape_str(z));
    }
    if (zhat.ndim() < 1 || zhat.dim(0) < 1) {
        throw std::invalid_argument("reconstruction_cost: empty batch");
    }
    double sum = 0.0;
    for (int64_t i = 0; i < zhat.size(); ++i) {
        const double d = zhat[i] - z[i];
        sum += d * d;
    }
    return sum / static_cast<double>(zhat.dim(0));
}

}  // namespace sslhar
