#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sslhar/tensor.hpp"

namespace sslhar {

/// Result of comparing analytic gradients against central finite differences.
struct GradCheckReport {
    struct Entry {
        std::string name;
        double max_rel_err = 0.0;
    };
    std::vector<Entry> per_param;
    std::string worst_param;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

/// A parameter tensor to perturb, paired with its analytic gradient.
/// `value` is mutated in place during checking and restored afterwards.
struct CheckedParam {
    std::string name;
    Tensor* value = nullptr;
    const Tensor* grad = nullptr;
};

/// Central-difference check: for every scalar in every parameter, perturbs by
/// +/- epsilon, evaluates `loss` (a pure function of the current parameter
/// values), and compares (f+ - f-) / 2eps against the analytic gradient using
/// rel err = |a - n| / max(|a|, |n|, 1e-8).
///
/// Throws if the loss evaluates non-finite, naming the offending parameter.
GradCheckReport gradient_check(const std::function<double()>& loss,
                               const std::vector<CheckedParam>& params, double epsilon,
                               double tolerance);

}  // namespace sslhar
