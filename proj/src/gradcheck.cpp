#include "sslhar/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sslhar {

GradCheckReport gradient_check(const std::function<double()>& loss,
                               const std::vector<CheckedParam>& params, double epsilon,
                               double tolerance) {
    if (epsilon <= 0.0) throw std::invalid_argument("gradient_check: epsilon must be > 0");
    GradCheckReport report;
    report.tolerance = tolerance;
    for (const CheckedParam& p : params) {
        if (p.value == nullptr || p.grad == nullptr) {
            throw std::invalid_argument("gradient_check: null parameter '" + p.name + "'");
        }
        if (!p.value->same_shape(*p.grad)) {
            throw std::invalid_argument("gradient_check: gradient shape " +
                                        shape_str(*p.grad) + " does not match parameter '" +
                                        p.name + "' " + shape_str(*p.value));
        }
        GradCheckReport::Entry entry{p.name, 0.0};
        Tensor& theta = *p.value;
        for (int64_t i = 0; i < theta.size(); ++i) {
            const double original = theta[i];
            theta[i] = original + epsilon;
            const double f_plus = loss();
            theta[i] = original - epsilon;
            const double f_minus = loss();
            theta[i] = original;
            if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
                throw std::runtime_error("gradient_check: non-finite loss while perturbing '" +
                                         p.name + "'");
            }
            const double numeric = (f_plus - f_minus) / (2.0 * epsilon);
            const double analytic = (*p.grad)[i];
            const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
            entry.max_rel_err = std::max(entry.max_rel_err, std::fabs(analytic - numeric) / denom);
        }
        if (entry.max_rel_err >= report.max_rel_err) {
            report.max_rel_err = entry.max_rel_err;
            report.worst_param = entry.name;
        }
        report.per_param.push_back(std::move(entry));
    }
    report.pass = report.max_rel_err < tolerance;
    return report;
}

}  // namespace sslhar
