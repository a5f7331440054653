#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sslhar/tensor.hpp"

namespace sslhar {

/// Rows are true classes, columns predicted.
struct ConfusionMatrix {
    int n_classes = 0;
    std::vector<int64_t> counts;  // n_classes x n_classes, row-major

    explicit ConfusionMatrix(int classes)
        : n_classes(classes), counts(static_cast<size_t>(classes) * classes, 0) {}
    int64_t& at(int truth, int pred) {
        return counts[static_cast<size_t>(truth) * n_classes + pred];
    }
    int64_t at(int truth, int pred) const {
        return counts[static_cast<size_t>(truth) * n_classes + pred];
    }
    int64_t total() const;
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& truths,
                          int n_classes);

/// Scores in percent. F1 is the harmonic mean of precision and recall; a zero
/// denominator (class never predicted or never true) sets the affected ratio
/// to 0 by convention. mean_f1 averages classes without support weighting.
struct Metrics {
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<double> f1;
    std::vector<int64_t> support;
    double mean_f1 = 0.0;
};

Metrics mean_f1(const ConfusionMatrix& cm);

struct CrossvalReport {
    std::vector<std::string> fold_names;
    std::vector<double> fold_f1;
    double mean = 0.0;
    double stddev = 0.0;  // population
};

CrossvalReport crossval_report(const std::vector<std::string>& fold_names,
                               const std::vector<double>& fold_f1);

/// Principal components by deflated power iteration on the covariance matrix.
/// Coordinates are the mean-centered projections; the sign convention makes
/// each component's largest-magnitude loading positive.
struct PcaResult {
    Tensor coords;                           // N x k
    Tensor components;                       // k x D
    std::vector<double> mean;                // D
    std::vector<double> explained_variance;  // k, non-increasing
};

PcaResult pca_project(const Tensor& features, int k = 2);

/// CSV `class,precision,recall,f1,support` plus a summary row.
void write_metrics_csv(const std::string& path, const Metrics& m,
                       const std::vector<std::string>& classes);

}  // namespace sslhar
