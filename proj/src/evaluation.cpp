#include "sslhar/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace sslhar {

int64_t ConfusionMatrix::total() const {
    int64_t t = 0;
    for (int64_t c : counts) t += c;
    return t;
}

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& truths,
                          int n_classes) {
    if (preds.size() != truths.size()) {
        throw std::invalid_argument("confusion: " + std::to_string(preds.size()) +
                                    " predictions vs " + std::to_string(truths.size()) +
                                    " truths");
    }
    ConfusionMatrix cm(n_classes);
    for (size_t i = 0; i < preds.size(); ++i) {
        const int p = preds[i], t = truths[i];
        if (p < 0 || p >= n_classes || t < 0 || t >= n_classes) {
            throw std::invalid_argument("confusion: class out of range at position " +
                                        std::to_string(i));
        }
        ++cm.at(t, p);
    }
    return cm;
}

Metrics mean_f1(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw std::invalid_argument("mean_f1: empty confusion matrix");
    const int k = cm.n_classes;
    Metrics m;
    m.precision.resize(static_cast<size_t>(k));
    m.recall.resize(static_cast<size_t>(k));
    m.f1.resize(static_cast<size_t>(k));
    m.support.resize(static_cast<size_t>(k));
    double f1_sum = 0.0;
    for (int c = 0; c < k; ++c) {
        const int64_t tp = cm.at(c, c);
        int64_t row = 0, col = 0;
        for (int j = 0; j < k; ++j) {
            row += cm.at(c, j);
            col += cm.at(j, c);
        }
        const double precision = col > 0 ? static_cast<double>(tp) / static_cast<double>(col) : 0.0;
        const double recall = row > 0 ? static_cast<double>(tp) / static_cast<double>(row) : 0.0;
        const double f1 =
            precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        m.precision[static_cast<size_t>(c)] = 100.0 * precision;
        m.recall[static_cast<size_t>(c)] = 100.0 * recall;
        m.f1[static_cast<size_t>(c)] = 100.0 * f1;
        m.support[static_cast<size_t>(c)] = row;
        f1_sum += 100.0 * f1;
    }
    m.mean_f1 = f1_sum / static_cast<double>(k);
    return m;
}

CrossvalReport crossval_report(const std::vector<std::string>& fold_names,
                               const std::vector<double>& fold_f1) {
    if (fold_f1.empty()) throw std::invalid_argument("crossval_report: no folds");
    if (fold_names.size() != fold_f1.size()) {
        throw std::invalid_argument("crossval_report: name/score count mismatch");
    }
    CrossvalReport r;
    r.fold_names = fold_names;
    r.fold_f1 = fold_f1;
    double mean = 0.0;
    for (double f : fold_f1) mean += f;
    mean /= static_cast<double>(fold_f1.size());
    double var = 0.0;
    for (double f : fold_f1) var += (f - mean) * (f - mean);
    var /= static_cast<double>(fold_f1.size());
    r.mean = mean;
    r.stddev = std::sqrt(var);
    return r;
}

PcaResult pca_project(const Tensor& features, int k) {
    if (features.ndim() != 2) {
        throw std::invalid_argument("pca_project: expected N x D features, got " +
                                    shape_str(features));
    }
    const int n = features.dim(0), d = features.dim(1);
    if (n < 2) throw std::invalid_argument("pca_project: need at least 2 rows");
    if (k < 1 || k > d) {
        throw std::invalid_argument("pca_project: k = " + std::to_string(k) +
                                    " outside [1, " + std::to_string(d) + "]");
    }

    PcaResult res;
    res.mean.assign(static_cast<size_t>(d), 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) res.mean[static_cast<size_t>(j)] += features.at(i, j);
    }
    for (double& m : res.mean) m /= static_cast<double>(n);

    Tensor centered({n, d});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
            centered.at(i, j) = features.at(i, j) - res.mean[static_cast<size_t>(j)];
        }
    }

    // Covariance, then deflated power iterations for the top-k eigenpairs.
    Tensor cov({d, d});
    for (int i = 0; i < n; ++i) {
        for (int a = 0; a < d; ++a) {
            const double va = centered.at(i, a);
            if (va == 0.0) continue;
            for (int b = 0; b < d; ++b) cov.at(a, b) += va * centered.at(i, b);
        }
    }
    for (int64_t i = 0; i < cov.size(); ++i) cov[i] /= static_cast<double>(n - 1);

    res.components = Tensor({k, d});
    res.explained_variance.assign(static_cast<size_t>(k), 0.0);
    Tensor work = cov;
    for (int comp = 0; comp < k; ++comp) {
        // Deterministic start vector; re-seeded if it lies in the null space.
        std::vector<double> v(static_cast<size_t>(d), 0.0);
        v[static_cast<size_t>(comp % d)] = 1.0;
        double eig = 0.0;
        for (int iter = 0; iter < 2000; ++iter) {
            std::vector<double> w(static_cast<size_t>(d), 0.0);
            for (int a = 0; a < d; ++a) {
                double acc = 0.0;
                for (int b = 0; b < d; ++b) acc += work.at(a, b) * v[static_cast<size_t>(b)];
                w[static_cast<size_t>(a)] = acc;
            }
            double norm = 0.0;
            for (double x : w) norm += x * x;
            norm = std::sqrt(norm);
            if (norm < 1e-300) {
                // Null direction: rotate the start basis vector.
                std::fill(v.begin(), v.end(), 0.0);
                v[static_cast<size_t>((comp + iter + 1) % d)] = 1.0;
                continue;
            }
            double delta = 0.0;
            for (int a = 0; a < d; ++a) {
                const double nv = w[static_cast<size_t>(a)] / norm;
                delta = std::max(delta, std::fabs(nv - v[static_cast<size_t>(a)]));
                v[static_cast<size_t>(a)] = nv;
            }
            eig = norm;
            if (delta < 1e-14 && iter > 2) break;
        }
        // Sign convention: largest-magnitude loading positive.
        int arg = 0;
        for (int a = 1; a < d; ++a) {
            if (std::fabs(v[static_cast<size_t>(a)]) > std::fabs(v[static_cast<size_t>(arg)])) arg = a;
        }
        if (v[static_cast<size_t>(arg)] < 0.0) {
            for (double& x : v) x = -x;
        }
        for (int a = 0; a < d; ++a) res.components.at(comp, a) = v[static_cast<size_t>(a)];
        res.explained_variance[static_cast<size_t>(comp)] = eig;
        // Deflate.
        for (int a = 0; a < d; ++a) {
            for (int b = 0; b < d; ++b) {
                work.at(a, b) -= eig * v[static_cast<size_t>(a)] * v[static_cast<size_t>(b)];
            }
        }
    }

    res.coords = Tensor({n, k});
    for (int i = 0; i < n; ++i) {
        for (int comp = 0; comp < k; ++comp) {
            double acc = 0.0;
            for (int a = 0; a < d; ++a) acc += centered.at(i, a) * res.components.at(comp, a);
            res.coords.at(i, comp) = acc;
        }
    }
    return res;
}

void write_metrics_csv(const std::string& path, const Metrics& m,
                       const std::vector<std::string>& classes) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "class,precision,recall,f1,support\n";
    char buf[160];
    for (size_t c = 0; c < m.f1.size(); ++c) {
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%lld",
                      c < classes.size() ? classes[c].c_str() : "?", m.precision[c], m.recall[c],
                      m.f1[c], static_cast<long long>(m.support[c]));
        out << buf << "\n";
    }
    std::snprintf(buf, sizeof(buf), "mean_f1,,,%.6f,", m.mean_f1);
    out << buf << "\n";
}

}  // namespace sslhar
