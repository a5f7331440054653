#include "sslhar/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "sslhar/objectives.hpp"

namespace sslhar {

int feature_length(int channels) { return 4 * channels + channels * (channels - 1) / 2; }

std::vector<double> extract_features(const Tensor& window) {
    if (window.ndim() != 2) {
        throw std::invalid_argument("extract_features: expected channels x T window, got " +
                                    shape_str(window));
    }
    const int c = window.dim(0), t = window.dim(1);
    if (t < 2) throw std::invalid_argument("extract_features: need T >= 2, got " + std::to_string(t));

    std::vector<double> mean(static_cast<size_t>(c)), sd(static_cast<size_t>(c)),
        mx(static_cast<size_t>(c)), mn(static_cast<size_t>(c));
    for (int i = 0; i < c; ++i) {
        const double* row = window.data() + static_cast<int64_t>(i) * t;
        double m = 0.0, lo = row[0], hi = row[0];
        for (int j = 0; j < t; ++j) {
            m += row[j];
            lo = std::min(lo, row[j]);
            hi = std::max(hi, row[j]);
        }
        m /= t;
        double var = 0.0;
        for (int j = 0; j < t; ++j) var += (row[j] - m) * (row[j] - m);
        var /= t;  // population
        mean[static_cast<size_t>(i)] = m;
        sd[static_cast<size_t>(i)] = std::sqrt(var);
        mx[static_cast<size_t>(i)] = hi;
        mn[static_cast<size_t>(i)] = lo;
    }

    std::vector<double> out;
    out.reserve(static_cast<size_t>(feature_length(c)));
    out.insert(out.end(), mean.begin(), mean.end());
    out.insert(out.end(), sd.begin(), sd.end());
    out.insert(out.end(), mx.begin(), mx.end());
    out.insert(out.end(), mn.begin(), mn.end());
    for (int i = 0; i < c; ++i) {
        for (int j = i + 1; j < c; ++j) {
            const double denom = sd[static_cast<size_t>(i)] * sd[static_cast<size_t>(j)];
            if (denom == 0.0) {
                out.push_back(0.0);  // zero-variance fallback
                continue;
            }
            const double* ri = window.data() + static_cast<int64_t>(i) * t;
            const double* rj = window.data() + static_cast<int64_t>(j) * t;
            double cov = 0.0;
            for (int s = 0; s < t; ++s) {
                cov += (ri[s] - mean[static_cast<size_t>(i)]) * (rj[s] - mean[static_cast<size_t>(j)]);
            }
            cov /= t;
            out.push_back(cov / denom);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

namespace {

Tensor standardized_matrix(const std::vector<std::vector<double>>& features,
                           const std::vector<double>& mean, const std::vector<double>& scale) {
    const int n = static_cast<int>(features.size());
    const int d = static_cast<int>(mean.size());
    Tensor x({n, d});
    for (int i = 0; i < n; ++i) {
        if (static_cast<int>(features[static_cast<size_t>(i)].size()) != d) {
            throw std::invalid_argument("logreg: feature row " + std::to_string(i) + " has " +
                                        std::to_string(features[static_cast<size_t>(i)].size()) +
                                        " values, expected " + std::to_string(d));
        }
        for (int j = 0; j < d; ++j) {
            x.at(i, j) = (features[static_cast<size_t>(i)][static_cast<size_t>(j)] -
                          mean[static_cast<size_t>(j)]) /
                         scale[static_cast<size_t>(j)];
        }
    }
    return x;
}

Tensor proba_from_matrix(const LogRegModel& model, const Tensor& x) {
    Tensor logits = matmul(x, model.weight);
    logits = add(logits, model.bias);
    return softmax(logits);
}

}  // namespace

LogRegModel train_logreg(const std::vector<std::vector<double>>& features,
                         const std::vector<int>& labels, int n_classes, const LogRegConfig& cfg) {
    if (features.empty() || features.size() != labels.size()) {
        throw std::invalid_argument("train_logreg: feature/label count mismatch");
    }
    std::set<int> present(labels.begin(), labels.end());
    if (present.size() < 2) {
        throw std::invalid_argument("train_logreg: training set covers " +
                                    std::to_string(present.size()) + " class(es), need >= 2");
    }

    const int n = static_cast<int>(features.size());
    const int d = static_cast<int>(features.front().size());
    LogRegModel model;
    model.n_classes = n_classes;
    model.feat_mean.assign(static_cast<size_t>(d), 0.0);
    model.feat_scale.assign(static_cast<size_t>(d), 1.0);
    for (int j = 0; j < d; ++j) {
        double m = 0.0;
        for (int i = 0; i < n; ++i) m += features[static_cast<size_t>(i)][static_cast<size_t>(j)];
        m /= n;
        double var = 0.0;
        for (int i = 0; i < n; ++i) {
            const double dd = features[static_cast<size_t>(i)][static_cast<size_t>(j)] - m;
            var += dd * dd;
        }
        var /= n;
        model.feat_mean[static_cast<size_t>(j)] = m;
        if (var > 0.0) model.feat_scale[static_cast<size_t>(j)] = std::sqrt(var);
    }

    const Tensor x = standardized_matrix(features, model.feat_mean, model.feat_scale);
    Rng rng(cfg.seed);
    model.weight = Tensor({d, n_classes});
    Rng wr = rng.fork("logreg.weight");
    for (int64_t i = 0; i < model.weight.size(); ++i) model.weight[i] = 0.01 * wr.normal();
    model.bias = Tensor({n_classes});

    // Full-batch adaptive-moment updates on CE + l2 (weights only).
    Tensor mw(model.weight.shape()), vw(model.weight.shape());
    Tensor mb(model.bias.shape()), vb(model.bias.shape());
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int t = 1; t <= cfg.epochs; ++t) {
        Tensor logits = add(matmul(x, model.weight), model.bias);
        Tensor dlogits = supervised_cost_grad(logits, labels);
        Tensor dw({d, n_classes});
        Tensor db({n_classes});
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < d; ++j) {
                const double xv = x.at(i, j);
                if (xv == 0.0) continue;
                for (int c = 0; c < n_classes; ++c) dw.at(j, c) += xv * dlogits.at(i, c);
            }
            for (int c = 0; c < n_classes; ++c) db[c] += dlogits.at(i, c);
        }
        for (int64_t i = 0; i < dw.size(); ++i) dw[i] += cfg.l2 * model.weight[i];

        const double bc1 = 1.0 - std::pow(b1, t), bc2 = 1.0 - std::pow(b2, t);
        for (int64_t i = 0; i < dw.size(); ++i) {
            mw[i] = b1 * mw[i] + (1 - b1) * dw[i];
            vw[i] = b2 * vw[i] + (1 - b2) * dw[i] * dw[i];
            model.weight[i] -= cfg.learning_rate * (mw[i] / bc1) / (std::sqrt(vw[i] / bc2) + eps);
        }
        for (int64_t i = 0; i < db.size(); ++i) {
            mb[i] = b1 * mb[i] + (1 - b1) * db[i];
            vb[i] = b2 * vb[i] + (1 - b2) * db[i] * db[i];
            model.bias[i] -= cfg.learning_rate * (mb[i] / bc1) / (std::sqrt(vb[i] / bc2) + eps);
        }
    }
    return model;
}

Tensor logreg_predict_proba(const LogRegModel& model,
                            const std::vector<std::vector<double>>& features) {
    if (features.empty()) throw std::invalid_argument("logreg_predict_proba: no rows");
    const Tensor x = standardized_matrix(features, model.feat_mean, model.feat_scale);
    return proba_from_matrix(model, x);
}

std::vector<int> logreg_predict(const LogRegModel& model,
                                const std::vector<std::vector<double>>& features) {
    const Tensor p = logreg_predict_proba(model, features);
    std::vector<int> out(static_cast<size_t>(p.dim(0)));
    for (int i = 0; i < p.dim(0); ++i) {
        int best = 0;
        for (int c = 1; c < p.dim(1); ++c) {
            if (p.at(i, c) > p.at(i, best)) best = c;
        }
        out[static_cast<size_t>(i)] = best;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Self-training
// ---------------------------------------------------------------------------

SelfTrainResult self_train(const std::vector<std::vector<double>>& labeled_features,
                           const std::vector<int>& labels,
                           const std::vector<std::vector<double>>& unlabeled_features,
                           int n_classes, double threshold, int max_iters,
                           const LogRegConfig& cfg) {
    if (threshold <= 0.0 || threshold >= 1.0) {
        throw std::invalid_argument("self_train: threshold must be in (0, 1)");
    }
    SelfTrainResult res;
    std::vector<std::vector<double>> cur_features = labeled_features;
    std::vector<int> cur_labels = labels;
    std::vector<int> remaining(unlabeled_features.size());
    for (size_t i = 0; i < remaining.size(); ++i) remaining[i] = static_cast<int>(i);

    for (int iter = 0; iter < max_iters; ++iter) {
        res.model = train_logreg(cur_features, cur_labels, n_classes, cfg);
        res.iterations = iter + 1;
        if (remaining.empty()) break;

        std::vector<std::vector<double>> pool;
        pool.reserve(remaining.size());
        for (int id : remaining) pool.push_back(unlabeled_features[static_cast<size_t>(id)]);
        const Tensor proba = logreg_predict_proba(res.model, pool);

        std::vector<int> still;
        bool promoted_any = false;
        for (size_t r = 0; r < remaining.size(); ++r) {
            int best = 0;
            for (int c = 1; c < n_classes; ++c) {
                if (proba.at(static_cast<int>(r), c) > proba.at(static_cast<int>(r), best)) best = c;
            }
            const double conf = proba.at(static_cast<int>(r), best);
            if (conf >= threshold) {
                cur_features.push_back(unlabeled_features[static_cast<size_t>(remaining[r])]);
                cur_labels.push_back(best);
                res.audit_log.push_back({iter, remaining[r], best, conf});
                promoted_any = true;
            } else {
                still.push_back(remaining[r]);
            }
        }
        remaining = std::move(still);
        if (!promoted_any) break;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Pseudo-label
// ---------------------------------------------------------------------------

TrainResult pseudo_label(const NetworkSpec& netspec, const TrainConfig& base,
                         const LabeledSet& labeled, const UnlabeledSet& unlabeled,
                         const LabeledSet& validation, double alpha_max, int ramp_epochs) {
    if (alpha_max < 0.0) throw std::invalid_argument("pseudo_label: alpha_max must be >= 0");
    TrainConfig cfg = base;
    cfg.model_kind = ModelKind::Supervised;
    cfg.pseudo_alpha_max = alpha_max;
    cfg.pseudo_ramp_epochs = ramp_epochs;
    return train(netspec, cfg, labeled, unlabeled, validation);
}

}  // namespace sslhar
