#include "sslhar/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "sslhar/evaluation.hpp"

namespace sslhar {

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

AdamState::AdamState(const ParamSet& params) {
    m.reserve(static_cast<size_t>(params.count()));
    v.reserve(static_cast<size_t>(params.count()));
    for (int i = 0; i < params.count(); ++i) {
        m.emplace_back(params.value_at(i).shape());
        v.emplace_back(params.value_at(i).shape());
    }
}

void adam_step(ParamSet& params, AdamState& state, double lr, double beta1, double beta2,
               double eps) {
    if (static_cast<int>(state.m.size()) != params.count()) {
        throw std::invalid_argument("adam_step: state does not match parameter set");
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (int i = 0; i < params.count(); ++i) {
        Tensor& theta = params.value_at(i);
        const Tensor& g = params.grad_at(i);
        Tensor& mi = state.m[static_cast<size_t>(i)];
        Tensor& vi = state.v[static_cast<size_t>(i)];
        for (int64_t j = 0; j < theta.size(); ++j) {
            const double gj = g[j];
            if (!std::isfinite(gj)) {
                throw std::runtime_error("adam_step: non-finite gradient in '" +
                                         params.names()[static_cast<size_t>(i)] + "'");
            }
            mi[j] = beta1 * mi[j] + (1.0 - beta1) * gj;
            vi[j] = beta2 * vi[j] + (1.0 - beta2) * gj * gj;
            const double mhat = mi[j] / bc1;
            const double vhat = vi[j] / bc2;
            theta[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

namespace {

/// Draws indices in shuffled order, reshuffling each time the pool is
/// exhausted (draws may span the boundary).
class CyclingSampler {
public:
    CyclingSampler(int n, Rng rng) : rng_(rng), order_(static_cast<size_t>(std::max(n, 0))) {
        std::iota(order_.begin(), order_.end(), 0);
        if (!order_.empty()) rng_.shuffle(order_);
    }

    std::vector<int> draw(int k) {
        std::vector<int> out;
        out.reserve(static_cast<size_t>(k));
        for (int i = 0; i < k; ++i) {
            if (pos_ == order_.size()) {
                rng_.shuffle(order_);
                pos_ = 0;
            }
            out.push_back(order_[pos_++]);
        }
        return out;
    }

private:
    Rng rng_;
    std::vector<int> order_;
    size_t pos_ = 0;
};

Batch assemble_batch(const LabeledSet& labeled, const std::vector<int>& lab_ids,
                     const UnlabeledSet& unlabeled, const std::vector<int>& unl_ids) {
    const int n = static_cast<int>(lab_ids.size());
    const int m = static_cast<int>(unl_ids.size());
    const Tensor& first = n > 0 ? *labeled[static_cast<size_t>(lab_ids[0])].x
                                : *unlabeled[static_cast<size_t>(unl_ids[0])];
    const int ch = first.dim(0), len = first.dim(1);
    Batch b;
    b.n_labeled = n;
    b.n_unlabeled = m;
    b.x = Tensor({n + m, ch, len});
    const int64_t row = static_cast<int64_t>(ch) * len;
    for (int i = 0; i < n; ++i) {
        const LabeledExample& ex = labeled[static_cast<size_t>(lab_ids[static_cast<size_t>(i)])];
        std::copy(ex.x->data(), ex.x->data() + row, b.x.data() + i * row);
        b.labels.push_back(ex.label);
    }
    for (int i = 0; i < m; ++i) {
        const Tensor* x = unlabeled[static_cast<size_t>(unl_ids[static_cast<size_t>(i)])];
        std::copy(x->data(), x->data() + row, b.x.data() + (n + i) * row);
    }
    return b;
}

struct Snapshot {
    std::vector<Tensor> params;
    std::vector<Tensor> buffers;
};

Snapshot snapshot_model(const Model& model) {
    Snapshot s;
    for (int i = 0; i < model.params().count(); ++i) s.params.push_back(model.params().value_at(i));
    for (int i = 0; i < model.buffers().count(); ++i) {
        s.buffers.push_back(model.buffers().value_at(i));
    }
    return s;
}

void restore_model(Model& model, const Snapshot& s) {
    for (int i = 0; i < model.params().count(); ++i) {
        model.params().value_at(i) = s.params[static_cast<size_t>(i)];
    }
    for (int i = 0; i < model.buffers().count(); ++i) {
        model.buffers().value_at(i) = s.buffers[static_cast<size_t>(i)];
    }
}

/// Eval-mode predictions over a labeled set, batched to bound memory.
std::vector<int> predict_set(Model& model, const LabeledSet& data) {
    std::vector<int> preds;
    preds.reserve(data.size());
    constexpr int kChunk = 512;
    for (size_t start = 0; start < data.size(); start += kChunk) {
        const size_t end = std::min(data.size(), start + kChunk);
        const Tensor& first = *data[start].x;
        Tensor x({static_cast<int>(end - start), first.dim(0), first.dim(1)});
        const int64_t row = first.size();
        for (size_t i = start; i < end; ++i) {
            std::copy(data[i].x->data(), data[i].x->data() + row,
                      x.data() + static_cast<int64_t>(i - start) * row);
        }
        for (int p : model.predict(x)) preds.push_back(p);
    }
    return preds;
}

std::vector<int> predict_unlabeled(Model& model, const UnlabeledSet& data) {
    std::vector<int> preds;
    preds.reserve(data.size());
    constexpr int kChunk = 512;
    for (size_t start = 0; start < data.size(); start += kChunk) {
        const size_t end = std::min(data.size(), start + kChunk);
        const Tensor& first = *data[start];
        Tensor x({static_cast<int>(end - start), first.dim(0), first.dim(1)});
        const int64_t row = first.size();
        for (size_t i = start; i < end; ++i) {
            std::copy(data[i]->data(), data[i]->data() + row,
                      x.data() + static_cast<int64_t>(i - start) * row);
        }
        for (int p : model.predict(x)) preds.push_back(p);
    }
    return preds;
}

}  // namespace

double evaluate_mean_f1(Model& model, const LabeledSet& data) {
    if (data.empty()) throw std::invalid_argument("evaluate_mean_f1: empty set");
    const std::vector<int> preds = predict_set(model, data);
    std::vector<int> truths;
    truths.reserve(data.size());
    for (const LabeledExample& ex : data) truths.push_back(ex.label);
    return mean_f1(confusion(preds, truths, model.spec().n_classes)).mean_f1;
}

double evaluate_accuracy(Model& model, const LabeledSet& data) {
    if (data.empty()) throw std::invalid_argument("evaluate_accuracy: empty set");
    const std::vector<int> preds = predict_set(model, data);
    int correct = 0;
    for (size_t i = 0; i < data.size(); ++i) {
        if (preds[i] == data[i].label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

TrainResult train(const NetworkSpec& netspec, const TrainConfig& cfg, const LabeledSet& labeled,
                  const UnlabeledSet& unlabeled, const LabeledSet& validation,
                  const Model* init_from) {
    if (labeled.empty()) throw std::invalid_argument("train: empty labeled set");
    std::vector<char> seen(static_cast<size_t>(netspec.n_classes), 0);
    for (const LabeledExample& ex : labeled) {
        if (ex.label < 0 || ex.label >= netspec.n_classes) {
            throw std::invalid_argument("train: label " + std::to_string(ex.label) +
                                        " out of range");
        }
        seen[static_cast<size_t>(ex.label)] = 1;
    }
    for (int c = 0; c < netspec.n_classes; ++c) {
        if (!seen[static_cast<size_t>(c)]) {
            throw std::invalid_argument("train: labeled set is missing class " +
                                        std::to_string(c));
        }
    }
    if (cfg.batch_labeled < 1) throw std::invalid_argument("train: batch_labeled must be >= 1");

    TrainResult res{Model(netspec, cfg.model_kind)};
    Model& model = res.model;
    model.init_params(cfg.seed);
    if (init_from != nullptr) transfer_encoder_params(*init_from, model);

    AdamState opt(model.params());
    Rng root(cfg.seed);
    CyclingSampler lab_sampler(static_cast<int>(labeled.size()), root.fork("batches.labeled"));
    CyclingSampler unl_sampler(static_cast<int>(unlabeled.size()), root.fork("batches.unlabeled"));
    Rng noise_rng = root.fork("noise");

    const bool semi = cfg.model_kind != ModelKind::Supervised;
    const int steps_per_epoch =
        (static_cast<int>(labeled.size()) + cfg.batch_labeled - 1) / cfg.batch_labeled;
    const int unl_per_batch =
        std::min(cfg.batch_unlabeled, static_cast<int>(unlabeled.size()));

    Snapshot best;
    bool have_best = false;
    int epochs_without_improvement = 0;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        // Pseudo-label schedule (supervised kind only).
        double alpha = 0.0;
        std::vector<int> pseudo_all;
        if (!semi && cfg.pseudo_alpha_max > 0.0 && !unlabeled.empty()) {
            const double ramp = std::max(1, cfg.pseudo_ramp_epochs);
            alpha = cfg.pseudo_alpha_max * std::min(1.0, static_cast<double>(epoch) / ramp);
            if (alpha > 0.0) pseudo_all = predict_unlabeled(model, unlabeled);
        }
        const bool draw_unlabeled = (semi || alpha > 0.0) && unl_per_batch > 0;

        EpochStats stats;
        stats.epoch = epoch;
        for (int step = 0; step < steps_per_epoch; ++step) {
            const std::vector<int> lab_ids = lab_sampler.draw(cfg.batch_labeled);
            const std::vector<int> unl_ids =
                draw_unlabeled ? unl_sampler.draw(unl_per_batch) : std::vector<int>{};
            Batch batch = assemble_batch(labeled, lab_ids, unlabeled, unl_ids);

            LossOptions opt_loss;
            opt_loss.sigma = semi ? cfg.sigma : 0.0;
            opt_loss.noise_seed = noise_rng.next_u64();
            opt_loss.lambdas = cfg.lambdas;
            opt_loss.recon_on_labeled = cfg.recon_on_labeled;
            opt_loss.update_running_stats = true;
            if (alpha > 0.0) {
                opt_loss.pseudo_weight = alpha;
                for (int id : unl_ids) {
                    opt_loss.pseudo_labels.push_back(pseudo_all[static_cast<size_t>(id)]);
                }
            }
            const CostBreakdown cb = model.compute(batch, opt_loss, true);
            adam_step(model.params(), opt, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps_opt);

            stats.total += cb.total;
            stats.c_s += cb.c_s;
            for (size_t l = 0; l < cb.c_r.size(); ++l) {
                stats.c_r_weighted += cb.lambdas[l] * cb.c_r[l];
            }
        }
        stats.total /= steps_per_epoch;
        stats.c_s /= steps_per_epoch;
        stats.c_r_weighted /= steps_per_epoch;

        stats.train_acc = evaluate_accuracy(model, labeled);
        if (!validation.empty()) {
            stats.val_f1 = evaluate_mean_f1(model, validation);
            if (stats.val_f1 > res.best_val_f1 + 1e-12) {
                res.best_val_f1 = stats.val_f1;
                res.best_epoch = epoch;
                best = snapshot_model(model);
                have_best = true;
                epochs_without_improvement = 0;
            } else {
                ++epochs_without_improvement;
            }
        }
        res.history.push_back(stats);

        if (cfg.target_train_accuracy > 0.0 && stats.train_acc >= cfg.target_train_accuracy) break;
        if (!validation.empty() && epochs_without_improvement >= cfg.patience) break;
    }

    if (have_best) restore_model(model, best);
    return res;
}

// ---------------------------------------------------------------------------
// pretrain_unsupervised
// ---------------------------------------------------------------------------

PretrainResult pretrain_unsupervised(const NetworkSpec& netspec, const TrainConfig& cfg,
                                     const UnlabeledSet& unlabeled) {
    if (unlabeled.empty()) throw std::invalid_argument("pretrain_unsupervised: empty set");
    PretrainResult res{Model(netspec, ModelKind::EncoderDecoder)};
    Model& model = res.model;
    model.init_params(cfg.seed);
    AdamState opt(model.params());
    Rng root(cfg.seed);
    CyclingSampler sampler(static_cast<int>(unlabeled.size()), root.fork("batches.unlabeled"));
    Rng noise_rng = root.fork("noise");

    const int per_batch = std::min(std::max(2, cfg.batch_unlabeled),
                                   static_cast<int>(unlabeled.size()));
    const int steps_per_epoch =
        (static_cast<int>(unlabeled.size()) + per_batch - 1) / per_batch;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        double recon = 0.0;
        for (int step = 0; step < steps_per_epoch; ++step) {
            const std::vector<int> ids = sampler.draw(per_batch);
            Batch batch = assemble_batch({}, {}, unlabeled, ids);
            LossOptions opt_loss;
            opt_loss.sigma = cfg.sigma;
            opt_loss.noise_seed = noise_rng.next_u64();
            opt_loss.lambdas = {1.0};  // pure reconstruction objective
            opt_loss.update_running_stats = true;
            const CostBreakdown cb = model.compute(batch, opt_loss, true);
            adam_step(model.params(), opt, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps_opt);
            recon += cb.c_r[0];
        }
        res.recon_history.push_back(recon / steps_per_epoch);
    }
    return res;
}

void transfer_encoder_params(const Model& from, Model& to) {
    for (const std::string& name : to.params().names()) {
        if (name.rfind("enc", 0) == 0 && from.params().has(name)) {
            const Tensor& src = from.params().value(name);
            Tensor& dst = to.params().value(name);
            if (!src.same_shape(dst)) {
                throw std::invalid_argument("transfer_encoder_params: '" + name + "' is " +
                                            shape_str(src) + " vs " + shape_str(dst));
            }
            dst = src;
        }
    }
    for (const std::string& name : to.buffers().names()) {
        if (from.buffers().has(name)) to.buffers().value(name) = from.buffers().value(name);
    }
}

// ---------------------------------------------------------------------------
// lambda_sweep
// ---------------------------------------------------------------------------

std::vector<SweepRow> lambda_sweep(const NetworkSpec& netspec, const TrainConfig& base,
                                   const LabeledSet& labeled, const UnlabeledSet& unlabeled,
                                   const LabeledSet& validation, const LabeledSet& test) {
    const int L = netspec.depth();
    std::vector<SweepRow> rows;
    for (int l = 0; l <= L; ++l) {
        TrainConfig cfg = base;
        cfg.model_kind = ModelKind::Ladder;
        cfg.lambdas.assign(static_cast<size_t>(L) + 1, 0.1);
        cfg.lambdas[static_cast<size_t>(l)] = 1.0;
        TrainResult run = train(netspec, cfg, labeled, unlabeled, validation);
        rows.push_back({l, evaluate_mean_f1(run.model, test)});
    }
    return rows;
}

}  // namespace sslhar
