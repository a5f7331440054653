#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sslhar/model.hpp"
#include "sslhar/netspec.hpp"
#include "sslhar/rng.hpp"

namespace sslhar {

// ---------------------------------------------------------------------------
// Adaptive-moment optimizer
// ---------------------------------------------------------------------------

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    int64_t t = 0;

    explicit AdamState(const ParamSet& params);
};

/// m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2; theta <- theta - lr mhat /
/// (sqrt(vhat) + eps). Throws on a non-finite gradient, naming the parameter.
void adam_step(ParamSet& params, AdamState& state, double lr, double beta1, double beta2,
               double eps);

// ---------------------------------------------------------------------------
// Training data views. The unlabeled set carries no labels by construction,
// so training objectives cannot read them.
// ---------------------------------------------------------------------------

struct LabeledExample {
    const Tensor* x = nullptr;
    int label = 0;
};
using LabeledSet = std::vector<LabeledExample>;
using UnlabeledSet = std::vector<const Tensor*>;

// ---------------------------------------------------------------------------
// Train loop
// ---------------------------------------------------------------------------

struct TrainConfig {
    ModelKind model_kind = ModelKind::Supervised;
    double sigma = 0.3;
    std::vector<double> lambdas;  // empty = 0.1 everywhere
    int batch_labeled = 32;
    int batch_unlabeled = 96;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_opt = 1e-8;
    int max_epochs = 100;
    int patience = 10;
    uint64_t seed = 1;
    bool recon_on_labeled = false;

    /// > 0: stop once eval-mode accuracy on the labeled set reaches this.
    double target_train_accuracy = 0.0;

    /// Pseudo-label fine-tuning (supervised kind only): cross entropy on
    /// unlabeled rows against the model's own predictions, weighted by
    /// alpha(epoch) = alpha_max * min(1, epoch / ramp_epochs). Predictions are
    /// recomputed from the current model every epoch.
    double pseudo_alpha_max = 0.0;
    int pseudo_ramp_epochs = 30;
};

struct EpochStats {
    int epoch = 0;
    double total = 0.0;
    double c_s = 0.0;
    double c_r_weighted = 0.0;  // sum_l lambda_l c_r[l], averaged over steps
    double val_f1 = -1.0;       // percent; -1 when no validation set
    double train_acc = -1.0;    // accuracy on the labeled set, eval mode
};

struct TrainResult {
    Model model;
    std::vector<EpochStats> history;
    int best_epoch = -1;
    double best_val_f1 = -1.0;

    explicit TrainResult(Model m) : model(std::move(m)) {}
};

/// Each step draws batch_labeled labeled examples (cycling with reshuffling
/// when exhausted) and batch_unlabeled unlabeled ones, computes the family's
/// combined cost, backprops, and applies one optimizer step. Early stopping
/// watches validation mean F1 with the configured patience and restores the
/// best parameters. Fully deterministic given (config, seed, data).
///
/// `init_from` optionally seeds the encoder parameters (pretrained CNN).
TrainResult train(const NetworkSpec& netspec, const TrainConfig& cfg, const LabeledSet& labeled,
                  const UnlabeledSet& unlabeled, const LabeledSet& validation,
                  const Model* init_from = nullptr);

// ---------------------------------------------------------------------------
// Unsupervised pretraining (the "pretrained CNN" initialization)
// ---------------------------------------------------------------------------

struct PretrainResult {
    Model model;  // encoder-decoder trained on reconstruction alone
    std::vector<double> recon_history;

    explicit PretrainResult(Model m) : model(std::move(m)) {}
};

PretrainResult pretrain_unsupervised(const NetworkSpec& netspec, const TrainConfig& cfg,
                                     const UnlabeledSet& unlabeled);

/// Copies the shared encoder parameters (and batchnorm running stats) from one
/// model into another.
void transfer_encoder_params(const Model& from, Model& to);

// ---------------------------------------------------------------------------
// Lambda emphasis sweep
// ---------------------------------------------------------------------------

struct SweepRow {
    int emphasized_layer = 0;
    double test_f1 = 0.0;
};

/// Runs one ladder training per layer l with lambda_l = 1 and every other
/// weight 0.1, all settings sharing the base config's seed; reports test mean
/// F1 per emphasized layer.
std::vector<SweepRow> lambda_sweep(const NetworkSpec& netspec, const TrainConfig& base,
                                   const LabeledSet& labeled, const UnlabeledSet& unlabeled,
                                   const LabeledSet& validation, const LabeledSet& test);

/// Eval-mode mean F1 (percent) of the model's predictions on a labeled set.
double evaluate_mean_f1(Model& model, const LabeledSet& data);

/// Eval-mode accuracy in [0, 1].
double evaluate_accuracy(Model& model, const LabeledSet& data);

}  // namespace sslhar
