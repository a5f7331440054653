#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sslhar/rng.hpp"
#include "sslhar/tensor.hpp"
#include "sslhar/training.hpp"

namespace sslhar {

/// Statistical feature vector of a channels x T window, in fixed order: all
/// channel means, all stds (population), all maxes, all mins, then Pearson
/// correlations for channel pairs (i < j) in lexicographic order. Length is
/// 4 C + C (C - 1) / 2. Zero-variance channels get correlation 0.
std::vector<double> extract_features(const Tensor& window);

int feature_length(int channels);

// ---------------------------------------------------------------------------
// Multinomial logistic regression on statistical features
// ---------------------------------------------------------------------------

struct LogRegConfig {
    double l2 = 1e-4;           // on weights only, never the bias
    double learning_rate = 0.05;
    int epochs = 300;
    uint64_t seed = 1;
};

struct LogRegModel {
    Tensor weight;  // D x C
    Tensor bias;    // C
    std::vector<double> feat_mean;
    std::vector<double> feat_scale;
    int n_classes = 0;
};

/// Full-batch adaptive-moment fit of cross entropy + l2. Throws when the
/// training set covers fewer than 2 classes.
LogRegModel train_logreg(const std::vector<std::vector<double>>& features,
                         const std::vector<int>& labels, int n_classes, const LogRegConfig& cfg);

/// Row-wise class probabilities.
Tensor logreg_predict_proba(const LogRegModel& model,
                            const std::vector<std::vector<double>>& features);
std::vector<int> logreg_predict(const LogRegModel& model,
                                const std::vector<std::vector<double>>& features);

// ---------------------------------------------------------------------------
// Self-training
// ---------------------------------------------------------------------------

struct SelfTrainResult {
    LogRegModel model;
    struct Promotion {
        int iteration;
        int example;     // index into the original unlabeled set
        int label;       // predicted label it was promoted with
        double confidence;
    };
    std::vector<Promotion> audit_log;
    int iterations = 0;
};

/// Iteratively fits on the current labeled set, predicts the remaining
/// unlabeled examples, and promotes every prediction with max probability >=
/// threshold into the labeled set, until no additions or max_iters.
SelfTrainResult self_train(const std::vector<std::vector<double>>& labeled_features,
                           const std::vector<int>& labels,
                           const std::vector<std::vector<double>>& unlabeled_features,
                           int n_classes, double threshold, int max_iters,
                           const LogRegConfig& cfg);

// ---------------------------------------------------------------------------
// Pseudo-label fine-tuning of the supervised CNN
// ---------------------------------------------------------------------------

/// Supervised training whose per-epoch loss adds a ramped cross-entropy term
/// on the model's own predictions for the unlabeled set (alpha rising linearly
/// from 0 to alpha_max over ramp_epochs). alpha_max = 0 reproduces the plain
/// supervised run exactly.
TrainResult pseudo_label(const NetworkSpec& netspec, const TrainConfig& base,
                         const LabeledSet& labeled, const UnlabeledSet& unlabeled,
                         const LabeledSet& validation, double alpha_max, int ramp_epochs);

}  // namespace sslhar
