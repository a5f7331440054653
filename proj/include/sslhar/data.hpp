#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sslhar/rng.hpp"
#include "sslhar/tensor.hpp"

namespace sslhar {

/// Label index meaning "no label": unlabeled pools carry this after stripping.
constexpr int kUnlabeled = -1;

/// One subject's raw multichannel recording with per-sample labels.
struct SensorStream {
    std::string subject_id;
    double sample_rate_hz = 0.0;
    std::vector<std::string> channel_names;
    std::vector<std::vector<double>> channels;  // equal lengths
    std::vector<std::string> labels;            // same length as every channel
    int length() const { return channels.empty() ? 0 : static_cast<int>(channels[0].size()); }
};

/// Segmented example: one window tensor plus provenance.
struct Window {
    Tensor x;  // channels x window_len
    std::string subject;
    int label = kUnlabeled;  // index into WindowedDataset::classes
};

struct WindowedDataset {
    std::vector<Window> examples;
    int window_len = 0;
    int channels = 0;
    std::vector<std::string> classes;  // ordered label list

    int size() const { return static_cast<int>(examples.size()); }
};

/// CSV schema: header `subject,label,t,ch0,...,chK`; rows sorted by
/// (subject, t); t in seconds; '.' decimal separator; UTF-8.
std::vector<SensorStream> load_csv(const std::string& path);
void write_csv(const std::string& path, const std::vector<SensorStream>& streams);

/// Sliding windows: T = round(window_seconds * rate), hop = round(T * (1 -
/// overlap)), offsets 0, hop, 2 hop, ... while offset + T <= length. Window
/// label is the majority sample label; ties discard the window. Streams
/// shorter than T yield no windows.
WindowedDataset segment(const SensorStream& stream, double window_seconds,
                        double overlap_fraction, const std::vector<std::string>& classes);

/// Segments every stream against the sorted union of their labels.
WindowedDataset segment_all(const std::vector<SensorStream>& streams, double window_seconds,
                            double overlap_fraction);

/// Integer-factor decimation with pre-averaging, for matching the temporal
/// resolution of high-rate recordings.
SensorStream downsample(const SensorStream& stream, int factor);

struct NormStats {
    std::vector<double> mean;
    std::vector<double> scale;                 // 1 for zero-variance channels
    std::vector<int> zero_variance_channels;   // warning record
};

NormStats compute_norm_stats(const WindowedDataset& ds, const std::vector<int>& ids);
void apply_norm(WindowedDataset& ds, const NormStats& stats);

/// Spec-level convenience: stats from `train`, applied in place to train and
/// every dataset in `others`.
NormStats normalize(WindowedDataset& train, const std::vector<WindowedDataset*>& others);

/// Picks a balanced labeled subset of `pool` (per-class counts differing by at
/// most one, remainder going to the first classes in class order); everything
/// else in the pool becomes the unlabeled set. Throws naming any class with
/// too few examples.
struct BalancedSample {
    std::vector<int> labeled_ids;
    std::vector<int> unlabeled_ids;
};
BalancedSample balanced_sample(const WindowedDataset& ds, const std::vector<int>& pool,
                               int n_labeled, Rng& rng);

/// Leave-one-subject-out folds. assign_fold_samples then fills each fold's
/// validation subject (the next training subject in sorted order), balanced
/// labeled IDs, and unlabeled pool (training remainder, or the test subject's
/// windows in transductive mode).
struct SplitPlan {
    struct Fold {
        std::string test_subject;
        std::vector<std::string> train_subjects;
        std::vector<int> test_ids;
        std::string validation_subject;
        std::vector<int> validation_ids;
        std::vector<int> labeled_ids;
        std::vector<int> unlabeled_ids;
    };
    std::vector<Fold> folds;
};

SplitPlan loso_split(const WindowedDataset& ds);
void assign_fold_samples(SplitPlan& plan, const WindowedDataset& ds, int n_labeled, Rng& rng,
                         bool transductive = false);

/// Synthetic desk-scale corpus: 3-channel quasi-periodic waveforms whose
/// frequency, amplitude, and harmonic mix are keyed to the class, with a
/// persistent random frequency/amplitude/gain offset per subject and additive
/// noise. Each subject emits exactly seconds_per_class seconds per class.
std::vector<SensorStream> synth_generate(int n_subjects, int n_classes, double rate_hz,
                                         double seconds_per_class, Rng& rng);

}  // namespace sslhar
