#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sslhar {

/// Raised for malformed run configurations; the CLI maps it to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// One experiment, fully described. Serialized back out alongside every run's
/// outputs so the run can be reproduced from the copy alone.
struct RunConfig {
    std::string data;        // corpus CSV path
    std::string out = ".";   // output directory
    std::string model_kind = "ladder";  // cnn|encdec|ladder|logreg|selftrain|pseudolabel|pretrain_cnn
    std::string spec = "convv:8:5:1:1-maxpool:2:2-convv:16:3:1:1-maxpool:2:2-fc";
    int n_labeled = 50;
    double window_seconds = 2.0;
    double overlap = 0.5;

    double sigma = 0.3;
    std::vector<double> lambdas;  // empty = 0.1 everywhere
    int batch_labeled = 32;
    int batch_unlabeled = 96;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_opt = 1e-8;
    int max_epochs = 60;
    int patience = 10;
    uint64_t seed = 1;
    bool recon_on_labeled = false;
    bool transductive = false;
    double target_train_accuracy = 0.0;

    std::string test_subject;        // empty: no test evaluation (train command)
    std::string validation_subject;  // empty: picked automatically

    // logreg / self-training
    double l2 = 1e-4;
    int logreg_epochs = 300;
    double threshold = 0.95;
    int max_iters = 20;

    // pseudo-label
    double alpha_max = 1.0;
    int ramp_epochs = 30;

    // pretrained CNN
    int pretrain_epochs = 20;
};

/// Strict parse: unknown keys are rejected by name.
RunConfig parse_run_config_file(const std::string& path);
RunConfig parse_run_config_text(const std::string& text);
std::string run_config_to_json(const RunConfig& cfg);

void validate_run_config(const RunConfig& cfg);

}  // namespace sslhar
