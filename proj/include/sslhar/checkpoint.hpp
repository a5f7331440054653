#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sslhar/data.hpp"
#include "sslhar/model.hpp"

namespace sslhar {

/// On-disk model state. Binary layout: magic "SSLHAR01", little-endian uint32
/// manifest byte length, UTF-8 JSON manifest (spec string, classes, norm
/// stats, rng state, named array table with dtype/shape/offset), then raw
/// little-endian float32 payloads in manifest order.
struct Checkpoint {
    int version = 1;
    std::string model_kind;  // "cnn", "encdec", "ladder", "logreg"
    std::string spec;        // network spec string; empty for linear models
    int in_channels = 0;
    int in_len = 0;
    int n_classes = 0;
    double window_seconds = 0.0;
    double overlap = 0.0;
    std::vector<std::string> classes;
    NormStats norm;
    uint64_t rng_seed = 0;
    uint64_t rng_state = 0;
    std::vector<std::pair<std::string, Tensor>> arrays;  // saved order = payload order
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Packs a network model's parameters and buffers.
Checkpoint checkpoint_from_model(const Model& model, const std::vector<std::string>& classes,
                                 const NormStats& norm, double window_seconds, double overlap);

/// Rebuilds the model from a checkpoint saved by checkpoint_from_model;
/// array shapes are validated against the reconstructed layout.
Model model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace sslhar
