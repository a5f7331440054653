#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "sslhar/layers.hpp"
#include "sslhar/netspec.hpp"
#include "sslhar/objectives.hpp"
#include "sslhar/rng.hpp"
#include "sslhar/tensor.hpp"

namespace sslhar {

enum class ModelKind { Supervised, EncoderDecoder, Ladder };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

/// Ordered registry of named tensors with parallel gradient slots. Iteration
/// order is registration order, which keeps optimizer sweeps and checkpoints
/// deterministic.
class ParamSet {
public:
    int add(const std::string& name, Tensor init);
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    int count() const { return static_cast<int>(values_.size()); }
    const std::vector<std::string>& names() const { return names_; }

    Tensor& value(const std::string& name);
    const Tensor& value(const std::string& name) const;
    Tensor& grad(const std::string& name);
    const Tensor& grad(const std::string& name) const;
    Tensor& value_at(int i) { return values_[static_cast<size_t>(i)]; }
    const Tensor& value_at(int i) const { return values_[static_cast<size_t>(i)]; }
    Tensor& grad_at(int i) { return grads_[static_cast<size_t>(i)]; }
    const Tensor& grad_at(int i) const { return grads_[static_cast<size_t>(i)]; }

    void zero_grads();

private:
    int index_of(const std::string& name) const;
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
    std::vector<Tensor> grads_;
    std::unordered_map<std::string, int> index_;
};

/// Everything one encoder pass produces, kept for the backward pass.
/// Vectors are indexed by layer (0 = input, 1..L = spec layers); entries that
/// do not apply to a layer kind stay empty.
struct EncoderTrace {
    std::vector<Tensor> z;    // pre-activations (post-batchnorm, plus noise on the noisy path)
    std::vector<Tensor> h;    // activations fed forward; h[l] = relu(z[l]) on hidden conv layers
    std::vector<Tensor> pre;  // affine outputs before batchnorm (conv/dense layers)
    std::vector<BatchNormCache> bn;
    std::vector<PoolRecord> pools;
    bool train_mode = false;

    const Tensor& logits() const { return z.back(); }
};

enum class DecodeMode { EncoderDecoder, Ladder };

/// Per-unit denoising combinator parameters; each entry's length is the
/// layer's feature dimension (channels for feature maps, units for vectors).
struct CombinatorParams {
    std::array<Tensor, 10> a;  // a[0] = a1 ... a[9] = a10
};

struct CombinatorCache {
    Tensor sig_mu, sig_nu;  // sigmoid(a2 u + a3), sigmoid(a7 u + a8)
    Tensor mu, nu;
    Tensor ztil, u;
};

/// zhat = (ztil - mu(u)) * nu(u) + mu(u) with
/// mu(u) = a1 sigmoid(a2 u + a3) + a4 u + a5 and
/// nu(u) = a6 sigmoid(a7 u + a8) + a9 u + a10, all applied per unit.
Tensor combinator_g(const Tensor& ztil, const Tensor& u, const CombinatorParams& p,
                    CombinatorCache* cache = nullptr);

struct CombinatorGrads {
    Tensor dztil, du;
    std::array<Tensor, 10> da;
};
CombinatorGrads combinator_backward(const CombinatorCache& cache, const CombinatorParams& p,
                                    const Tensor& dzhat);

/// Decoder pass products. Ladder mode fills zhat/u/v and the caches (the top
/// level's vertical signal is the noisy encoder's own output); encoder-decoder
/// mode fills the mirror chain and xhat.
struct DecodeTrace {
    DecodeMode mode = DecodeMode::Ladder;
    // Ladder
    std::vector<Tensor> zhat;  // 0..L
    std::vector<Tensor> u;     // 0..L, post-batchnorm vertical signal
    std::vector<Tensor> v;     // 0..L, pre-batchnorm vertical signal
    std::vector<BatchNormCache> ubn;
    std::vector<CombinatorCache> comb;
    // Encoder-decoder
    std::vector<Tensor> stage_pre;  // 0..L, mirror outputs before activation
    std::vector<Tensor> stage_act;  // 0..L, stage_act[L] is the noisy logits
    const Tensor& xhat() const { return stage_pre.front(); }
};

/// One training batch: labeled rows first, then unlabeled rows.
struct Batch {
    Tensor x;  // (n_labeled + n_unlabeled) x C x T
    std::vector<int> labels;  // length n_labeled
    int n_labeled = 0;
    int n_unlabeled = 0;
    int rows() const { return n_labeled + n_unlabeled; }
};

struct LossOptions {
    double sigma = 0.0;
    uint64_t noise_seed = 0;          // noise is a pure function of this seed
    std::vector<double> lambdas;      // L+1 entries for ladder, first entry for encoder-decoder
    bool recon_on_labeled = false;    // fold labeled rows into reconstruction averages
    bool update_running_stats = false;
    // Pseudo-label extension (supervised kind only): cross entropy on the
    // unlabeled rows against `pseudo_labels`, weighted by `pseudo_weight`.
    double pseudo_weight = 0.0;
    std::vector<int> pseudo_labels;
};

/// The three model families over one shared layer pipeline. Owns the
/// trainable parameters ("enc*", "dec*", "comb*") and the batchnorm running
/// statistics (buffers). One model belongs to one training run.
class Model {
public:
    Model(NetworkSpec spec, ModelKind kind);

    const NetworkSpec& spec() const { return spec_; }
    ModelKind kind() const { return kind_; }

    /// He-style init for conv/dense, pass-through combinators; every tensor
    /// draws from its own name-keyed stream, so layouts with extra parameters
    /// (decoder, combinators) leave the shared encoder init untouched.
    void init_params(uint64_t seed);

    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }
    ParamSet& buffers() { return buffers_; }
    const ParamSet& buffers() const { return buffers_; }

    EncoderTrace forward_clean(const Tensor& x, BnMode mode, bool update_running = false);
    /// Shares parameters with forward_clean; adds N(0, sigma^2) to the input
    /// and to every layer's pre-activation. sigma = 0 reproduces the clean
    /// pass exactly and consumes no randomness.
    EncoderTrace forward_noisy(const Tensor& x, double sigma, uint64_t noise_seed, BnMode mode,
                               bool update_running = false);
    DecodeTrace decode(const EncoderTrace& noisy, DecodeMode mode);

    /// Cost of one batch under this model family. When with_grads is set,
    /// fills params().grads (overwriting). Pure in the parameters given fixed
    /// batch and options, which is what the finite-difference checks perturb.
    CostBreakdown compute(const Batch& batch, const LossOptions& opt, bool with_grads);

    /// Clean path, eval-mode batchnorm; accepts any batch size.
    Tensor predict_logits(const Tensor& x);
    std::vector<int> predict(const Tensor& x);
    /// Flattened input of the final dense layer on the clean path (the
    /// feature vector exported for visualization).
    Tensor penultimate_features(const Tensor& x);

private:
    struct BnView;
    BnView encoder_bn(int layer);
    CombinatorParams combinator(int layer) const;

    Tensor mirror_forward(int layer, const Tensor& in, const EncoderTrace& noisy) const;
    Tensor mirror_backward(int layer, const Tensor& in, const Tensor& dout,
                           const EncoderTrace& noisy);

    /// Backprop through one encoder trace given per-layer gradients on z;
    /// accumulates parameter gradients.
    void encoder_backward(const EncoderTrace& tr, std::vector<Tensor>& dz);
    /// Backprop through a decode trace given per-layer gradients on zhat
    /// (ladder) or on xhat (encoder-decoder); accumulates parameter gradients
    /// and adds the lateral contributions into dz_noisy.
    void decode_backward(const DecodeTrace& dt, const EncoderTrace& noisy,
                         const std::vector<Tensor>& dzhat, std::vector<Tensor>& dz_noisy);

    NetworkSpec spec_;
    ModelKind kind_;
    ParamSet params_;
    ParamSet buffers_;
};

/// Shapes-only view of one training step's ladder state, consumed by
/// combined_cost.
struct LadderState {
    const EncoderTrace* clean = nullptr;   // required for ladder
    const EncoderTrace* noisy = nullptr;   // required for ladder / encoder-decoder
    const DecodeTrace* decoded = nullptr;  // required for ladder / encoder-decoder
    const Tensor* input = nullptr;         // clean input, reconstruction target for C_r^(0)
    int n_labeled = 0;
    int n_unlabeled = 0;
};

/// Assembles the per-family cost: supervised -> C_s only; encoder-decoder ->
/// C_s + lambda_0 C_r^(0); ladder -> C_s + sum_l lambda_l C_r^(l). The
/// supervised term averages over labeled rows, reconstruction terms over
/// unlabeled rows (plus labeled rows when recon_on_labeled).
CostBreakdown combined_cost(ModelKind kind, const LadderState& state,
                            const std::vector<int>& targets, const std::vector<double>& lambdas,
                            bool recon_on_labeled = false);

/// Leading-dimension slice [from, to).
Tensor take_rows(const Tensor& t, int from, int to);

}  // namespace sslhar
