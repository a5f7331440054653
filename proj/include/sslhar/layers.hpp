#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sslhar/tensor.hpp"

namespace sslhar {

// ---------------------------------------------------------------------------
// 1-D valid convolution (cross-correlation) over the temporal axis.
// ---------------------------------------------------------------------------

struct Conv1dParams {
    Tensor kernels;  // out_ch x in_ch x k
    Tensor bias;     // out_ch
    int stride = 1;
};

int conv1d_out_len(int in_len, int k, int stride);

/// x: batch x in_ch x L  ->  batch x out_ch x L' with L' = (L - k) / stride + 1.
Tensor conv1d(const Tensor& x, const Conv1dParams& p);

struct Conv1dGrads {
    Tensor dx;
    Tensor dkernels;
    Tensor dbias;
};
Conv1dGrads conv1d_backward(const Tensor& x, const Conv1dParams& p, const Tensor& dy);

// ---------------------------------------------------------------------------
// Max pooling with memorized argmax positions, and the matching unpooling.
// ---------------------------------------------------------------------------

/// Argmax indices are absolute positions in the pooled input's temporal axis,
/// one per pooled output element; ties break to the lowest index.
struct PoolRecord {
    int size = 0;
    int stride = 0;
    int in_len = 0;                  // temporal length the pool consumed
    std::vector<int> out_shape;      // batch x ch x out_len
    std::vector<int32_t> argmax;     // flat, matching out_shape
};

std::pair<Tensor, PoolRecord> maxpool1d(const Tensor& x, int size, int stride);

/// Routes upstream gradient only to the argmax positions.
Tensor maxpool1d_backward(const PoolRecord& rec, const Tensor& dy);

/// Zeros everywhere except the memorized indices, which receive v's values.
Tensor unpool1d(const Tensor& v, const PoolRecord& rec, int out_len);

/// Gathers the upstream gradient back from the memorized indices.
Tensor unpool1d_backward(const PoolRecord& rec, const Tensor& dout);

// ---------------------------------------------------------------------------
// Batch normalization. Features are channels for batch x ch x len inputs and
// columns for batch x dim inputs; statistics pool over everything else.
// ---------------------------------------------------------------------------

struct BatchNormParams {
    Tensor gamma;
    Tensor beta;
    Tensor running_mean;
    Tensor running_var;
    double epsilon = 1e-5;
    double momentum = 0.1;
};

BatchNormParams make_batchnorm(int features);

struct BatchNormCache {
    Tensor mean;     // per feature
    Tensor inv_std;  // per feature, 1/sqrt(var + eps)
    Tensor xhat;     // normalized input, same shape as x
};

enum class BnMode { Train, Eval };

/// Train mode normalizes with batch statistics (batch >= 2 required) and, when
/// update_running is set, folds them into the running estimates. Eval mode
/// uses the running estimates and accepts any batch size.
Tensor batchnorm(const Tensor& x, BatchNormParams& p, BnMode mode, BatchNormCache* cache,
                 bool update_running);

struct BatchNormGrads {
    Tensor dx;
    Tensor dgamma;
    Tensor dbeta;
};
BatchNormGrads batchnorm_backward(const BatchNormParams& p, const BatchNormCache& cache,
                                  const Tensor& dy);

// ---------------------------------------------------------------------------
// Pointwise and dense layers.
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x);
/// dx = dy where x > 0, else 0.
Tensor relu_backward(const Tensor& x, const Tensor& dy);

/// Row-wise softmax over the last axis of a batch x classes tensor, computed
/// with max subtraction.
Tensor softmax(const Tensor& logits);
/// dz given y = softmax(z) and upstream dy: dz = y * (dy - sum(dy * y)).
Tensor softmax_backward(const Tensor& y, const Tensor& dy);

struct DenseParams {
    Tensor weight;  // in_dim x out_dim
    Tensor bias;    // out_dim
};

/// x: batch x in_dim -> batch x out_dim, y = x W + b.
Tensor dense(const Tensor& x, const DenseParams& p);

struct DenseGrads {
    Tensor dx;
    Tensor dweight;
    Tensor dbias;
};
DenseGrads dense_backward(const Tensor& x, const DenseParams& p, const Tensor& dy);

}  // namespace sslhar
