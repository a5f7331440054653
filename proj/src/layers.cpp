#include "sslhar/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sslhar {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Views a tensor as batch x features x spatial: 3-D stays as is, 2-D gets a
// trailing spatial extent of 1.
struct FeatView {
    int batch;
    int features;
    int spatial;
};

FeatView feat_view(const Tensor& x, const char* who) {
    if (x.ndim() == 3) return {x.dim(0), x.dim(1), x.dim(2)};
    if (x.ndim() == 2) return {x.dim(0), x.dim(1), 1};
    throw std::invalid_argument(std::string(who) + ": expected 2-D or 3-D input, got " +
                                shape_str(x));
}

}  // namespace

// ---------------------------------------------------------------------------
// conv1d
// ---------------------------------------------------------------------------

int conv1d_out_len(int in_len, int k, int stride) {
    require(k >= 1 && stride >= 1, "conv1d: kernel and stride must be >= 1");
    require(in_len >= k, "conv1d: input length " + std::to_string(in_len) +
                             " shorter than kernel " + std::to_string(k));
    return (in_len - k) / stride + 1;
}

Tensor conv1d(const Tensor& x, const Conv1dParams& p) {
    require(x.ndim() == 3, "conv1d: input must be batch x ch x len, got " + shape_str(x));
    require(p.kernels.ndim() == 3, "conv1d: kernels must be out_ch x in_ch x k");
    const int batch = x.dim(0), in_ch = x.dim(1), in_len = x.dim(2);
    const int out_ch = p.kernels.dim(0), k = p.kernels.dim(2);
    require(p.kernels.dim(1) == in_ch,
            "conv1d: kernel expects " + std::to_string(p.kernels.dim(1)) + " channels, input has " +
                std::to_string(in_ch));
    const int out_len = conv1d_out_len(in_len, k, p.stride);

    Tensor y({batch, out_ch, out_len});
    const double* px = x.data();
    const double* pk = p.kernels.data();
    double* py = y.data();
    for (int n = 0; n < batch; ++n) {
        const double* xb = px + static_cast<int64_t>(n) * in_ch * in_len;
        double* yb = py + static_cast<int64_t>(n) * out_ch * out_len;
        for (int o = 0; o < out_ch; ++o) {
            double* yrow = yb + static_cast<int64_t>(o) * out_len;
            const double bias = p.bias[o];
            for (int t = 0; t < out_len; ++t) yrow[t] = bias;
            for (int c = 0; c < in_ch; ++c) {
                const double* xrow = xb + static_cast<int64_t>(c) * in_len;
                const double* krow = pk + (static_cast<int64_t>(o) * in_ch + c) * k;
                for (int t = 0; t < out_len; ++t) {
                    const double* xwin = xrow + static_cast<int64_t>(t) * p.stride;
                    double acc = 0.0;
                    for (int j = 0; j < k; ++j) acc += krow[j] * xwin[j];
                    yrow[t] += acc;
                }
            }
        }
    }
    return y;
}

Conv1dGrads conv1d_backward(const Tensor& x, const Conv1dParams& p, const Tensor& dy) {
    const int batch = x.dim(0), in_ch = x.dim(1), in_len = x.dim(2);
    const int out_ch = p.kernels.dim(0), k = p.kernels.dim(2);
    const int out_len = conv1d_out_len(in_len, k, p.stride);
    require(dy.ndim() == 3 && dy.dim(0) == batch && dy.dim(1) == out_ch && dy.dim(2) == out_len,
            "conv1d_backward: upstream shape " + shape_str(dy) + " does not match output");

    Conv1dGrads g;
    g.dx = Tensor({batch, in_ch, in_len});
    g.dkernels = Tensor(p.kernels.shape());
    g.dbias = Tensor(p.bias.shape());

    const double* px = x.data();
    const double* pk = p.kernels.data();
    const double* pdy = dy.data();
    for (int n = 0; n < batch; ++n) {
        const double* xb = px + static_cast<int64_t>(n) * in_ch * in_len;
        const double* dyb = pdy + static_cast<int64_t>(n) * out_ch * out_len;
        double* dxb = g.dx.data() + static_cast<int64_t>(n) * in_ch * in_len;
        for (int o = 0; o < out_ch; ++o) {
            const double* dyrow = dyb + static_cast<int64_t>(o) * out_len;
            for (int t = 0; t < out_len; ++t) g.dbias[o] += dyrow[t];
            for (int c = 0; c < in_ch; ++c) {
                const double* xrow = xb + static_cast<int64_t>(c) * in_len;
                const double* krow = pk + (static_cast<int64_t>(o) * in_ch + c) * k;
                double* dkrow = g.dkernels.data() + (static_cast<int64_t>(o) * in_ch + c) * k;
                double* dxrow = dxb + static_cast<int64_t>(c) * in_len;
                for (int t = 0; t < out_len; ++t) {
                    const double dv = dyrow[t];
                    if (dv == 0.0) continue;
                    const int base = t * p.stride;
                    for (int j = 0; j < k; ++j) {
                        dkrow[j] += dv * xrow[base + j];
                        dxrow[base + j] += dv * krow[j];
                    }
                }
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// maxpool1d / unpool1d
// ---------------------------------------------------------------------------

std::pair<Tensor, PoolRecord> maxpool1d(const Tensor& x, int size, int stride) {
    require(size >= 1 && stride >= 1, "maxpool1d: size and stride must be >= 1");
    require(x.ndim() == 3, "maxpool1d: input must be batch x ch x len, got " + shape_str(x));
    const int batch = x.dim(0), ch = x.dim(1), in_len = x.dim(2);
    require(in_len >= size, "maxpool1d: input length " + std::to_string(in_len) +
                                " shorter than pool size " + std::to_string(size));
    const int out_len = (in_len - size) / stride + 1;

    Tensor y({batch, ch, out_len});
    PoolRecord rec;
    rec.size = size;
    rec.stride = stride;
    rec.in_len = in_len;
    rec.out_shape = {batch, ch, out_len};
    rec.argmax.assign(static_cast<size_t>(y.size()), 0);

    const double* px = x.data();
    double* py = y.data();
    int64_t flat = 0;
    for (int n = 0; n < batch; ++n) {
        for (int c = 0; c < ch; ++c) {
            const double* row = px + (static_cast<int64_t>(n) * ch + c) * in_len;
            for (int t = 0; t < out_len; ++t, ++flat) {
                const int start = t * stride;
                int best = start;
                double bestv = row[start];
                for (int j = 1; j < size; ++j) {
                    if (row[start + j] > bestv) {  // ties keep the lowest index
                        bestv = row[start + j];
                        best = start + j;
                    }
                }
                py[flat] = bestv;
                rec.argmax[static_cast<size_t>(flat)] = static_cast<int32_t>(best);
            }
        }
    }
    return {std::move(y), std::move(rec)};
}

Tensor maxpool1d_backward(const PoolRecord& rec, const Tensor& dy) {
    require(dy.shape() == rec.out_shape,
            "maxpool1d_backward: upstream shape " + shape_str(dy) + " does not match record " +
                shape_str(rec.out_shape));
    const int batch = rec.out_shape[0], ch = rec.out_shape[1], out_len = rec.out_shape[2];
    Tensor dx({batch, ch, rec.in_len});
    int64_t flat = 0;
    for (int n = 0; n < batch; ++n) {
        for (int c = 0; c < ch; ++c) {
            double* dxrow = dx.data() + (static_cast<int64_t>(n) * ch + c) * rec.in_len;
            for (int t = 0; t < out_len; ++t, ++flat) {
                dxrow[rec.argmax[static_cast<size_t>(flat)]] += dy[flat];
            }
        }
    }
    return dx;
}

Tensor unpool1d(const Tensor& v, const PoolRecord& rec, int out_len) {
    require(v.shape() == rec.out_shape, "unpool1d: input shape " + shape_str(v) +
                                            " does not match record " + shape_str(rec.out_shape));
    const int batch = rec.out_shape[0], ch = rec.out_shape[1], pooled = rec.out_shape[2];
    for (int32_t idx : rec.argmax) {
        if (idx < 0 || idx >= out_len) {
            throw std::invalid_argument("unpool1d: corrupt record, index " + std::to_string(idx) +
                                        " outside output length " + std::to_string(out_len));
        }
    }
    Tensor out({batch, ch, out_len});
    int64_t flat = 0;
    for (int n = 0; n < batch; ++n) {
        for (int c = 0; c < ch; ++c) {
            double* orow = out.data() + (static_cast<int64_t>(n) * ch + c) * out_len;
            for (int t = 0; t < pooled; ++t, ++flat) {
                orow[rec.argmax[static_cast<size_t>(flat)]] = v[flat];
            }
        }
    }
    return out;
}

Tensor unpool1d_backward(const PoolRecord& rec, const Tensor& dout) {
    const int batch = rec.out_shape[0], ch = rec.out_shape[1], pooled = rec.out_shape[2];
    require(dout.ndim() == 3 && dout.dim(0) == batch && dout.dim(1) == ch,
            "unpool1d_backward: upstream shape " + shape_str(dout) + " does not match record");
    const int out_len = dout.dim(2);
    Tensor dv(rec.out_shape);
    int64_t flat = 0;
    for (int n = 0; n < batch; ++n) {
        for (int c = 0; c < ch; ++c) {
            const double* drow = dout.data() + (static_cast<int64_t>(n) * ch + c) * out_len;
            for (int t = 0; t < pooled; ++t, ++flat) {
                dv[flat] = drow[rec.argmax[static_cast<size_t>(flat)]];
            }
        }
    }
    return dv;
}

// ---------------------------------------------------------------------------
// batchnorm
// ---------------------------------------------------------------------------

BatchNormParams make_batchnorm(int features) {
    BatchNormParams p;
    p.gamma = Tensor::full({features}, 1.0);
    p.beta = Tensor({features});
    p.running_mean = Tensor({features});
    p.running_var = Tensor::full({features}, 1.0);
    return p;
}

Tensor batchnorm(const Tensor& x, BatchNormParams& p, BnMode mode, BatchNormCache* cache,
                 bool update_running) {
    const FeatView v = feat_view(x, "batchnorm");
    require(p.gamma.size() == v.features, "batchnorm: expected " +
                                              std::to_string(p.gamma.size()) +
                                              " features, input has " + std::to_string(v.features));
    const int64_t per_feature = static_cast<int64_t>(v.batch) * v.spatial;
    Tensor mean({v.features});
    Tensor inv_std({v.features});

    if (mode == BnMode::Train) {
        require(v.batch >= 2, "batchnorm: train mode needs batch >= 2, got " +
                                  std::to_string(v.batch));
        for (int c = 0; c < v.features; ++c) {
            double m = 0.0;
            for (int n = 0; n < v.batch; ++n) {
                const double* row =
                    x.data() + (static_cast<int64_t>(n) * v.features + c) * v.spatial;
                for (int s = 0; s < v.spatial; ++s) m += row[s];
            }
            m /= static_cast<double>(per_feature);
            double var = 0.0;
            for (int n = 0; n < v.batch; ++n) {
                const double* row =
                    x.data() + (static_cast<int64_t>(n) * v.features + c) * v.spatial;
                for (int s = 0; s < v.spatial; ++s) {
                    const double d = row[s] - m;
                    var += d * d;
                }
            }
            var /= static_cast<double>(per_feature);
            mean[c] = m;
            inv_std[c] = 1.0 / std::sqrt(var + p.epsilon);
            if (update_running) {
                p.running_mean[c] = (1.0 - p.momentum) * p.running_mean[c] + p.momentum * m;
                p.running_var[c] = (1.0 - p.momentum) * p.running_var[c] + p.momentum * var;
            }
        }
    } else {
        for (int c = 0; c < v.features; ++c) {
            mean[c] = p.running_mean[c];
            inv_std[c] = 1.0 / std::sqrt(p.running_var[c] + p.epsilon);
        }
    }

    Tensor y(x.shape());
    Tensor xhat(x.shape());
    for (int n = 0; n < v.batch; ++n) {
        for (int c = 0; c < v.features; ++c) {
            const int64_t off = (static_cast<int64_t>(n) * v.features + c) * v.spatial;
            const double m = mean[c], is = inv_std[c], g = p.gamma[c], b = p.beta[c];
            for (int s = 0; s < v.spatial; ++s) {
                const double xh = (x[off + s] - m) * is;
                xhat[off + s] = xh;
                y[off + s] = g * xh + b;
            }
        }
    }
    if (cache != nullptr) {
        cache->mean = std::move(mean);
        cache->inv_std = std::move(inv_std);
        cache->xhat = std::move(xhat);
    }
    return y;
}

BatchNormGrads batchnorm_backward(const BatchNormParams& p, const BatchNormCache& cache,
                                  const Tensor& dy) {
    const FeatView v = feat_view(dy, "batchnorm_backward");
    const int64_t m = static_cast<int64_t>(v.batch) * v.spatial;
    BatchNormGrads g;
    g.dx = Tensor(dy.shape());
    g.dgamma = Tensor({v.features});
    g.dbeta = Tensor({v.features});

    // Standard train-mode gradient through the batch statistics:
    // dx = (gamma * inv_std / m) * (m*dy - sum(dy) - xhat * sum(dy * xhat)).
    for (int c = 0; c < v.features; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int n = 0; n < v.batch; ++n) {
            const int64_t off = (static_cast<int64_t>(n) * v.features + c) * v.spatial;
            for (int s = 0; s < v.spatial; ++s) {
                sum_dy += dy[off + s];
                sum_dy_xhat += dy[off + s] * cache.xhat[off + s];
            }
        }
        g.dgamma[c] = sum_dy_xhat;
        g.dbeta[c] = sum_dy;
        const double k = p.gamma[c] * cache.inv_std[c] / static_cast<double>(m);
        for (int n = 0; n < v.batch; ++n) {
            const int64_t off = (static_cast<int64_t>(n) * v.features + c) * v.spatial;
            for (int s = 0; s < v.spatial; ++s) {
                g.dx[off + s] = k * (static_cast<double>(m) * dy[off + s] - sum_dy -
                                     cache.xhat[off + s] * sum_dy_xhat);
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// relu / softmax / dense
// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (int64_t i = 0; i < y.size(); ++i) y[i] = std::max(0.0, y[i]);
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
    require(x.same_shape(dy), "relu_backward: shape mismatch " + shape_str(x) + " vs " +
                                  shape_str(dy));
    Tensor dx = dy;
    for (int64_t i = 0; i < dx.size(); ++i) {
        if (x[i] <= 0.0) dx[i] = 0.0;
    }
    return dx;
}

Tensor softmax(const Tensor& logits) {
    require(logits.ndim() == 2, "softmax: expected batch x classes, got " + shape_str(logits));
    const int batch = logits.dim(0), classes = logits.dim(1);
    Tensor y(logits.shape());
    for (int n = 0; n < batch; ++n) {
        const double* row = logits.data() + static_cast<int64_t>(n) * classes;
        double* orow = y.data() + static_cast<int64_t>(n) * classes;
        double mx = row[0];
        for (int c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
        double z = 0.0;
        for (int c = 0; c < classes; ++c) {
            orow[c] = std::exp(row[c] - mx);
            z += orow[c];
        }
        for (int c = 0; c < classes; ++c) orow[c] /= z;
    }
    return y;
}

Tensor softmax_backward(const Tensor& y, const Tensor& dy) {
    require(y.same_shape(dy), "softmax_backward: shape mismatch " + shape_str(y) + " vs " +
                                  shape_str(dy));
    const int batch = y.dim(0), classes = y.dim(1);
    Tensor dz(y.shape());
    for (int n = 0; n < batch; ++n) {
        const int64_t off = static_cast<int64_t>(n) * classes;
        double dot = 0.0;
        for (int c = 0; c < classes; ++c) dot += dy[off + c] * y[off + c];
        for (int c = 0; c < classes; ++c) dz[off + c] = y[off + c] * (dy[off + c] - dot);
    }
    return dz;
}

Tensor dense(const Tensor& x, const DenseParams& p) {
    require(x.ndim() == 2, "dense: expected batch x dim, got " + shape_str(x));
    require(x.dim(1) == p.weight.dim(0), "dense: input dim " + std::to_string(x.dim(1)) +
                                             " does not match weight " + shape_str(p.weight));
    Tensor y = matmul(x, p.weight);
    return add(y, p.bias);
}

DenseGrads dense_backward(const Tensor& x, const DenseParams& p, const Tensor& dy) {
    const int batch = x.dim(0), in_dim = x.dim(1), out_dim = p.weight.dim(1);
    require(dy.ndim() == 2 && dy.dim(0) == batch && dy.dim(1) == out_dim,
            "dense_backward: upstream shape " + shape_str(dy) + " does not match output");
    DenseGrads g;
    g.dx = Tensor({batch, in_dim});
    g.dweight = Tensor({in_dim, out_dim});
    g.dbias = Tensor({out_dim});
    for (int n = 0; n < batch; ++n) {
        const double* xrow = x.data() + static_cast<int64_t>(n) * in_dim;
        const double* dyrow = dy.data() + static_cast<int64_t>(n) * out_dim;
        double* dxrow = g.dx.data() + static_cast<int64_t>(n) * in_dim;
        for (int j = 0; j < out_dim; ++j) g.dbias[j] += dyrow[j];
        for (int i = 0; i < in_dim; ++i) {
            const double* wrow = p.weight.data() + static_cast<int64_t>(i) * out_dim;
            double* dwrow = g.dweight.data() + static_cast<int64_t>(i) * out_dim;
            double acc = 0.0;
            const double xv = xrow[i];
            for (int j = 0; j < out_dim; ++j) {
                acc += dyrow[j] * wrow[j];
                dwrow[j] += xv * dyrow[j];
            }
            dxrow[i] = acc;
        }
    }
    return g;
}

}  // namespace sslhar
