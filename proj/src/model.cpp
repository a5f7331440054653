#include "sslhar/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sslhar {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct View {
    int batch, features, spatial;
};

View as_features(const Tensor& t) {
    if (t.ndim() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
    if (t.ndim() == 2) return {t.dim(0), t.dim(1), 1};
    throw std::invalid_argument("expected 2-D or 3-D tensor, got " + shape_str(t));
}

std::string enc_name(int layer) { return "enc" + std::to_string(layer); }
std::string dec_name(int layer) { return "dec" + std::to_string(layer); }
std::string comb_name(int layer) { return "comb" + std::to_string(layer); }

// Zero-stuffs by stride and zero-extends to target_len; the first real value
// lands at `left`. This is the length bookkeeping that makes a valid decoder
// convolution restore the encoder layer's input length exactly.
Tensor upsample_and_pad(const Tensor& in, int stride, int target_len, int* left_out) {
    const int batch = in.dim(0), ch = in.dim(1), len = in.dim(2);
    const int stuffed = (len - 1) * stride + 1;
    const int extra = target_len - stuffed;
    require(extra >= 0, "decoder upsample: target length too short");
    const int left = extra / 2;
    if (left_out != nullptr) *left_out = left;
    Tensor out({batch, ch, target_len});
    for (int n = 0; n < batch; ++n) {
        for (int c = 0; c < ch; ++c) {
            const double* src = in.data() + (static_cast<int64_t>(n) * ch + c) * len;
            double* dst = out.data() + (static_cast<int64_t>(n) * ch + c) * target_len;
            for (int t = 0; t < len; ++t) dst[left + t * stride] = src[t];
        }
    }
    return out;
}

Tensor upsample_and_pad_backward(const Tensor& dpad, int stride, int in_len, int left) {
    const int batch = dpad.dim(0), ch = dpad.dim(1), target_len = dpad.dim(2);
    Tensor din({batch, ch, in_len});
    for (int n = 0; n < batch; ++n) {
        for (int c = 0; c < ch; ++c) {
            const double* src = dpad.data() + (static_cast<int64_t>(n) * ch + c) * target_len;
            double* dst = din.data() + (static_cast<int64_t>(n) * ch + c) * in_len;
            for (int t = 0; t < in_len; ++t) dst[t] = src[left + t * stride];
        }
    }
    return din;
}

void add_into(Tensor& acc, const Tensor& t) {
    if (acc.empty()) {
        acc = t;
        return;
    }
    require(acc.same_shape(t), "gradient accumulation shape mismatch " + shape_str(acc) +
                                   " vs " + shape_str(t));
    for (int64_t i = 0; i < acc.size(); ++i) acc[i] += t[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// ModelKind
// ---------------------------------------------------------------------------

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::Supervised: return "cnn";
        case ModelKind::EncoderDecoder: return "encdec";
        case ModelKind::Ladder: return "ladder";
    }
    return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "cnn") return ModelKind::Supervised;
    if (s == "encdec") return ModelKind::EncoderDecoder;
    if (s == "ladder") return ModelKind::Ladder;
    throw std::invalid_argument("unknown model kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// ParamSet
// ---------------------------------------------------------------------------

int ParamSet::add(const std::string& name, Tensor init) {
    require(index_.count(name) == 0, "parameter '" + name + "' registered twice");
    const int id = static_cast<int>(values_.size());
    index_[name] = id;
    names_.push_back(name);
    grads_.emplace_back(init.shape());
    values_.push_back(std::move(init));
    return id;
}

int ParamSet::index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown parameter '" + name + "'");
    return it->second;
}

Tensor& ParamSet::value(const std::string& name) { return values_[static_cast<size_t>(index_of(name))]; }
const Tensor& ParamSet::value(const std::string& name) const {
    return values_[static_cast<size_t>(index_of(name))];
}
Tensor& ParamSet::grad(const std::string& name) { return grads_[static_cast<size_t>(index_of(name))]; }
const Tensor& ParamSet::grad(const std::string& name) const {
    return grads_[static_cast<size_t>(index_of(name))];
}

void ParamSet::zero_grads() {
    for (Tensor& g : grads_) {
        for (int64_t i = 0; i < g.size(); ++i) g[i] = 0.0;
    }
}

// ---------------------------------------------------------------------------
// Combinator
// ---------------------------------------------------------------------------

Tensor combinator_g(const Tensor& ztil, const Tensor& u, const CombinatorParams& p,
                    CombinatorCache* cache) {
    require(ztil.same_shape(u), "combinator: shape mismatch " + shape_str(ztil) + " vs " +
                                    shape_str(u));
    const View v = as_features(ztil);
    for (const Tensor& a : p.a) {
        require(a.size() == v.features, "combinator: parameter length " +
                                            std::to_string(a.size()) + " does not match " +
                                            std::to_string(v.features) + " features");
    }
    Tensor zhat(ztil.shape());
    Tensor sig_mu(ztil.shape()), sig_nu(ztil.shape()), mu(ztil.shape()), nu(ztil.shape());
    for (int n = 0; n < v.batch; ++n) {
        for (int c = 0; c < v.features; ++c) {
            const int64_t off = (static_cast<int64_t>(n) * v.features + c) * v.spatial;
            const double a1 = p.a[0][c], a2 = p.a[1][c], a3 = p.a[2][c], a4 = p.a[3][c],
                         a5 = p.a[4][c], a6 = p.a[5][c], a7 = p.a[6][c], a8 = p.a[7][c],
                         a9 = p.a[8][c], a10 = p.a[9][c];
            for (int s = 0; s < v.spatial; ++s) {
                const double uu = u[off + s];
                const double sm = sigmoid(a2 * uu + a3);
                const double sn = sigmoid(a7 * uu + a8);
                const double m = a1 * sm + a4 * uu + a5;
                const double f = a6 * sn + a9 * uu + a10;
                sig_mu[off + s] = sm;
                sig_nu[off + s] = sn;
                mu[off + s] = m;
                nu[off + s] = f;
                zhat[off + s] = (ztil[off + s] - m) * f + m;
            }
        }
    }
    if (cache != nullptr) {
        cache->sig_mu = std::move(sig_mu);
        cache->sig_nu = std::move(sig_nu);
        cache->mu = std::move(mu);
        cache->nu = std::move(nu);
        cache->ztil = ztil;
        cache->u = u;
    }
    return zhat;
}

CombinatorGrads combinator_backward(const CombinatorCache& cache, const CombinatorParams& p,
                                    const Tensor& dzhat) {
    const View v = as_features(dzhat);
    CombinatorGrads g;
    g.dztil = Tensor(dzhat.shape());
    g.du = Tensor(dzhat.shape());
    for (auto& da : g.da) da = Tensor({v.features});
    for (int n = 0; n < v.batch; ++n) {
        for (int c = 0; c < v.features; ++c) {
            const int64_t off = (static_cast<int64_t>(n) * v.features + c) * v.spatial;
            const double a1 = p.a[0][c], a2 = p.a[1][c], a4 = p.a[3][c], a6 = p.a[5][c],
                         a7 = p.a[6][c], a9 = p.a[8][c];
            for (int s = 0; s < v.spatial; ++s) {
                const double d = dzhat[off + s];
                const double uu = cache.u[off + s];
                const double zt = cache.ztil[off + s];
                const double sm = cache.sig_mu[off + s];
                const double sn = cache.sig_nu[off + s];
                const double m = cache.mu[off + s];
                const double f = cache.nu[off + s];
                const double dmu = d * (1.0 - f);
                const double dnu = d * (zt - m);
                g.dztil[off + s] = d * f;
                g.du[off + s] = dmu * (a1 * sm * (1.0 - sm) * a2 + a4) +
                                dnu * (a6 * sn * (1.0 - sn) * a7 + a9);
                g.da[0][c] += dmu * sm;
                g.da[1][c] += dmu * a1 * sm * (1.0 - sm) * uu;
                g.da[2][c] += dmu * a1 * sm * (1.0 - sm);
                g.da[3][c] += dmu * uu;
                g.da[4][c] += dmu;
                g.da[5][c] += dnu * sn;
                g.da[6][c] += dnu * a6 * sn * (1.0 - sn) * uu;
                g.da[7][c] += dnu * a6 * sn * (1.0 - sn);
                g.da[8][c] += dnu * uu;
                g.da[9][c] += dnu;
            }
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Model: construction and init
// ---------------------------------------------------------------------------

Model::Model(NetworkSpec spec, ModelKind kind) : spec_(std::move(spec)), kind_(kind) {
    const int L = spec_.depth();
    for (int l = 1; l <= L; ++l) {
        const LayerDesc& d = spec_.layers[static_cast<size_t>(l - 1)];
        const LayerShape& prev = spec_.shapes[static_cast<size_t>(l - 1)];
        const std::string name = enc_name(l);
        // Batchnorm follows every affine layer, so its beta is the shift and a
        // separate affine bias would be a dead parameter.
        if (d.kind == LayerDesc::Kind::Conv) {
            params_.add(name + ".kernel", Tensor({d.out_ch, prev.ch, d.kernel}));
            params_.add(name + ".gamma", Tensor::full({d.out_ch}, 1.0));
            params_.add(name + ".beta", Tensor({d.out_ch}));
            buffers_.add(name + ".running_mean", Tensor({d.out_ch}));
            buffers_.add(name + ".running_var", Tensor::full({d.out_ch}, 1.0));
        } else if (d.kind == LayerDesc::Kind::Dense) {
            params_.add(name + ".weight", Tensor({prev.dim, d.units}));
            params_.add(name + ".gamma", Tensor::full({d.units}, 1.0));
            params_.add(name + ".beta", Tensor({d.units}));
            buffers_.add(name + ".running_mean", Tensor({d.units}));
            buffers_.add(name + ".running_var", Tensor::full({d.units}, 1.0));
        }
    }
    if (kind_ != ModelKind::Supervised) {
        // Ladder-mode decoder projections feed a batchnorm, so only the
        // encoder-decoder keeps projection biases.
        const bool dec_bias = kind_ == ModelKind::EncoderDecoder;
        for (int l = 1; l <= L; ++l) {
            const LayerDesc& d = spec_.layers[static_cast<size_t>(l - 1)];
            const LayerShape& prev = spec_.shapes[static_cast<size_t>(l - 1)];
            const LayerShape& cur = spec_.shapes[static_cast<size_t>(l)];
            const std::string name = dec_name(l);
            if (d.kind == LayerDesc::Kind::Conv) {
                params_.add(name + ".kernel", Tensor({prev.ch, cur.ch, d.kernel}));
                if (dec_bias) params_.add(name + ".bias", Tensor({prev.ch}));
            } else if (d.kind == LayerDesc::Kind::Dense) {
                params_.add(name + ".weight", Tensor({cur.dim, prev.dim}));
                if (dec_bias) params_.add(name + ".bias", Tensor({prev.dim}));
            }
        }
    }
    if (kind_ == ModelKind::Ladder) {
        for (int l = 0; l <= L; ++l) {
            const LayerShape& shape = spec_.shapes[static_cast<size_t>(l)];
            const int feats = shape.flat ? shape.dim : shape.ch;
            for (int i = 1; i <= 10; ++i) {
                params_.add(comb_name(l) + ".a" + std::to_string(i), Tensor({feats}));
            }
        }
    }
}

void Model::init_params(uint64_t seed) {
    Rng root(seed);
    for (const std::string& name : params_.names()) {
        Tensor& t = params_.value(name);
        const bool is_kernel = name.size() > 7 && name.rfind(".kernel") == name.size() - 7;
        const bool is_weight = name.size() > 7 && name.rfind(".weight") == name.size() - 7;
        if (is_kernel || is_weight) {
            const int fan_in = is_kernel ? t.dim(1) * t.dim(2) : t.dim(0);
            Rng r = root.fork(name);
            const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
            for (int64_t i = 0; i < t.size(); ++i) t[i] = std * r.normal();
        } else if (name.rfind(".gamma") != std::string::npos ||
                   name.rfind(".a1") == name.size() - 3 ||
                   name.rfind(".a2") == name.size() - 3 ||
                   name.rfind(".a4") == name.size() - 3) {
            // Combinators start vertically driven and nonlinear: mu(u) =
            // sigmoid(u) + u, nu = 0, so zhat = mu(u). Reconstruction
            // pressure reaches the encoder through the decoder chain from the
            // first step instead of being absorbed by the lateral shortcut;
            // the lateral blend develops through nu during training.
            for (int64_t i = 0; i < t.size(); ++i) t[i] = 1.0;
        } else {
            // biases, betas, remaining combinator coefficients: zero
            for (int64_t i = 0; i < t.size(); ++i) t[i] = 0.0;
        }
    }
    for (const std::string& name : buffers_.names()) {
        Tensor& t = buffers_.value(name);
        const double v = name.rfind("running_var") != std::string::npos ? 1.0 : 0.0;
        for (int64_t i = 0; i < t.size(); ++i) t[i] = v;
    }
}

// ---------------------------------------------------------------------------
// Encoder forward/backward
// ---------------------------------------------------------------------------

struct Model::BnView {
    BatchNormParams p;
    ParamSet* buffers;
    std::string prefix;
    void commit() {
        buffers->value(prefix + ".running_mean") = p.running_mean;
        buffers->value(prefix + ".running_var") = p.running_var;
    }
};

Model::BnView Model::encoder_bn(int layer) {
    const std::string prefix = enc_name(layer);
    BnView v;
    v.p.gamma = params_.value(prefix + ".gamma");
    v.p.beta = params_.value(prefix + ".beta");
    v.p.running_mean = buffers_.value(prefix + ".running_mean");
    v.p.running_var = buffers_.value(prefix + ".running_var");
    v.buffers = &buffers_;
    v.prefix = prefix;
    return v;
}

CombinatorParams Model::combinator(int layer) const {
    CombinatorParams p;
    for (int i = 0; i < 10; ++i) {
        p.a[static_cast<size_t>(i)] =
            params_.value(comb_name(layer) + ".a" + std::to_string(i + 1));
    }
    return p;
}

EncoderTrace Model::forward_clean(const Tensor& x, BnMode mode, bool update_running) {
    return forward_noisy(x, 0.0, 0, mode, update_running);
}

EncoderTrace Model::forward_noisy(const Tensor& x, double sigma, uint64_t noise_seed,
                                  BnMode mode, bool update_running) {
    require(sigma >= 0.0, "forward: sigma must be >= 0");
    require(x.ndim() == 3 && x.dim(1) == spec_.in_channels && x.dim(2) == spec_.in_len,
            "forward: input " + shape_str(x) + " does not match spec input " +
                std::to_string(spec_.in_channels) + " x " + std::to_string(spec_.in_len));
    const int L = spec_.depth();
    const int batch = x.dim(0);
    EncoderTrace tr;
    tr.train_mode = mode == BnMode::Train;
    tr.z.resize(static_cast<size_t>(L) + 1);
    tr.h.resize(static_cast<size_t>(L) + 1);
    tr.pre.resize(static_cast<size_t>(L) + 1);
    tr.bn.resize(static_cast<size_t>(L) + 1);
    tr.pools.resize(static_cast<size_t>(L) + 1);

    Rng noise(noise_seed);
    const bool noisy = sigma > 0.0;

    tr.z[0] = noisy ? add(x, noise.gaussian(x.shape(), sigma)) : x;
    tr.h[0] = tr.z[0];

    for (int l = 1; l <= L; ++l) {
        const LayerDesc& d = spec_.layers[static_cast<size_t>(l - 1)];
        const size_t sl = static_cast<size_t>(l);
        if (d.kind == LayerDesc::Kind::Conv) {
            Conv1dParams cp{params_.value(enc_name(l) + ".kernel"), Tensor({d.out_ch}), d.stride};
            tr.pre[sl] = conv1d(tr.h[sl - 1], cp);
            BnView bnv = encoder_bn(l);
            Tensor z = batchnorm(tr.pre[sl], bnv.p, mode, &tr.bn[sl], update_running);
            if (update_running) bnv.commit();
            if (noisy) z = add(z, noise.gaussian(z.shape(), sigma));
            tr.h[sl] = l == L ? z : relu(z);
            tr.z[sl] = std::move(z);
        } else if (d.kind == LayerDesc::Kind::Pool) {
            auto [y, rec] = maxpool1d(tr.h[sl - 1], d.pool_size, d.pool_stride);
            tr.pools[sl] = std::move(rec);
            if (noisy) y = add(y, noise.gaussian(y.shape(), sigma));
            tr.h[sl] = y;
            tr.z[sl] = std::move(y);
        } else {
            const LayerShape& prev = spec_.shapes[sl - 1];
            Tensor flat = tr.h[sl - 1].reshaped({batch, prev.dim});
            DenseParams dp{params_.value(enc_name(l) + ".weight"), Tensor({d.units})};
            tr.pre[sl] = dense(flat, dp);
            BnView bnv = encoder_bn(l);
            Tensor z = batchnorm(tr.pre[sl], bnv.p, mode, &tr.bn[sl], update_running);
            if (update_running) bnv.commit();
            if (noisy) z = add(z, noise.gaussian(z.shape(), sigma));
            tr.h[sl] = l == L ? z : relu(z);
            tr.z[sl] = std::move(z);
        }
    }
    return tr;
}

void Model::encoder_backward(const EncoderTrace& tr, std::vector<Tensor>& dz) {
    const int L = spec_.depth();
    require(static_cast<int>(dz.size()) == L + 1, "encoder_backward: need L+1 gradient slots");
    const int batch = tr.h[0].dim(0);
    Tensor gh;  // gradient w.r.t. h[l], flowing down

    auto accum = [this](const std::string& name, const Tensor& g) {
        add_into(params_.grad(name), g);
    };

    for (int l = L; l >= 1; --l) {
        const LayerDesc& d = spec_.layers[static_cast<size_t>(l - 1)];
        const size_t sl = static_cast<size_t>(l);
        // Total gradient on z[l]: external plus the activation's chain rule.
        Tensor gz = dz[sl];
        if (!gh.empty()) {
            const bool through_relu =
                d.kind != LayerDesc::Kind::Pool && l != L;  // hidden conv/dense use relu
            add_into(gz, through_relu ? relu_backward(tr.z[sl], gh) : gh);
        }
        if (gz.empty()) {
            gh = Tensor();  // nothing flows below this point
            continue;
        }
        if (d.kind == LayerDesc::Kind::Conv) {
            BatchNormParams bnp;
            bnp.gamma = params_.value(enc_name(l) + ".gamma");
            BatchNormGrads bg = batchnorm_backward(bnp, tr.bn[sl], gz);
            accum(enc_name(l) + ".gamma", bg.dgamma);
            accum(enc_name(l) + ".beta", bg.dbeta);
            Conv1dParams cp{params_.value(enc_name(l) + ".kernel"), Tensor({d.out_ch}), d.stride};
            Conv1dGrads cg = conv1d_backward(tr.h[sl - 1], cp, bg.dx);
            accum(enc_name(l) + ".kernel", cg.dkernels);
            gh = std::move(cg.dx);
        } else if (d.kind == LayerDesc::Kind::Pool) {
            gh = maxpool1d_backward(tr.pools[sl], gz);
        } else {
            BatchNormParams bnp;
            bnp.gamma = params_.value(enc_name(l) + ".gamma");
            BatchNormGrads bg = batchnorm_backward(bnp, tr.bn[sl], gz);
            accum(enc_name(l) + ".gamma", bg.dgamma);
            accum(enc_name(l) + ".beta", bg.dbeta);
            const LayerShape& prev = spec_.shapes[sl - 1];
            Tensor flat = tr.h[sl - 1].reshaped({batch, prev.dim});
            DenseParams dp{params_.value(enc_name(l) + ".weight"), Tensor({d.units})};
            DenseGrads dg = dense_backward(flat, dp, bg.dx);
            accum(enc_name(l) + ".weight", dg.dweight);
            gh = dg.dx.reshaped(tr.h[sl - 1].shape());
        }
    }
}

// ---------------------------------------------------------------------------
// Decoder mirrors
// ---------------------------------------------------------------------------

Tensor Model::mirror_forward(int layer, const Tensor& in, const EncoderTrace& noisy) const {
    const LayerDesc& d = spec_.layers[static_cast<size_t>(layer - 1)];
    const LayerShape& prev = spec_.shapes[static_cast<size_t>(layer - 1)];
    const int batch = in.dim(0);
    if (d.kind == LayerDesc::Kind::Conv) {
        Tensor padded = upsample_and_pad(in, d.stride, prev.len + d.kernel - 1, nullptr);
        const std::string bias_name = dec_name(layer) + ".bias";
        Conv1dParams cp{params_.value(dec_name(layer) + ".kernel"),
                        params_.has(bias_name) ? params_.value(bias_name) : Tensor({prev.ch}), 1};
        return conv1d(padded, cp);
    }
    if (d.kind == LayerDesc::Kind::Pool) {
        return unpool1d(in, noisy.pools[static_cast<size_t>(layer)], prev.len);
    }
    const std::string bias_name = dec_name(layer) + ".bias";
    DenseParams dp{params_.value(dec_name(layer) + ".weight"),
                   params_.has(bias_name) ? params_.value(bias_name) : Tensor({prev.dim})};
    Tensor out = dense(in, dp);
    return prev.flat ? out : out.reshaped({batch, prev.ch, prev.len});
}

Tensor Model::mirror_backward(int layer, const Tensor& in, const Tensor& dout,
                              const EncoderTrace& noisy) {
    const LayerDesc& d = spec_.layers[static_cast<size_t>(layer - 1)];
    const LayerShape& prev = spec_.shapes[static_cast<size_t>(layer - 1)];
    const int batch = in.dim(0);
    if (d.kind == LayerDesc::Kind::Conv) {
        int left = 0;
        Tensor padded = upsample_and_pad(in, d.stride, prev.len + d.kernel - 1, &left);
        const std::string bias_name = dec_name(layer) + ".bias";
        Conv1dParams cp{params_.value(dec_name(layer) + ".kernel"),
                        params_.has(bias_name) ? params_.value(bias_name) : Tensor({prev.ch}), 1};
        Conv1dGrads cg = conv1d_backward(padded, cp, dout);
        add_into(params_.grad(dec_name(layer) + ".kernel"), cg.dkernels);
        if (params_.has(bias_name)) add_into(params_.grad(bias_name), cg.dbias);
        return upsample_and_pad_backward(cg.dx, d.stride, in.dim(2), left);
    }
    if (d.kind == LayerDesc::Kind::Pool) {
        return unpool1d_backward(noisy.pools[static_cast<size_t>(layer)], dout);
    }
    const std::string bias_name = dec_name(layer) + ".bias";
    DenseParams dp{params_.value(dec_name(layer) + ".weight"),
                   params_.has(bias_name) ? params_.value(bias_name) : Tensor({prev.dim})};
    Tensor dflat = dout.ndim() == 2 ? dout : dout.reshaped({batch, prev.dim});
    DenseGrads dg = dense_backward(in, dp, dflat);
    add_into(params_.grad(dec_name(layer) + ".weight"), dg.dweight);
    if (params_.has(bias_name)) add_into(params_.grad(bias_name), dg.dbias);
    return dg.dx;
}

// ---------------------------------------------------------------------------
// Decode
// ---------------------------------------------------------------------------

DecodeTrace Model::decode(const EncoderTrace& noisy, DecodeMode mode) {
    require(kind_ != ModelKind::Supervised, "decode: supervised model has no decoder");
    require(noisy.train_mode, "decode: needs a train-mode encoder trace");
    const int L = spec_.depth();
    require(static_cast<int>(noisy.z.size()) == L + 1, "decode: trace depth mismatch");
    DecodeTrace dt;
    dt.mode = mode;

    if (mode == DecodeMode::EncoderDecoder) {
        dt.stage_pre.resize(static_cast<size_t>(L) + 1);
        dt.stage_act.resize(static_cast<size_t>(L) + 1);
        dt.stage_act[static_cast<size_t>(L)] = noisy.z[static_cast<size_t>(L)];
        for (int l = L; l >= 1; --l) {
            Tensor m = mirror_forward(l, dt.stage_act[static_cast<size_t>(l)], noisy);
            dt.stage_act[static_cast<size_t>(l - 1)] = (l - 1 > 0) ? relu(m) : m;
            dt.stage_pre[static_cast<size_t>(l - 1)] = std::move(m);
        }
        return dt;
    }

    require(kind_ == ModelKind::Ladder, "decode: ladder mode needs a ladder model");
    dt.zhat.resize(static_cast<size_t>(L) + 1);
    dt.u.resize(static_cast<size_t>(L) + 1);
    dt.v.resize(static_cast<size_t>(L) + 1);
    dt.ubn.resize(static_cast<size_t>(L) + 1);
    dt.comb.resize(static_cast<size_t>(L) + 1);
    for (int l = L; l >= 0; --l) {
        const size_t sl = static_cast<size_t>(l);
        const LayerShape& shape = spec_.shapes[sl];
        // The top of the decoder is seeded by the noisy encoder's own output;
        // every level below projects the reconstruction from one layer up.
        Tensor v_l = (l == L) ? noisy.z[sl] : mirror_forward(l + 1, dt.zhat[sl + 1], noisy);
        BatchNormParams bnp = make_batchnorm(shape.flat ? shape.dim : shape.ch);
        dt.u[sl] = batchnorm(v_l, bnp, BnMode::Train, &dt.ubn[sl], false);
        dt.v[sl] = std::move(v_l);
        dt.zhat[sl] = combinator_g(noisy.z[sl], dt.u[sl], combinator(l), &dt.comb[sl]);
    }
    return dt;
}

void Model::decode_backward(const DecodeTrace& dt, const EncoderTrace& noisy,
                            const std::vector<Tensor>& dzhat, std::vector<Tensor>& dz_noisy) {
    const int L = spec_.depth();

    if (dt.mode == DecodeMode::EncoderDecoder) {
        // dzhat[0] carries the gradient on xhat; the chain walks back up.
        Tensor d = dzhat[0];
        if (d.empty()) return;
        for (int l = 1; l <= L; ++l) {
            Tensor dact = mirror_backward(l, dt.stage_act[static_cast<size_t>(l)], d, noisy);
            if (l == L) {
                add_into(dz_noisy[static_cast<size_t>(L)], dact);
            } else {
                d = relu_backward(dt.stage_pre[static_cast<size_t>(l)], dact);
            }
        }
        return;
    }

    std::vector<Tensor> carry(static_cast<size_t>(L) + 2);
    for (int l = 0; l <= L; ++l) {
        const size_t sl = static_cast<size_t>(l);
        Tensor g = dzhat[sl];
        if (!carry[sl].empty()) add_into(g, carry[sl]);
        if (g.empty()) continue;

        CombinatorGrads cg = combinator_backward(dt.comb[sl], combinator(l), g);
        for (int i = 0; i < 10; ++i) {
            add_into(params_.grad(comb_name(l) + ".a" + std::to_string(i + 1)),
                     cg.da[static_cast<size_t>(i)]);
        }
        add_into(dz_noisy[sl], cg.dztil);

        const LayerShape& shape = spec_.shapes[sl];
        BatchNormParams bnp = make_batchnorm(shape.flat ? shape.dim : shape.ch);
        BatchNormGrads bg = batchnorm_backward(bnp, dt.ubn[sl], cg.du);
        if (l == L) {
            add_into(dz_noisy[sl], bg.dx);
        } else {
            Tensor dprev = mirror_backward(l + 1, dt.zhat[sl + 1], bg.dx, noisy);
            add_into(carry[sl + 1], dprev);
        }
    }
}

// ---------------------------------------------------------------------------
// Costs and combined gradients
// ---------------------------------------------------------------------------

Tensor take_rows(const Tensor& t, int from, int to) {
    require(t.ndim() >= 1 && from >= 0 && to <= t.dim(0) && from < to,
            "take_rows: bad range [" + std::to_string(from) + ", " + std::to_string(to) +
                ") for " + shape_str(t));
    std::vector<int> shape = t.shape();
    shape[0] = to - from;
    const int64_t row = numel(shape) / shape[0];
    Tensor out(shape);
    std::copy(t.data() + from * row, t.data() + to * row, out.data());
    return out;
}

CostBreakdown combined_cost(ModelKind kind, const LadderState& state,
                            const std::vector<int>& targets, const std::vector<double>& lambdas,
                            bool recon_on_labeled) {
    const int n = state.n_labeled, m = state.n_unlabeled;
    const int r0 = recon_on_labeled ? 0 : n;
    const int r1 = n + m;
    CostBreakdown cb;

    if (kind == ModelKind::Supervised) {
        require(state.clean != nullptr, "combined_cost: supervised needs a clean trace");
        cb.c_s = supervised_cost(take_rows(state.clean->logits(), 0, n), targets);
        cb.finalize();
        return cb;
    }

    require(state.noisy != nullptr, "combined_cost: need a noisy trace");
    if (n > 0) {
        cb.c_s = supervised_cost(take_rows(state.noisy->logits(), 0, n), targets);
    }

    if (kind == ModelKind::EncoderDecoder) {
        require(!lambdas.empty(), "combined_cost: encoder-decoder needs lambda_0");
        cb.lambdas = {lambdas[0]};
        double c_r0 = 0.0;
        if (r1 > r0) {
            require(state.decoded != nullptr && state.input != nullptr,
                    "combined_cost: encoder-decoder needs a decode trace and the input");
            c_r0 = reconstruction_cost(take_rows(state.decoded->xhat(), r0, r1),
                                       take_rows(*state.input, r0, r1));
        }
        cb.c_r = {c_r0};
        cb.finalize();
        return cb;
    }

    require(state.clean != nullptr, "combined_cost: ladder needs a clean trace");
    const int L = static_cast<int>(state.clean->z.size()) - 1;
    require(static_cast<int>(lambdas.size()) == L + 1,
            "combined_cost: ladder needs " + std::to_string(L + 1) + " lambdas, got " +
                std::to_string(lambdas.size()));
    cb.lambdas = lambdas;
    cb.c_r.assign(static_cast<size_t>(L) + 1, 0.0);
    if (r1 > r0) {
        require(state.decoded != nullptr, "combined_cost: ladder needs a decode trace");
        for (int l = 0; l <= L; ++l) {
            cb.c_r[static_cast<size_t>(l)] =
                reconstruction_cost(take_rows(state.decoded->zhat[static_cast<size_t>(l)], r0, r1),
                                    take_rows(state.clean->z[static_cast<size_t>(l)], r0, r1));
        }
    }
    cb.finalize();
    return cb;
}

namespace {

// Scatters lambda * 2 (zhat - z) / m_recon over rows [r0, r1) into a
// full-batch gradient tensor; the sign argument flips it for the clean side.
Tensor recon_grad(const Tensor& zhat, const Tensor& z, int r0, int r1, double lambda,
                  double sign) {
    Tensor g(zhat.shape());
    const int64_t row = zhat.size() / zhat.dim(0);
    const double k = sign * 2.0 * lambda / static_cast<double>(r1 - r0);
    for (int i = r0; i < r1; ++i) {
        const int64_t off = static_cast<int64_t>(i) * row;
        for (int64_t j = 0; j < row; ++j) g[off + j] = k * (zhat[off + j] - z[off + j]);
    }
    return g;
}

}  // namespace

CostBreakdown Model::compute(const Batch& batch, const LossOptions& opt, bool with_grads) {
    const int L = spec_.depth();
    const int n = batch.n_labeled, m = batch.n_unlabeled;
    require(n + m == batch.x.dim(0), "compute: batch rows " + std::to_string(batch.x.dim(0)) +
                                         " do not match n_labeled + n_unlabeled");
    require(static_cast<int>(batch.labels.size()) == n, "compute: need one label per labeled row");
    if (with_grads) params_.zero_grads();

    // Resolve lambdas: default weight 0.1 everywhere.
    std::vector<double> lambdas = opt.lambdas;
    if (kind_ == ModelKind::Ladder && lambdas.empty()) {
        lambdas.assign(static_cast<size_t>(L) + 1, 0.1);
    }
    if (kind_ == ModelKind::EncoderDecoder && lambdas.empty()) lambdas = {0.1};

    const int r0 = opt.recon_on_labeled ? 0 : n;
    const int r1 = n + m;
    const int m_recon = r1 - r0;

    if (kind_ == ModelKind::Supervised) {
        EncoderTrace tr = forward_clean(batch.x, BnMode::Train, opt.update_running_stats);
        LadderState st;
        st.clean = &tr;
        st.n_labeled = n;
        st.n_unlabeled = m;
        CostBreakdown cb = combined_cost(kind_, st, batch.labels, {}, false);
        if (opt.pseudo_weight > 0.0 && m > 0) {
            require(static_cast<int>(opt.pseudo_labels.size()) == m,
                    "compute: need one pseudo label per unlabeled row");
            cb.c_pseudo = supervised_cost(take_rows(tr.logits(), n, n + m), opt.pseudo_labels);
            cb.pseudo_weight = opt.pseudo_weight;
            cb.finalize();
        }
        if (with_grads) {
            Tensor dlogits(tr.logits().shape());
            const int classes = spec_.n_classes;
            Tensor gl = supervised_cost_grad(take_rows(tr.logits(), 0, n), batch.labels);
            std::copy(gl.data(), gl.data() + gl.size(), dlogits.data());
            if (opt.pseudo_weight > 0.0 && m > 0) {
                Tensor gp = supervised_cost_grad(take_rows(tr.logits(), n, n + m),
                                                 opt.pseudo_labels);
                for (int64_t i = 0; i < gp.size(); ++i) {
                    dlogits[static_cast<int64_t>(n) * classes + i] = opt.pseudo_weight * gp[i];
                }
            }
            std::vector<Tensor> dz(static_cast<size_t>(L) + 1);
            dz[static_cast<size_t>(L)] = std::move(dlogits);
            encoder_backward(tr, dz);
        }
        return cb;
    }

    if (kind_ == ModelKind::EncoderDecoder) {
        EncoderTrace ntr =
            forward_noisy(batch.x, opt.sigma, opt.noise_seed, BnMode::Train,
                          opt.update_running_stats);
        DecodeTrace dt;
        if (m_recon > 0) dt = decode(ntr, DecodeMode::EncoderDecoder);
        LadderState st;
        st.noisy = &ntr;
        st.decoded = m_recon > 0 ? &dt : nullptr;
        st.input = &batch.x;
        st.n_labeled = n;
        st.n_unlabeled = m;
        CostBreakdown cb = combined_cost(kind_, st, batch.labels, lambdas, opt.recon_on_labeled);
        if (with_grads) {
            std::vector<Tensor> dz(static_cast<size_t>(L) + 1);
            if (n > 0) {
                Tensor gl = supervised_cost_grad(take_rows(ntr.logits(), 0, n), batch.labels);
                Tensor dlogits(ntr.logits().shape());
                std::copy(gl.data(), gl.data() + gl.size(), dlogits.data());
                dz[static_cast<size_t>(L)] = std::move(dlogits);
            }
            if (m_recon > 0 && lambdas[0] != 0.0) {
                std::vector<Tensor> dxhat(static_cast<size_t>(L) + 1);
                dxhat[0] = recon_grad(dt.xhat(), batch.x, r0, r1, lambdas[0], 1.0);
                decode_backward(dt, ntr, dxhat, dz);
            }
            encoder_backward(ntr, dz);
        }
        return cb;
    }

    // Ladder
    EncoderTrace ctr = forward_clean(batch.x, BnMode::Train, opt.update_running_stats);
    EncoderTrace ntr = forward_noisy(batch.x, opt.sigma, opt.noise_seed, BnMode::Train, false);
    DecodeTrace dt;
    if (m_recon > 0) dt = decode(ntr, DecodeMode::Ladder);
    LadderState st;
    st.clean = &ctr;
    st.noisy = &ntr;
    st.decoded = m_recon > 0 ? &dt : nullptr;
    st.input = &batch.x;
    st.n_labeled = n;
    st.n_unlabeled = m;
    CostBreakdown cb = combined_cost(kind_, st, batch.labels, lambdas, opt.recon_on_labeled);
    if (with_grads) {
        std::vector<Tensor> dz_noisy(static_cast<size_t>(L) + 1);
        std::vector<Tensor> dz_clean(static_cast<size_t>(L) + 1);
        if (n > 0) {
            Tensor gl = supervised_cost_grad(take_rows(ntr.logits(), 0, n), batch.labels);
            Tensor dlogits(ntr.logits().shape());
            std::copy(gl.data(), gl.data() + gl.size(), dlogits.data());
            dz_noisy[static_cast<size_t>(L)] = std::move(dlogits);
        }
        if (m_recon > 0) {
            std::vector<Tensor> dzhat(static_cast<size_t>(L) + 1);
            bool any = false;
            for (int l = 0; l <= L; ++l) {
                const double lam = lambdas[static_cast<size_t>(l)];
                if (lam == 0.0) continue;
                any = true;
                const size_t sl = static_cast<size_t>(l);
                dzhat[sl] = recon_grad(dt.zhat[sl], ctr.z[sl], r0, r1, lam, 1.0);
                // layer 0's clean activation is the raw input; no gradient flows there
                if (l > 0) {
                    dz_clean[sl] = recon_grad(dt.zhat[sl], ctr.z[sl], r0, r1, lam, -1.0);
                }
            }
            if (any) decode_backward(dt, ntr, dzhat, dz_noisy);
        }
        encoder_backward(ntr, dz_noisy);
        bool clean_any = false;
        for (const Tensor& t : dz_clean) {
            if (!t.empty()) clean_any = true;
        }
        if (clean_any) encoder_backward(ctr, dz_clean);
    }
    return cb;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

Tensor Model::predict_logits(const Tensor& x) {
    EncoderTrace tr = forward_clean(x, BnMode::Eval, false);
    return tr.logits();
}

std::vector<int> Model::predict(const Tensor& x) {
    Tensor logits = predict_logits(x);
    const int batch = logits.dim(0), classes = logits.dim(1);
    std::vector<int> out(static_cast<size_t>(batch));
    for (int i = 0; i < batch; ++i) {
        const double* row = logits.data() + static_cast<int64_t>(i) * classes;
        int best = 0;
        for (int c = 1; c < classes; ++c) {
            if (row[c] > row[best]) best = c;
        }
        out[static_cast<size_t>(i)] = best;
    }
    return out;
}

Tensor Model::penultimate_features(const Tensor& x) {
    EncoderTrace tr = forward_clean(x, BnMode::Eval, false);
    const int L = spec_.depth();
    const LayerShape& prev = spec_.shapes[static_cast<size_t>(L - 1)];
    return tr.h[static_cast<size_t>(L - 1)].reshaped({x.dim(0), prev.dim});
}

}  // namespace sslhar
