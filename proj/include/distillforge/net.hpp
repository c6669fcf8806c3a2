#pragma once

// Small differentiable feedforward stacks (dense and conv layers) with exact
// first derivatives and the mixed second-order products the unrolled
// optimization needs. Everything is deterministic given inputs; the heavy
// loops go through the kernels layer.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "distillforge/errors.hpp"
#include "distillforge/kernels.hpp"
#include "distillforge/matrix.hpp"
#include "distillforge/rng.hpp"

namespace distillforge::diffnet {

enum class Activation { identity, relu, tanh };

inline const char* to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
    }
    return "?";
}

struct LayerDesc {
    enum class Kind { dense, conv };
    Kind kind = Kind::dense;
    // dense
    int in_dim = 0;
    int out_dim = 0;
    bool has_bias = true;
    // conv: stride 1, zero padding ksize/2, spatial dims preserved
    int in_ch = 0, out_ch = 0, height = 0, width = 0, ksize = 3;

    static LayerDesc dense(int in, int out, bool bias = true) {
        LayerDesc d;
        d.kind = Kind::dense;
        d.in_dim = in;
        d.out_dim = out;
        d.has_bias = bias;
        return d;
    }
    static LayerDesc conv(int in_ch, int h, int w, int out_ch, int ksize = 3) {
        LayerDesc d;
        d.kind = Kind::conv;
        d.in_ch = in_ch;
        d.height = h;
        d.width = w;
        d.out_ch = out_ch;
        d.ksize = ksize;
        d.in_dim = in_ch * h * w;
        d.out_dim = out_ch * h * w;
        return d;
    }

    std::size_t weight_count() const {
        if (kind == Kind::dense) return static_cast<std::size_t>(in_dim) * out_dim;
        return static_cast<std::size_t>(out_ch) * in_ch * ksize * ksize;
    }
    std::size_t bias_count() const {
        if (!has_bias) return 0;
        return kind == Kind::dense ? static_cast<std::size_t>(out_dim)
                                   : static_cast<std::size_t>(out_ch);
    }
    std::size_t param_count() const { return weight_count() + bias_count(); }
};

// Architecture description. Parameter count is a pure function of the layers.
struct NetworkSpec {
    std::vector<LayerDesc> layers;
    Activation activation = Activation::tanh;
    int classes = 0;

    int input_dim() const { return layers.empty() ? 0 : layers.front().in_dim; }

    std::size_t param_count() const {
        std::size_t p = 0;
        for (const auto& l : layers) p += l.param_count();
        return p;
    }

    void validate() const {
        if (layers.empty()) throw ValidationError("network has no layers");
        if (classes < 2) throw ValidationError("network needs at least 2 classes");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto& l = layers[i];
            if (l.in_dim <= 0 || l.out_dim <= 0)
                throw ValidationError("layer " + std::to_string(i) + " has nonpositive dims");
            if (l.kind == LayerDesc::Kind::conv && (l.ksize <= 0 || l.ksize % 2 == 0))
                throw ValidationError("conv layer " + std::to_string(i) + " needs odd ksize");
            if (i > 0 && layers[i - 1].out_dim != l.in_dim)
                throw ShapeError("layer " + std::to_string(i) + " input dim " +
                                 std::to_string(l.in_dim) + " != previous output dim " +
                                 std::to_string(layers[i - 1].out_dim));
        }
        if (layers.back().out_dim != classes)
            throw ShapeError("final layer emits " + std::to_string(layers.back().out_dim) +
                             " logits for " + std::to_string(classes) + " classes");
    }

    std::string describe() const {
        std::string s;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto& l = layers[i];
            if (i) s += "+";
            if (l.kind == LayerDesc::Kind::dense) {
                s += "dense[" + std::to_string(l.in_dim) + "->" + std::to_string(l.out_dim) +
                     (l.has_bias ? "]" : ",nobias]");
            } else {
                s += "conv" + std::to_string(l.ksize) + "x" + std::to_string(l.ksize) + "[" +
                     std::to_string(l.in_ch) + "x" + std::to_string(l.height) + "x" +
                     std::to_string(l.width) + "->" + std::to_string(l.out_ch) + "]";
            }
        }
        s += ":";
        s += to_string(activation);
        return s;
    }

    std::string digest() const {
        const std::string d = describe();
        const std::uint64_t h = fnv1a64(d.data(), d.size());
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return d + "#" + buf;
    }

    static NetworkSpec mlp(int input_dim, const std::vector<int>& hidden, int classes,
                           Activation act = Activation::tanh, bool bias = true) {
        NetworkSpec s;
        s.activation = act;
        s.classes = classes;
        int in = input_dim;
        for (int hdim : hidden) {
            s.layers.push_back(LayerDesc::dense(in, hdim, bias));
            in = hdim;
        }
        s.layers.push_back(LayerDesc::dense(in, classes, bias));
        return s;
    }

    static NetworkSpec convnet(int channels, int h, int w, const std::vector<int>& conv_channels,
                               int classes, Activation act = Activation::tanh, int ksize = 3) {
        NetworkSpec s;
        s.activation = act;
        s.classes = classes;
        int ch = channels;
        for (int oc : conv_channels) {
            s.layers.push_back(LayerDesc::conv(ch, h, w, oc, ksize));
            ch = oc;
        }
        s.layers.push_back(LayerDesc::dense(ch * h * w, classes));
        return s;
    }
};

// Flat parameter vector layout: per layer, weights then bias.
struct ParamLayout {
    struct Slice {
        std::size_t w_off = 0, w_len = 0, b_off = 0, b_len = 0;
    };
    std::vector<Slice> layer;
    std::size_t total = 0;

    explicit ParamLayout(const NetworkSpec& spec) {
        std::size_t off = 0;
        for (const auto& l : spec.layers) {
            Slice s;
            s.w_off = off;
            s.w_len = l.weight_count();
            off += s.w_len;
            s.b_off = off;
            s.b_len = l.bias_count();
            off += s.b_len;
            layer.push_back(s);
        }
        total = off;
    }
};

// ------------------------------------------------------------------- labels

enum class LabelMode { hard, soft };

inline const char* to_string(LabelMode m) { return m == LabelMode::hard ? "hard" : "soft"; }

template <typename T>
struct LabelSet {
    LabelMode mode = LabelMode::hard;
    std::vector<int> hard;  // class indices, hard mode
    Matrix<T> soft;         // distribution rows, soft mode

    static LabelSet hard_of(std::vector<int> labels) {
        LabelSet s;
        s.mode = LabelMode::hard;
        s.hard = std::move(labels);
        return s;
    }
    static LabelSet soft_of(Matrix<T> rows) {
        LabelSet s;
        s.mode = LabelMode::soft;
        s.soft = std::move(rows);
        return s;
    }

    int rows() const {
        return mode == LabelMode::hard ? static_cast<int>(hard.size()) : soft.rows;
    }

    void validate(int classes, int expect_rows) const {
        if (rows() != expect_rows)
            throw ShapeError("label rows " + std::to_string(rows()) + " != input rows " +
                             std::to_string(expect_rows));
        if (mode == LabelMode::hard) {
            for (int y : hard)
                if (y < 0 || y >= classes)
                    throw ValidationError("hard label " + std::to_string(y) + " outside [0, " +
                                          std::to_string(classes) + ")");
        } else {
            if (soft.cols != classes)
                throw ShapeError("soft label cols " + std::to_string(soft.cols) + " != classes");
            for (int r = 0; r < soft.rows; ++r) {
                T sum = T(0);
                for (int c = 0; c < soft.cols; ++c) {
                    if (soft.at(r, c) < T(0))
                        throw ValidationError("soft label row " + std::to_string(r) +
                                              " has a negative entry");
                    sum += soft.at(r, c);
                }
                if (std::abs(static_cast<double>(sum) - 1.0) > 1e-6)
                    throw ValidationError("soft label row " + std::to_string(r) +
                                          " does not sum to 1");
            }
        }
    }
};

template <typename T>
struct Batch {
    Matrix<T> inputs;
    LabelSet<T> labels;

    int rows() const { return inputs.rows; }
    void validate(const NetworkSpec& spec) const {
        if (inputs.cols != spec.input_dim())
            throw ShapeError("batch input dim " + std::to_string(inputs.cols) +
                             " != network input dim " + std::to_string(spec.input_dim()));
        labels.validate(spec.classes, inputs.rows);
    }
};

template <typename T>
Matrix<T> one_hot(const std::vector<int>& labels, int classes) {
    Matrix<T> m(static_cast<int>(labels.size()), classes, T(0));
    for (std::size_t i = 0; i < labels.size(); ++i) m.at(static_cast<int>(i), labels[i]) = T(1);
    return m;
}

// -------------------------------------------------------------- activations

template <typename T>
inline T act_eval(Activation a, T z) {
    switch (a) {
        case Activation::identity: return z;
        case Activation::relu: return z > T(0) ? z : T(0);
        case Activation::tanh: return std::tanh(z);
    }
    return z;
}

template <typename T>
inline T act_deriv(Activation a, T z) {
    switch (a) {
        case Activation::identity: return T(1);
        case Activation::relu: return z > T(0) ? T(1) : T(0);
        case Activation::tanh: {
            const T t = std::tanh(z);
            return T(1) - t * t;
        }
    }
    return T(1);
}

// Second derivative; zero almost everywhere for relu.
template <typename T>
inline T act_second(Activation a, T z) {
    switch (a) {
        case Activation::identity: return T(0);
        case Activation::relu: return T(0);
        case Activation::tanh: {
            const T t = std::tanh(z);
            return T(-2) * t * (T(1) - t * t);
        }
    }
    return T(0);
}

// --------------------------------------------------------------- layer ops

namespace detail {

// out = layer(w, in) [+ bias]
template <typename T>
void layer_apply(const LayerDesc& l, const T* w, const T* bias, const Matrix<T>& in,
                 Matrix<T>& out) {
    if (l.kind == LayerDesc::Kind::dense) {
        kernels::gemm_nn(in.data.data(), w, out.data.data(), in.rows, l.in_dim, l.out_dim, false);
        if (bias) kernels::add_bias_rows(out.data.data(), bias, out.rows, out.cols);
    } else {
        kernels::conv2d_forward(in.data.data(), w, bias, out.data.data(), in.rows, l.in_ch,
                                l.height, l.width, l.out_ch, l.ksize);
    }
}

// din (+)= layer^T(w, dout)
template <typename T>
void layer_apply_transpose(const LayerDesc& l, const T* w, const Matrix<T>& dout, Matrix<T>& din,
                           bool accumulate) {
    if (l.kind == LayerDesc::Kind::dense) {
        if (!accumulate) din.fill(T(0));
        kernels::gemm_nt(dout.data.data(), w, din.data.data(), dout.rows, l.out_dim, l.in_dim,
                         true);
    } else {
        kernels::conv2d_grad_input(dout.data.data(), w, din.data.data(), dout.rows, l.in_ch,
                                   l.height, l.width, l.out_ch, l.ksize, accumulate);
    }
}

// dw (+)= d(layer)/d(w) contracted with dout; dbias (+)= contracted with dout.
template <typename T>
void layer_grad_params(const LayerDesc& l, const Matrix<T>& in, const Matrix<T>& dout, T* dw,
                       T* dbias, bool accumulate) {
    if (l.kind == LayerDesc::Kind::dense) {
        kernels::gemm_tn(in.data.data(), dout.data.data(), dw, l.in_dim, in.rows, l.out_dim,
                         accumulate);
        if (dbias) kernels::colsum(dout.data.data(), dbias, dout.rows, dout.cols, accumulate);
    } else {
        kernels::conv2d_grad_weight(in.data.data(), dout.data.data(), dw, in.rows, l.in_ch,
                                    l.height, l.width, l.out_ch, l.ksize, accumulate);
        if (dbias)
            kernels::conv2d_grad_bias(dout.data.data(), dbias, dout.rows, l.height, l.width,
                                      l.out_ch, accumulate);
    }
}

template <typename T>
void apply_activation_forward(Activation a, const Matrix<T>& z, Matrix<T>& out) {
    for (std::size_t i = 0; i < z.size(); ++i) out.data[i] = act_eval(a, z.data[i]);
}

}  // namespace detail

// ------------------------------------------------------------ forward/grad

template <typename T>
struct ForwardCache {
    std::vector<Matrix<T>> act;  // act[0] = inputs, act[l+1] = layer l output after activation
    std::vector<Matrix<T>> pre;  // pre[l] = pre-activation of layer l
};

template <typename T>
void check_params(const NetworkSpec& spec, std::span<const T> params) {
    if (params.size() != spec.param_count())
        throw ShapeError("parameter vector length " + std::to_string(params.size()) +
                         " != spec parameter count " + std::to_string(spec.param_count()));
    if (!all_finite(params)) throw NumericError("parameter vector contains non-finite values");
}

// Classification logits for a batch of inputs. Deterministic; optionally
// fills `cache` for a subsequent backward pass.
template <typename T>
Matrix<T> forward(const NetworkSpec& spec, std::span<const T> params, const Matrix<T>& inputs,
                  ForwardCache<T>* cache = nullptr) {
    spec.validate();
    check_params(spec, params);
    if (inputs.cols != spec.input_dim())
        throw ShapeError("input dim " + std::to_string(inputs.cols) + " != network input dim " +
                         std::to_string(spec.input_dim()));
    const ParamLayout lay(spec);
    const int L = static_cast<int>(spec.layers.size());
    Matrix<T> a = inputs;
    if (cache) {
        cache->act.assign(1, inputs);
        cache->pre.clear();
    }
    for (int l = 0; l < L; ++l) {
        const auto& desc = spec.layers[l];
        const auto& sl = lay.layer[l];
        Matrix<T> z(a.rows, desc.out_dim);
        detail::layer_apply(desc, params.data() + sl.w_off,
                            sl.b_len ? params.data() + sl.b_off : nullptr, a, z);
        if (l < L - 1) {
            Matrix<T> next(z.rows, z.cols);
            detail::apply_activation_forward(spec.activation, z, next);
            if (cache) {
                cache->pre.push_back(std::move(z));
                cache->act.push_back(next);
            }
            a = std::move(next);
        } else {
            if (cache) {
                cache->pre.push_back(z);
                cache->act.push_back(z);
            }
            a = std::move(z);
        }
    }
    return a;
}

// Mean cross-entropy between softmax(logits) and the targets; hard mode is
// soft mode with one-hot targets.
template <typename T>
T cross_entropy(const Matrix<T>& logits, const LabelSet<T>& labels) {
    if (logits.cols < 2) throw ValidationError("cross entropy needs at least 2 classes");
    labels.validate(logits.cols, logits.rows);
    const int B = logits.rows, C = logits.cols;
    std::vector<T> row_loss(B);
    for (int r = 0; r < B; ++r) {
        const T* z = logits.row(r);
        T m = z[0];
        for (int j = 1; j < C; ++j)
            if (z[j] > m) m = z[j];
        T sum = T(0);
        for (int j = 0; j < C; ++j) sum += std::exp(z[j] - m);
        const T lse = m + std::log(sum);
        T target_dot = T(0);
        if (labels.mode == LabelMode::hard) {
            target_dot = z[labels.hard[r]];
        } else {
            for (int j = 0; j < C; ++j) target_dot += labels.soft.at(r, j) * z[j];
        }
        row_loss[r] = lse - target_dot;
    }
    return kernels::blocked_sum(row_loss.data(), row_loss.size()) / static_cast<T>(B);
}

// d(mean CE)/d(logits) = (softmax(logits) - targets) / B
template <typename T>
Matrix<T> ce_logit_grad(const Matrix<T>& logits, const LabelSet<T>& labels) {
    const int B = logits.rows, C = logits.cols;
    Matrix<T> g(B, C);
    kernels::row_softmax(logits.data.data(), g.data.data(), B, C);
    const T invb = T(1) / static_cast<T>(B);
    if (labels.mode == LabelMode::hard) {
        for (int r = 0; r < B; ++r) g.at(r, labels.hard[r]) -= T(1);
    } else {
        for (std::size_t i = 0; i < g.size(); ++i) g.data[i] -= labels.soft.data[i];
    }
    kernels::scale(invb, g.data.data(), g.size());
    return g;
}

// Backward pass from a logits adjoint; returns the flat parameter gradient.
template <typename T>
std::vector<T> backward(const NetworkSpec& spec, std::span<const T> params,
                        const ForwardCache<T>& cache, const Matrix<T>& dlogits) {
    const ParamLayout lay(spec);
    const int L = static_cast<int>(spec.layers.size());
    std::vector<T> g(lay.total, T(0));
    Matrix<T> d = dlogits;
    for (int l = L - 1; l >= 0; --l) {
        const auto& desc = spec.layers[l];
        const auto& sl = lay.layer[l];
        detail::layer_grad_params(desc, cache.act[l], d, g.data() + sl.w_off,
                                  sl.b_len ? g.data() + sl.b_off : nullptr, false);
        if (l > 0) {
            Matrix<T> din(d.rows, desc.in_dim, T(0));
            detail::layer_apply_transpose(desc, params.data() + sl.w_off, d, din, false);
            const Matrix<T>& z = cache.pre[l - 1];
            for (std::size_t i = 0; i < din.size(); ++i)
                din.data[i] *= act_deriv(spec.activation, z.data[i]);
            d = std::move(din);
        }
    }
    return g;
}

// Exact gradient of the mean cross-entropy w.r.t. the flat parameters.
template <typename T>
std::vector<T> grad(const NetworkSpec& spec, std::span<const T> params, const Batch<T>& batch) {
    batch.validate(spec);
    ForwardCache<T> cache;
    Matrix<T> logits = forward(spec, params, batch.inputs, &cache);
    Matrix<T> g = ce_logit_grad(logits, batch.labels);
    return backward(spec, params, cache, g);
}

// ----------------------------------------------- mixed second-order products

template <typename T>
struct MixedSecondOrder {
    std::vector<T> grad;       // g = dl/dtheta
    std::vector<T> hvp;        // (d2l/dtheta2) v
    Matrix<T> dinputs;         // d<g,v>/dX
    Matrix<T> dlabel_logits;   // d<g,v>/d(label logits), soft mode only (else 0x0)
};

// Computes, in one sweep: the plain gradient g, the Hessian-vector product
// H v, and the mixed products d<g,v>/dX and d<g,v>/d(label logits).
//
// Method: <g, v> equals the tangent of the loss under a forward (JVP) pass
// with parameter tangent v, i.e. s = <G, Zdot_last> with G = (S - Y)/B. One
// reverse sweep over the combined primal+tangent recurrence then yields all
// gradients of s. Dense P x P matrices never appear; cost is a small constant
// times the plain backward pass.
template <typename T>
MixedSecondOrder<T> grad_and_hvp(const NetworkSpec& spec, std::span<const T> params,
                                 const Batch<T>& batch, std::span<const T> v) {
    batch.validate(spec);
    if (v.size() != spec.param_count())
        throw ShapeError("tangent vector length != parameter count");
    const ParamLayout lay(spec);
    const int L = static_cast<int>(spec.layers.size());
    const int B = batch.rows();
    const Activation act = spec.activation;

    // Primal forward with cache.
    ForwardCache<T> cache;
    Matrix<T> logits = forward(spec, params, batch.inputs, &cache);

    // Tangent forward: Zt_l = layer_l(W, At_l) + layer_l(V, A_l); At_0 = 0.
    // (The tangent of the bias is a constant shift, folded in via V's bias.)
    std::vector<Matrix<T>> zt(L);
    Matrix<T> at(B, spec.input_dim(), T(0));
    for (int l = 0; l < L; ++l) {
        const auto& desc = spec.layers[l];
        const auto& sl = lay.layer[l];
        Matrix<T> z1(B, desc.out_dim);
        detail::layer_apply(desc, params.data() + sl.w_off, static_cast<const T*>(nullptr), at, z1);
        Matrix<T> z2(B, desc.out_dim);
        detail::layer_apply(desc, v.data() + sl.w_off, sl.b_len ? v.data() + sl.b_off : nullptr,
                            cache.act[l], z2);
        for (std::size_t i = 0; i < z1.size(); ++i) z1.data[i] += z2.data[i];
        zt[l] = std::move(z1);
        if (l < L - 1) {
            const Matrix<T>& z = cache.pre[l];
            Matrix<T> next(B, desc.out_dim);
            for (std::size_t i = 0; i < next.size(); ++i)
                next.data[i] = act_deriv(act, z.data[i]) * zt[l].data[i];
            at = std::move(next);
        }
    }
    const Matrix<T>& logits_t = zt[L - 1];

    // Loss-head pieces.
    Matrix<T> smax(B, spec.classes);
    kernels::row_softmax(logits.data.data(), smax.data.data(), B, spec.classes);
    Matrix<T> G = ce_logit_grad(logits, batch.labels);

    MixedSecondOrder<T> out;
    out.grad = backward(spec, params, cache, G);

    // Reverse sweep for s = <G, logits_t>.
    // Seeds: adjoint(logits_t) = G; adjoint(G) = logits_t.
    // G = (S - Y)/B gives adjoint(S) = logits_t / B and adjoint(Y) = -logits_t / B.
    // S = softmax(logits) gives adjoint(logits) via the softmax vjp.
    const T invb = T(1) / static_cast<T>(B);
    Matrix<T> abar(B, spec.classes);  // adjoint of primal logits
    for (int r = 0; r < B; ++r) {
        const T* srow = smax.row(r);
        const T* lt = logits_t.row(r);
        T inner = T(0);
        for (int j = 0; j < spec.classes; ++j) inner += srow[j] * lt[j] * invb;
        for (int j = 0; j < spec.classes; ++j)
            abar.at(r, j) = srow[j] * (lt[j] * invb - inner);
    }

    // Label-logit gradients (soft mode): Y = softmax(lambda) row-wise, so the
    // same vjp shape applies with adjoint(Y) = -logits_t / B.
    if (batch.labels.mode == LabelMode::soft) {
        out.dlabel_logits = Matrix<T>(B, spec.classes);
        for (int r = 0; r < B; ++r) {
            const T* yrow = batch.labels.soft.row(r);
            const T* lt = logits_t.row(r);
            T inner = T(0);
            for (int j = 0; j < spec.classes; ++j) inner += yrow[j] * (-lt[j] * invb);
            for (int j = 0; j < spec.classes; ++j)
                out.dlabel_logits.at(r, j) = yrow[j] * (-lt[j] * invb - inner);
        }
    }

    out.hvp.assign(lay.total, T(0));
    Matrix<T> qbar = G;  // adjoint of the tangent stream at the current level
    // abar: adjoint of the primal stream at the current level.
    for (int l = L - 1; l >= 0; --l) {
        const auto& desc = spec.layers[l];
        const auto& sl = lay.layer[l];

        // Adjoints of this layer's pre-activation pair (Z_l, Zt_l).
        Matrix<T> zbar, ztbar;
        if (l == L - 1) {
            zbar = std::move(abar);
            ztbar = std::move(qbar);
        } else {
            const Matrix<T>& z = cache.pre[l];
            zbar = Matrix<T>(B, desc.out_dim);
            ztbar = Matrix<T>(B, desc.out_dim);
            for (std::size_t i = 0; i < zbar.size(); ++i) {
                const T d1 = act_deriv(act, z.data[i]);
                const T d2 = act_second(act, z.data[i]);
                zbar.data[i] = abar.data[i] * d1 + qbar.data[i] * d2 * zt[l].data[i];
                ztbar.data[i] = qbar.data[i] * d1;
            }
        }

        // Tangent stream At_l needs recomputing for the weight term (cheap).
        Matrix<T> at_l(B, desc.in_dim, T(0));
        if (l > 0) {
            const Matrix<T>& zprev = cache.pre[l - 1];
            for (std::size_t i = 0; i < at_l.size(); ++i)
                at_l.data[i] = act_deriv(act, zprev.data[i]) * zt[l - 1].data[i];
        }

        // Parameter gradients of s: primal use (A_l, zbar) + tangent use (At_l, ztbar).
        detail::layer_grad_params(desc, cache.act[l], zbar, out.hvp.data() + sl.w_off,
                                  sl.b_len ? out.hvp.data() + sl.b_off : nullptr, false);
        detail::layer_grad_params(desc, at_l, ztbar, out.hvp.data() + sl.w_off,
                                  static_cast<T*>(nullptr), true);

        // Downstream adjoints.
        Matrix<T> abar_next(B, desc.in_dim, T(0));
        detail::layer_apply_transpose(desc, params.data() + sl.w_off, zbar, abar_next, true);
        detail::layer_apply_transpose(desc, v.data() + sl.w_off, ztbar, abar_next, true);
        if (l > 0) {
            Matrix<T> qbar_next(B, desc.in_dim, T(0));
            detail::layer_apply_transpose(desc, params.data() + sl.w_off, ztbar, qbar_next, true);
            qbar = std::move(qbar_next);
            abar = std::move(abar_next);
        } else {
            out.dinputs = std::move(abar_next);
        }
    }
    return out;
}

// -------------------------------------------------------------------- init

// Seeded Gaussian init, std 1/sqrt(fan_in); biases zero. Draw order is fixed
// (layer by layer, weights in storage order) so initializations are
// reproducible.
template <typename T>
std::vector<T> init_params(const NetworkSpec& spec, std::uint64_t seed) {
    const ParamLayout lay(spec);
    std::vector<T> p(lay.total, T(0));
    Rng rng(seed);
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& desc = spec.layers[l];
        const auto& sl = lay.layer[l];
        const int fan_in = desc.kind == LayerDesc::Kind::dense
                               ? desc.in_dim
                               : desc.in_ch * desc.ksize * desc.ksize;
        const double std_dev = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < sl.w_len; ++i)
            p[sl.w_off + i] = static_cast<T>(rng.normal() * std_dev);
    }
    return p;
}

}  // namespace distillforge::diffnet
