#pragma once

// Differentiable inner loop: run N SGD steps on the synthetic set from a
// given parameter start, record everything needed on a tape, and push an
// outer gradient back through the whole unroll exactly (reverse mode with
// Hessian-vector products — no finite differencing, no truncation).

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "distillforge/errors.hpp"
#include "distillforge/kernels.hpp"
#include "distillforge/net.hpp"

namespace distillforge::diffnet {

// What the unroll needs to know about the synthetic set: pixel rows, the
// labels as the inner loss consumes them (softmax already applied in soft
// mode), the shared step size, and a digest binding tapes to one state.
template <typename T>
struct SynView {
    const Matrix<T>* images = nullptr;
    LabelSet<T> labels;
    T alpha = T(0);
    std::string digest;

    int rows() const { return images->rows; }
    void validate() const {
        if (!images || images->rows < 1) throw ValidationError("synthetic view has no images");
        if (!(alpha >= T(0))) throw ValidationError("inner step size must be nonnegative");
        if (labels.rows() != images->rows) throw ShapeError("label rows != image rows");
    }
};

// Which synthetic rows feed each inner step. A batch size covering the whole
// set means every step sees all rows in order; smaller batches walk seeded
// shuffled chunks, reshuffling each pass so no row repeats within a pass.
inline std::vector<std::vector<int>> batch_schedule(int rows, int batch, int steps,
                                                    std::uint64_t seed) {
    if (rows < 1 || steps < 0) throw ValidationError("batch schedule needs rows >= 1, steps >= 0");
    if (batch < 1) throw ValidationError("batch size must be >= 1");
    std::vector<std::vector<int>> out;
    out.reserve(steps);
    if (batch >= rows) {
        std::vector<int> all(rows);
        for (int i = 0; i < rows; ++i) all[i] = i;
        for (int s = 0; s < steps; ++s) out.push_back(all);
        return out;
    }
    Rng rng(seed);
    std::vector<int> perm(rows);
    int cursor = rows;  // force a shuffle on first use
    for (int s = 0; s < steps; ++s) {
        if (cursor >= rows) {
            for (int i = 0; i < rows; ++i) perm[i] = i;
            rng.shuffle(perm);
            cursor = 0;
        }
        const int take = std::min(batch, rows - cursor);
        out.emplace_back(perm.begin() + cursor, perm.begin() + cursor + take);
        cursor += take;
    }
    return out;
}

template <typename T>
struct UnrollTape {
    std::vector<std::vector<T>> theta;     // steps+1 parameter states
    std::vector<std::vector<int>> batches; // row indices used at each step
    std::vector<T> alphas;                 // step size used at each step
    std::string syn_digest;                // binds the tape to one synthetic state
    int syn_rows = 0;
    LabelMode mode = LabelMode::hard;

    int steps() const { return static_cast<int>(alphas.size()); }
    const std::vector<T>& final_theta() const { return theta.back(); }

    void validate() const {
        if (theta.size() != alphas.size() + 1 || batches.size() != alphas.size())
            throw ValidationError("tape arrays disagree on step count");
        for (const auto& t : theta)
            if (t.size() != theta.front().size())
                throw ShapeError("tape parameter states differ in length");
    }
};

namespace detail {

template <typename T>
Batch<T> gather_batch(const SynView<T>& syn, const std::vector<int>& idx) {
    const Matrix<T>& img = *syn.images;
    Batch<T> b;
    b.inputs = Matrix<T>(static_cast<int>(idx.size()), img.cols);
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy(img.row(idx[i]), img.row(idx[i]) + img.cols, b.inputs.row(static_cast<int>(i)));
    if (syn.labels.mode == LabelMode::hard) {
        std::vector<int> y(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) y[i] = syn.labels.hard[idx[i]];
        b.labels = LabelSet<T>::hard_of(std::move(y));
    } else {
        Matrix<T> y(static_cast<int>(idx.size()), syn.labels.soft.cols);
        for (std::size_t i = 0; i < idx.size(); ++i)
            std::copy(syn.labels.soft.row(idx[i]), syn.labels.soft.row(idx[i]) + syn.labels.soft.cols,
                      y.row(static_cast<int>(i)));
        b.labels = LabelSet<T>::soft_of(std::move(y));
    }
    return b;
}

}  // namespace detail

// Run `steps` plain SGD steps theta <- theta - alpha * dl/dtheta on the
// synthetic set, starting from `theta_start`. Records every intermediate
// state. Throws DivergenceError naming the offending step if parameters stop
// being finite. Pass `per_step_alphas` to override the shared syn.alpha.
template <typename T>
UnrollTape<T> unroll_inner(const NetworkSpec& spec, std::span<const T> theta_start,
                           const SynView<T>& syn, int steps, int batch_size,
                           std::uint64_t batch_seed, std::span<const T> per_step_alphas = {}) {
    syn.validate();
    check_params(spec, theta_start);
    if (steps < 0) throw ValidationError("step count must be >= 0");
    if (!per_step_alphas.empty() && static_cast<int>(per_step_alphas.size()) != steps)
        throw ShapeError("per-step alpha count != step count");

    UnrollTape<T> tape;
    tape.syn_digest = syn.digest;
    tape.syn_rows = syn.rows();
    tape.mode = syn.labels.mode;
    tape.batches = batch_schedule(syn.rows(), batch_size, steps, batch_seed);
    tape.alphas.resize(steps);
    for (int s = 0; s < steps; ++s)
        tape.alphas[s] = per_step_alphas.empty() ? syn.alpha : per_step_alphas[s];

    std::vector<T> theta(theta_start.begin(), theta_start.end());
    tape.theta.reserve(steps + 1);
    tape.theta.push_back(theta);
    for (int s = 0; s < steps; ++s) {
        const Batch<T> b = detail::gather_batch(syn, tape.batches[s]);
        const std::vector<T> g = grad(spec, std::span<const T>(theta), b);
        kernels::axpy(-tape.alphas[s], g.data(), theta.data(), theta.size());
        if (!all_finite(std::span<const T>(theta)))
            throw DivergenceError("inner unroll produced non-finite parameters", s);
        tape.theta.push_back(theta);
    }
    return tape;
}

// Re-run the recorded unroll; the result is bitwise identical to the taped
// final state (same kernels, same order).
template <typename T>
std::vector<T> replay(const NetworkSpec& spec, const UnrollTape<T>& tape, const SynView<T>& syn) {
    tape.validate();
    if (tape.syn_digest != syn.digest)
        throw ValidationError("tape was recorded against a different synthetic state");
    std::vector<T> theta = tape.theta.front();
    for (int s = 0; s < tape.steps(); ++s) {
        const Batch<T> b = detail::gather_batch(syn, tape.batches[s]);
        const std::vector<T> g = grad(spec, std::span<const T>(theta), b);
        kernels::axpy(-tape.alphas[s], g.data(), theta.data(), theta.size());
    }
    return theta;
}

template <typename T>
struct HyperGrads {
    Matrix<T> images;            // d(outer)/d(synthetic pixels)
    Matrix<T> label_logits;      // d(outer)/d(label logits); 0x0 in hard mode
    T alpha_total = T(0);        // d(outer)/d(shared step size)
    std::vector<T> alpha_per_step;
};

// Exact reverse-mode sweep through the taped unroll. `d_outer` is the outer
// loss gradient at the final parameters; each step peels off one SGD update:
//   v_i = v_{i+1} - alpha_i * H_i v_{i+1}
//   d(alpha_i) = -<g_i, v_{i+1}>
//   d(pixels/labels) -= alpha_i * (mixed second-order products with v_{i+1})
template <typename T>
HyperGrads<T> hypergrad(const NetworkSpec& spec, const UnrollTape<T>& tape, const SynView<T>& syn,
                        std::span<const T> d_outer) {
    tape.validate();
    if (tape.syn_digest != syn.digest)
        throw ValidationError("tape was recorded against a different synthetic state");
    if (d_outer.size() != spec.param_count())
        throw ShapeError("outer gradient length != parameter count");
    if (!all_finite(d_outer)) throw NumericError("outer gradient is not finite");

    const int N = tape.steps();
    const Matrix<T>& img = *syn.images;

    HyperGrads<T> hg;
    hg.images = Matrix<T>(img.rows, img.cols, T(0));
    if (syn.labels.mode == LabelMode::soft)
        hg.label_logits = Matrix<T>(syn.labels.soft.rows, syn.labels.soft.cols, T(0));
    hg.alpha_per_step.assign(N, T(0));

    std::vector<T> v(d_outer.begin(), d_outer.end());
    for (int s = N - 1; s >= 0; --s) {
        const std::vector<int>& idx = tape.batches[s];
        const Batch<T> b = detail::gather_batch(syn, idx);
        const MixedSecondOrder<T> mso =
            grad_and_hvp(spec, std::span<const T>(tape.theta[s]), b, std::span<const T>(v));
        const T a = tape.alphas[s];

        hg.alpha_per_step[s] = -kernels::dot(mso.grad.data(), v.data(), v.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const int r = idx[i];
            const T* src = mso.dinputs.row(static_cast<int>(i));
            T* dst = hg.images.row(r);
            for (int j = 0; j < hg.images.cols; ++j) dst[j] -= a * src[j];
        }
        if (syn.labels.mode == LabelMode::soft) {
            for (std::size_t i = 0; i < idx.size(); ++i) {
                const int r = idx[i];
                const T* src = mso.dlabel_logits.row(static_cast<int>(i));
                T* dst = hg.label_logits.row(r);
                for (int j = 0; j < hg.label_logits.cols; ++j) dst[j] -= a * src[j];
            }
        }
        kernels::axpy(-a, mso.hvp.data(), v.data(), v.size());
        if (!all_finite(std::span<const T>(v)))
            throw NumericError("hypergradient sweep produced non-finite adjoints at step " +
                               std::to_string(s));
    }
    hg.alpha_total = kernels::blocked_sum(hg.alpha_per_step.data(), hg.alpha_per_step.size());
    return hg;
}

}  // namespace distillforge::diffnet
