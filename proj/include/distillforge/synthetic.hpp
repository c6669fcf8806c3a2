#pragma once

// The learnable distilled set: images, labels (fixed class indices or
// trainable soft-label logits), and the trainable inner-loop step size.

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "distillforge/data.hpp"
#include "distillforge/errors.hpp"
#include "distillforge/labels.hpp"
#include "distillforge/net.hpp"
#include "distillforge/unroll.hpp"

namespace distillforge::distill {

template <typename T>
struct SyntheticDataset {
    Matrix<T> images;                     // classes*ipc rows, normalized pixel space
    diffnet::LabelMode mode = diffnet::LabelMode::hard;
    std::vector<int> hard_labels;         // hard mode: fixed, never trained
    Matrix<T> label_logits;               // soft mode: trainable logits, else 0x0
    T alpha = T(0);                       // trainable inner-loop step size
    int classes = 0;
    int ipc = 0;
    datakit::ChannelLayout layout;
    datakit::NormStats stats;             // stats the images are normalized with

    int size() const { return images.rows; }

    // Labels as consumed by the inner loss: hard indices, or softmax rows of
    // the logits.
    diffnet::LabelSet<T> labels() const {
        if (mode == diffnet::LabelMode::hard) return diffnet::LabelSet<T>::hard_of(hard_labels);
        Matrix<T> y(label_logits.rows, label_logits.cols);
        kernels::row_softmax(label_logits.data.data(), y.data.data(), label_logits.rows,
                             label_logits.cols);
        return diffnet::LabelSet<T>::soft_of(std::move(y));
    }

    void validate() const {
        if (classes < 2 || ipc < 1) throw ValidationError("need classes >= 2 and ipc >= 1");
        if (images.rows != classes * ipc)
            throw ShapeError("synthetic set has " + std::to_string(images.rows) + " rows, want " +
                             std::to_string(classes * ipc));
        if (images.cols != layout.dim()) throw ShapeError("synthetic image dim != layout dim");
        if (!all_finite(images)) throw NumericError("synthetic images contain non-finite values");
        if (!(alpha > T(0))) throw ValidationError("inner step size must be positive");
        if (mode == diffnet::LabelMode::hard) {
            if (static_cast<int>(hard_labels.size()) != images.rows)
                throw ShapeError("hard label count != synthetic rows");
            if (hard_labels != default_labels(classes, ipc))
                throw ValidationError("hard labels deviate from class-major default order");
            if (label_logits.size() != 0)
                throw ValidationError("hard-label set must not carry soft-label state");
        } else {
            if (label_logits.rows != images.rows || label_logits.cols != classes)
                throw ShapeError("label logit shape != rows x classes");
            if (!all_finite(label_logits))
                throw NumericError("label logits contain non-finite values");
        }
    }

    std::string digest() const {
        std::uint64_t h = fnv1a64(&classes, sizeof(classes));
        h = fnv1a64(&ipc, sizeof(ipc), h);
        const int m = mode == diffnet::LabelMode::hard ? 0 : 1;
        h = fnv1a64(&m, sizeof(m), h);
        h = fnv1a64(images.data.data(), images.size() * sizeof(T), h);
        if (mode == diffnet::LabelMode::hard) {
            h = fnv1a64(hard_labels.data(), hard_labels.size() * sizeof(int), h);
        } else {
            h = fnv1a64(label_logits.data.data(), label_logits.size() * sizeof(T), h);
        }
        const double a = static_cast<double>(alpha);
        h = fnv1a64(&a, sizeof(a), h);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

    // Lightweight view the inner unroll consumes.
    diffnet::SynView<T> view() const {
        return diffnet::SynView<T>{&images, labels(), alpha, digest()};
    }
};

// Initialize the distilled set from seeded real examples (already
// normalized). Hard mode: plain stratified sample with the class-major
// default labels pinned. Soft mode: sample only among examples a pretrained
// snapshot classifies correctly, and seed each label-logit row with that
// model's own logits for the chosen image.
template <typename T>
SyntheticDataset<T> init_synthetic(const datakit::Dataset<T>& real, int ipc,
                                   diffnet::LabelMode mode, T alpha_init, std::uint64_t seed,
                                   const diffnet::NetworkSpec* pretrained_spec = nullptr,
                                   std::span<const T> pretrained = {}) {
    real.validate();
    if (!real.normalized) throw ValidationError("initialize from a normalized dataset");
    if (!(alpha_init > T(0))) throw ValidationError("inner step size must be positive");

    SyntheticDataset<T> syn;
    syn.classes = real.classes;
    syn.ipc = ipc;
    syn.layout = real.layout;
    syn.stats = real.stats;
    syn.mode = mode;
    syn.alpha = alpha_init;

    std::vector<int> rows;
    Matrix<T> logits;
    if (mode == diffnet::LabelMode::hard) {
        rows = datakit::stratified_indices(real, ipc, seed);
    } else {
        if (!pretrained_spec || pretrained.empty())
            throw ValidationError("soft-label initialization needs a pretrained snapshot");
        logits = diffnet::forward(*pretrained_spec, pretrained, real.images);
        std::vector<std::vector<int>> correct(real.classes);
        for (int r = 0; r < real.size(); ++r) {
            const T* z = logits.row(r);
            int best = 0;
            for (int j = 1; j < logits.cols; ++j)
                if (z[j] > z[best]) best = j;
            if (best == real.labels[r]) correct[real.labels[r]].push_back(r);
        }
        rows = datakit::pick_per_class(std::move(correct), ipc, seed,
                                       "correctly classified examples");
    }

    syn.images = Matrix<T>(static_cast<int>(rows.size()), real.images.cols);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(real.images.row(rows[i]), real.images.row(rows[i]) + real.images.cols,
                  syn.images.row(static_cast<int>(i)));

    // Both pick paths return rows grouped by ascending class, matching the
    // class-major default labeling.
    const std::vector<int> want = default_labels(real.classes, ipc);
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (real.labels[rows[i]] != want[i])
            throw ValidationError("selected rows are not in class-major order");

    if (mode == diffnet::LabelMode::hard) {
        syn.hard_labels = want;
    } else {
        syn.label_logits = Matrix<T>(syn.images.rows, syn.classes);
        for (std::size_t i = 0; i < rows.size(); ++i)
            std::copy(logits.row(rows[i]), logits.row(rows[i]) + logits.cols,
                      syn.label_logits.row(static_cast<int>(i)));
    }
    syn.validate();
    return syn;
}

}  // namespace distillforge::distill
