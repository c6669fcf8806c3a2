#pragma once

// Official-style evaluation of a distilled set: regenerate the labels in the
// fixed class-major order, train fresh surrogates from scratch on the images
// with plain hard-label cross-entropy, and report test accuracy. Stored
// labels are never consulted — that blindness is the behavior under test.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "distillforge/data.hpp"
#include "distillforge/errors.hpp"
#include "distillforge/labels.hpp"
#include "distillforge/net.hpp"
#include "distillforge/synthetic.hpp"
#include "distillforge/traj.hpp"

namespace distillforge::evalharness {

using distillforge::default_labels;

struct EvalConfig {
    diffnet::NetworkSpec spec;
    int epochs = 20;
    double lr = 0.05;
    double momentum = 0.9;
    int batch = 64;
    int num_seeds = 5;
    std::uint64_t base_seed = 1;

    void validate() const {
        spec.validate();
        if (epochs < 0) throw ValidationError("evaluation epochs must be >= 0");
        if (num_seeds < 1) throw ValidationError("evaluation needs at least one seed");
        if (!(lr > 0.0)) throw ValidationError("evaluation learning rate must be positive");
        if (momentum < 0.0 || momentum >= 1.0)
            throw ValidationError("evaluation momentum must lie in [0, 1)");
        if (batch < 1) throw ValidationError("evaluation batch size must be >= 1");
    }

    std::string digest() const {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%s|e%d|lr%.17g|mu%.17g|b%d|s%d|seed%llu",
                      spec.describe().c_str(), epochs, lr, momentum, batch, num_seeds,
                      static_cast<unsigned long long>(base_seed));
        const std::uint64_t h = fnv1a64(buf, std::strlen(buf));
        char hex[20];
        std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
        return hex;
    }
};

struct EvalReport {
    std::vector<std::uint64_t> seeds;
    std::vector<double> accuracies;
    double mean = 0.0;
    double stddev = 0.0;  // population
    std::string config_digest;

    void finalize() {
        if (accuracies.empty()) throw ValidationError("report has no accuracies");
        double s = 0.0;
        for (double a : accuracies) s += a;
        mean = s / static_cast<double>(accuracies.size());
        double var = 0.0;
        for (double a : accuracies) var += (a - mean) * (a - mean);
        stddev = std::sqrt(var / static_cast<double>(accuracies.size()));
    }

    std::string to_csv() const {
        auto g17 = [](double v) {
            char buf[40];
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            return std::string(buf);
        };
        std::string out = "seed, accuracy\n";
        for (std::size_t i = 0; i < accuracies.size(); ++i)
            out += std::to_string(seeds[i]) + ", " + g17(accuracies[i]) + "\n";
        out += "summary, " + g17(mean) + ", " + g17(stddev) + "\n";
        return out;
    }
};

// Train fresh networks on (images, regenerated default labels) and measure
// accuracy on the test set, once per evaluation seed. A pure function of the
// images: whatever labels the artifact carried cannot reach this code path.
template <typename T>
EvalReport evaluate(const Matrix<T>& images, const datakit::Dataset<T>& test,
                    const EvalConfig& cfg) {
    cfg.validate();
    test.validate();
    if (images.rows < 1) throw ValidationError("no distilled images to evaluate");
    if (images.cols != test.images.cols)
        throw ShapeError("distilled image dim " + std::to_string(images.cols) +
                         " != test image dim " + std::to_string(test.images.cols));
    if (images.cols != cfg.spec.input_dim())
        throw ShapeError("distilled image dim != network input dim");
    if (images.rows % test.classes != 0)
        throw ShapeError("distilled row count " + std::to_string(images.rows) +
                         " is not divisible by " + std::to_string(test.classes) + " classes");
    const int ipc = images.rows / test.classes;

    datakit::Dataset<T> train;
    train.images = images;
    train.labels = default_labels(test.classes, ipc);
    train.classes = test.classes;
    train.layout = test.layout;
    train.stats = test.stats;
    train.normalized = test.normalized;

    EvalReport rep;
    rep.config_digest = cfg.digest();
    for (int k = 0; k < cfg.num_seeds; ++k) {
        const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(k);
        std::vector<T> theta;
        if (cfg.epochs == 0) {
            theta = diffnet::init_params<T>(cfg.spec, Rng::mix(seed, 1));
        } else {
            trajstore::ExpertTrainConfig tc;
            tc.epochs = cfg.epochs;
            tc.lr = cfg.lr;
            tc.momentum = cfg.momentum;
            tc.batch = cfg.batch;
            tc.seed = seed;
            theta = trajstore::train_expert(cfg.spec, train, tc).snapshots.back();
        }
        rep.seeds.push_back(seed);
        rep.accuracies.push_back(
            trajstore::dataset_stats(cfg.spec, std::span<const T>(theta), test).accuracy);
    }
    rep.finalize();
    return rep;
}

// Control condition: a class-stratified random subset of the real training
// set, evaluated exactly like a distilled artifact.
template <typename T>
EvalReport baseline_random_subset(const datakit::Dataset<T>& train, const datakit::Dataset<T>& test,
                                  int ipc, const EvalConfig& cfg, std::uint64_t subset_seed) {
    const auto subset = datakit::stratified_subset(train, ipc, subset_seed);
    return evaluate(subset.images, test, cfg);
}

// ------------------------------------------------------------- label audit

struct LabelMismatch {
    int index = 0;
    int stored = 0;    // stored hard label, or argmax of the soft row
    int expected = 0;  // default-order label
    bool operator==(const LabelMismatch&) const = default;
};

// Compare an artifact's stored labels (hard indices, or argmax of soft-label
// rows) against the default order the evaluation harness regenerates.
template <typename T>
std::vector<LabelMismatch> label_consistency_check(int classes, int ipc,
                                                   const std::vector<int>* hard,
                                                   const Matrix<T>* soft) {
    const std::vector<int> expected = default_labels(classes, ipc);
    if (!hard && !soft)
        throw ValidationError("label audit needs stored hard labels or soft-label rows");
    const int n = classes * ipc;
    if (hard && static_cast<int>(hard->size()) != n)
        throw ShapeError("stored label count != classes * ipc");
    if (soft && (soft->rows != n || soft->cols != classes))
        throw ShapeError("soft label shape != (classes * ipc) x classes");

    std::vector<LabelMismatch> out;
    for (int i = 0; i < n; ++i) {
        int stored;
        if (hard) {
            stored = (*hard)[i];
        } else {
            const T* row = soft->row(i);
            stored = 0;
            for (int j = 1; j < classes; ++j)
                if (row[j] > row[stored]) stored = j;
        }
        if (stored != expected[i]) out.push_back({i, stored, expected[i]});
    }
    return out;
}

template <typename T>
std::vector<LabelMismatch> label_consistency_check(const distill::SyntheticDataset<T>& syn) {
    if (syn.mode == diffnet::LabelMode::hard)
        return label_consistency_check<T>(syn.classes, syn.ipc, &syn.hard_labels, nullptr);
    return label_consistency_check<T>(syn.classes, syn.ipc, nullptr, &syn.label_logits);
}

}  // namespace distillforge::evalharness
