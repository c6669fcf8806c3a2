#pragma once

// Expert trajectories: train a surrogate on the real dataset with seeded
// mini-batch SGD, snapshotting the parameters once per epoch (initialization
// included), and sample (start, target) snapshot pairs under the
// floating-bound matching-range schedule.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "distillforge/data.hpp"
#include "distillforge/errors.hpp"
#include "distillforge/kernels.hpp"
#include "distillforge/net.hpp"
#include "distillforge/rng.hpp"

namespace distillforge::trajstore {

struct ExpertTrainConfig {
    int epochs = 40;
    double lr = 0.05;
    double momentum = 0.9;
    int batch = 64;
    std::uint64_t seed = 1;

    void validate() const {
        if (epochs < 1) throw ValidationError("expert training needs at least 1 epoch");
        if (!(lr > 0.0)) throw ValidationError("expert learning rate must be positive");
        if (momentum < 0.0 || momentum >= 1.0)
            throw ValidationError("expert momentum must lie in [0, 1)");
        if (batch < 1) throw ValidationError("expert batch size must be >= 1");
    }
};

struct EpochStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

template <typename T>
struct Trajectory {
    std::string spec_digest;
    std::string dataset_digest;
    std::uint64_t seed = 0;
    std::vector<std::vector<T>> snapshots;  // index = epoch, 0..n inclusive of init
    // Sidecar metadata: the training hyper-parameters and per-epoch metrics.
    ExpertTrainConfig train;
    std::vector<EpochStats> epoch_stats;    // entry per trained epoch

    int epochs() const { return static_cast<int>(snapshots.size()) - 1; }
    std::size_t params() const { return snapshots.empty() ? 0 : snapshots.front().size(); }

    void validate() const {
        if (snapshots.size() < 2) throw ValidationError("trajectory needs at least 2 snapshots");
        for (const auto& s : snapshots) {
            if (s.size() != snapshots.front().size())
                throw ShapeError("trajectory snapshots differ in length");
            if (!all_finite(std::span<const T>(s)))
                throw NumericError("trajectory contains non-finite parameters");
        }
    }
};

// Mean loss and accuracy of `params` on the full dataset (hard labels).
template <typename T>
EpochStats dataset_stats(const diffnet::NetworkSpec& spec, std::span<const T> params,
                         const datakit::Dataset<T>& ds) {
    const Matrix<T> logits = diffnet::forward(spec, params, ds.images);
    EpochStats st;
    st.loss = static_cast<double>(diffnet::cross_entropy(logits, diffnet::LabelSet<T>::hard_of(ds.labels)));
    int hits = 0;
    for (int r = 0; r < logits.rows; ++r) {
        const T* z = logits.row(r);
        int best = 0;
        for (int j = 1; j < logits.cols; ++j)
            if (z[j] > z[best]) best = j;
        if (best == ds.labels[r]) ++hits;
    }
    st.accuracy = static_cast<double>(hits) / static_cast<double>(logits.rows);
    return st;
}

// Plain seeded SGD-with-momentum training of a surrogate on the real data,
// one snapshot per epoch. Deterministic: init and shuffles derive from the
// config seed only.
template <typename T>
Trajectory<T> train_expert(const diffnet::NetworkSpec& spec, const datakit::Dataset<T>& ds,
                           const ExpertTrainConfig& cfg) {
    spec.validate();
    ds.validate();
    cfg.validate();
    if (ds.size() < 1) throw ValidationError("expert training needs a nonempty dataset");

    Trajectory<T> traj;
    traj.spec_digest = spec.digest();
    traj.dataset_digest = ds.digest();
    traj.seed = cfg.seed;
    traj.train = cfg;

    std::vector<T> theta = diffnet::init_params<T>(spec, Rng::mix(cfg.seed, 1));
    std::vector<T> vel(theta.size(), T(0));
    traj.snapshots.push_back(theta);

    Rng shuffler(Rng::mix(cfg.seed, 2));
    std::vector<int> order(ds.size());
    const T lr = static_cast<T>(cfg.lr);
    const T mu = static_cast<T>(cfg.momentum);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (int i = 0; i < ds.size(); ++i) order[i] = i;
        shuffler.shuffle(order);
        for (int at = 0; at < ds.size(); at += cfg.batch) {
            const int take = std::min(cfg.batch, ds.size() - at);
            diffnet::Batch<T> b;
            b.inputs = Matrix<T>(take, ds.images.cols);
            std::vector<int> y(take);
            for (int i = 0; i < take; ++i) {
                const int r = order[at + i];
                std::copy(ds.images.row(r), ds.images.row(r) + ds.images.cols, b.inputs.row(i));
                y[i] = ds.labels[r];
            }
            b.labels = diffnet::LabelSet<T>::hard_of(std::move(y));
            const std::vector<T> g = diffnet::grad(spec, std::span<const T>(theta), b);
            for (std::size_t i = 0; i < theta.size(); ++i) {
                vel[i] = mu * vel[i] + g[i];
                theta[i] -= lr * vel[i];
            }
        }
        if (!all_finite(std::span<const T>(theta)))
            throw DivergenceError("expert training produced non-finite parameters", epoch);
        traj.snapshots.push_back(theta);
        traj.epoch_stats.push_back(dataset_stats(spec, std::span<const T>(theta), ds));
    }
    return traj;
}

// -------------------------------------------------------------- pair access

// Returns snapshots (t, t+M) by value; out-of-range indices are an error,
// never clamped.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> get_pair(const Trajectory<T>& traj, int t, int m) {
    if (t < 0 || m < 0 || t + m > traj.epochs())
        throw ValidationError("snapshot pair (" + std::to_string(t) + ", " +
                              std::to_string(t + m) + ") outside trajectory of " +
                              std::to_string(traj.epochs()) + " epochs");
    return {traj.snapshots[t], traj.snapshots[t + m]};
}

// d(t) = ||theta*_t - theta*_{t+M}|| for every valid t.
template <typename T>
std::vector<double> distance_profile(const Trajectory<T>& traj, int m) {
    if (m < 0 || m > traj.epochs()) throw ValidationError("distance gap outside trajectory");
    std::vector<double> d;
    std::vector<T> diff(traj.params());
    for (int t = 0; t + m <= traj.epochs(); ++t) {
        const auto& a = traj.snapshots[t];
        const auto& b = traj.snapshots[t + m];
        for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = a[i] - b[i];
        d.push_back(std::sqrt(static_cast<double>(kernels::sumsq(diff.data(), diff.size()))));
    }
    return d;
}

// ---------------------------------------------------------------- schedule

// Floating-bound sampling range: start epochs come uniformly from
// {t_minus .. T(iteration)} where the bound T grows by one epoch every
// `interval` outer iterations from t_init up to the hard cap t_plus.
struct MatchingRangeSchedule {
    int t_minus = 0;
    int t_init = 0;
    int t_plus = 0;
    int interval = 100;

    void validate() const {
        if (t_minus < 0 || t_minus > t_init || t_init > t_plus)
            throw ValidationError("matching range needs 0 <= T- <= Tinit <= T+");
        if (interval < 1) throw ValidationError("schedule interval must be >= 1");
    }
    // Ceiling usable with an n-epoch trajectory and gap M.
    void validate_against(int epochs, int m) const {
        validate();
        if (t_plus > epochs - m)
            throw ValidationError("T+ = " + std::to_string(t_plus) + " exceeds n - M = " +
                                  std::to_string(epochs - m));
    }

    int bound(long long iteration) const {
        const long long grown = t_init + iteration / interval;
        return static_cast<int>(std::min<long long>(grown, t_plus));
    }

    int sample_start(long long iteration, Rng& rng) const {
        const int hi = bound(iteration);
        return t_minus + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - t_minus) + 1));
    }
};

}  // namespace distillforge::trajstore
