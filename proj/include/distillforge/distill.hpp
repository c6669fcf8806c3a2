#pragma once

// The outer distillation loop: sample an expert segment, unroll the inner
// optimizer on the synthetic set from the segment's start, measure how close
// the unrolled parameters land to the segment's end relative to how far the
// expert itself moved, and descend that ratio.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "distillforge/errors.hpp"
#include "distillforge/kernels.hpp"
#include "distillforge/rng.hpp"
#include "distillforge/synthetic.hpp"
#include "distillforge/traj.hpp"
#include "distillforge/unroll.hpp"

namespace distillforge::distill {

// The expert didn't move between the sampled snapshots, so the normalized
// matching loss has a zero denominator.
struct DegeneratePairError : NumericError {
    explicit DegeneratePairError(const std::string& msg) : NumericError(msg) {}
};

// ||theta_end - theta_target||^2 / ||theta_expert_start - theta_target||^2
template <typename T>
T matching_loss(std::span<const T> theta_end, std::span<const T> theta_target,
                std::span<const T> theta_expert_start) {
    if (theta_end.size() != theta_target.size() || theta_target.size() != theta_expert_start.size())
        throw ShapeError("matching loss needs three equal-length parameter vectors");
    std::vector<T> diff(theta_end.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = theta_expert_start[i] - theta_target[i];
    const T denom = kernels::sumsq(diff.data(), diff.size());
    if (denom == T(0))
        throw DegeneratePairError("expert pair is degenerate: start equals target");
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = theta_end[i] - theta_target[i];
    return kernels::sumsq(diff.data(), diff.size()) / denom;
}

struct DistillConfig {
    int n_inner = 5;   // inner SGD steps per iteration (N)
    int m_gap = 1;     // expert snapshot gap (M)
    trajstore::MatchingRangeSchedule schedule;
    long long iterations = 10000;
    int syn_batch = 256;  // inner batch size; >= |syn| means full batch
    double lr_img = 10.0;
    double lr_label = 1.0;
    double lr_alpha = 1e-4;
    diffnet::LabelMode label_mode = diffnet::LabelMode::hard;
    int experts = 5;  // pool size the CLI generates/loads
    std::uint64_t seed = 1;

    void validate() const {
        if (n_inner < 1) throw ValidationError("inner step count N must be >= 1");
        if (m_gap < 1) throw ValidationError("expert gap M must be >= 1");
        if (iterations < 1) throw ValidationError("iteration count must be >= 1");
        if (syn_batch < 1) throw ValidationError("synthetic batch size must be >= 1");
        if (lr_img < 0.0 || lr_label < 0.0 || lr_alpha < 0.0)
            throw ValidationError("outer learning rates must be >= 0");
        if (experts < 1) throw ValidationError("expert pool size must be >= 1");
        schedule.validate();
    }
};

struct MetricsRecord {
    long long iteration = 0;
    double matching_loss = 0.0;
    int t = 0;       // sampled expert start epoch
    int bound = 0;   // floating upper bound T at this iteration
    double alpha = 0.0;
    double grad_norm_images = 0.0;
    double grad_norm_labels = 0.0;
    double grad_norm_alpha = 0.0;
    bool skipped = false;  // degenerate expert pair
};

struct MetricsLog {
    std::vector<MetricsRecord> records;
    std::vector<std::string> warnings;

    static std::string csv_header() {
        return "iteration, matching_loss, t, T, alpha, grad_norm_images, grad_norm_labels, "
               "grad_norm_alpha";
    }

    std::string to_csv() const {
        auto g17 = [](double v) {
            char buf[40];
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            return std::string(buf);
        };
        std::string out = csv_header() + "\n";
        for (const auto& r : records) {
            out += std::to_string(r.iteration) + ", " + g17(r.matching_loss) + ", " +
                   std::to_string(r.t) + ", " + std::to_string(r.bound) + ", " + g17(r.alpha) +
                   ", " + g17(r.grad_norm_images) + ", " + g17(r.grad_norm_labels) + ", " +
                   g17(r.grad_norm_alpha) + "\n";
        }
        return out;
    }
};

// Owns the synthetic state and the outer optimizer state (heavy-ball buffer
// for the images; plain SGD for label logits and the step size).
template <typename T>
class Distiller {
  public:
    static constexpr double kImageMomentum = 0.5;
    static constexpr T kAlphaFloor = T(1e-8);
    static constexpr long long kCheckpointEvery = 500;

    Distiller(diffnet::NetworkSpec spec, SyntheticDataset<T> syn, DistillConfig cfg)
        : spec_(std::move(spec)), syn_(std::move(syn)), cfg_(cfg),
          vel_img_(syn_.images.rows, syn_.images.cols, T(0)),
          rng_(Rng::mix(cfg.seed, 3)) {
        spec_.validate();
        cfg_.validate();
        syn_.validate();
        if (syn_.mode != cfg_.label_mode)
            throw ValidationError("synthetic set and config disagree on the label mode");
        if (spec_.input_dim() != syn_.images.cols)
            throw ShapeError("network input dim != synthetic image dim");
        if (spec_.classes != syn_.classes)
            throw ShapeError("network class count != synthetic class count");
    }

    const SyntheticDataset<T>& synthetic() const { return syn_; }
    const diffnet::NetworkSpec& spec() const { return spec_; }
    const DistillConfig& config() const { return cfg_; }

    // One outer iteration against a pool of expert trajectories. Draw order
    // per iteration is fixed (expert, start epoch, batch seed) so runs are
    // reproducible from the config seed alone.
    MetricsRecord step(const std::vector<trajstore::Trajectory<T>>& pool, long long iteration) {
        if (pool.empty()) throw ConfigError("expert pool is empty");
        const auto& traj = pool[rng_.below(pool.size())];
        const int t = cfg_.schedule.sample_start(iteration, rng_);
        const std::uint64_t batch_seed = rng_.next_u64();

        MetricsRecord rec;
        rec.iteration = iteration;
        rec.t = t;
        rec.bound = cfg_.schedule.bound(iteration);

        const auto [start, target] = trajstore::get_pair(traj, t, cfg_.m_gap);
        std::vector<T> diff(start.size());
        for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = start[i] - target[i];
        const T denom = kernels::sumsq(diff.data(), diff.size());
        if (denom == T(0)) {
            rec.skipped = true;
            rec.alpha = static_cast<double>(syn_.alpha);
            return rec;  // stalled expert segment; caller logs the warning
        }

        const diffnet::SynView<T> view = syn_.view();
        const auto tape = diffnet::unroll_inner(spec_, std::span<const T>(start), view,
                                                cfg_.n_inner, cfg_.syn_batch, batch_seed);
        const std::vector<T>& theta_hat = tape.final_theta();

        for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = theta_hat[i] - target[i];
        rec.matching_loss = static_cast<double>(kernels::sumsq(diff.data(), diff.size()) / denom);

        // d(loss)/d(theta_hat) of the normalized quadratic, taken analytically
        std::vector<T> d_outer(diff.size());
        const T scale = T(2) / denom;
        for (std::size_t i = 0; i < diff.size(); ++i) d_outer[i] = scale * diff[i];

        const auto hg = diffnet::hypergrad(spec_, tape, view, std::span<const T>(d_outer));

        const T mu = static_cast<T>(kImageMomentum);
        const T lri = static_cast<T>(cfg_.lr_img);
        for (std::size_t i = 0; i < vel_img_.size(); ++i) {
            vel_img_.data[i] = mu * vel_img_.data[i] + hg.images.data[i];
            syn_.images.data[i] -= lri * vel_img_.data[i];
        }
        if (syn_.mode == diffnet::LabelMode::soft) {
            const T lrl = static_cast<T>(cfg_.lr_label);
            for (std::size_t i = 0; i < syn_.label_logits.size(); ++i)
                syn_.label_logits.data[i] -= lrl * hg.label_logits.data[i];
        }
        syn_.alpha = std::max(syn_.alpha - static_cast<T>(cfg_.lr_alpha) * hg.alpha_total,
                              kAlphaFloor);

        if (!all_finite(syn_.images) || !std::isfinite(static_cast<double>(syn_.alpha)) ||
            (syn_.mode == diffnet::LabelMode::soft && !all_finite(syn_.label_logits)))
            throw NumericError("outer update produced a non-finite synthetic state at iteration " +
                               std::to_string(iteration));

        rec.alpha = static_cast<double>(syn_.alpha);
        rec.grad_norm_images =
            std::sqrt(static_cast<double>(kernels::sumsq(hg.images.data.data(), hg.images.size())));
        if (syn_.mode == diffnet::LabelMode::soft)
            rec.grad_norm_labels = std::sqrt(static_cast<double>(
                kernels::sumsq(hg.label_logits.data.data(), hg.label_logits.size())));
        rec.grad_norm_alpha = std::abs(static_cast<double>(hg.alpha_total));
        return rec;
    }

    // Full run: `iterations` steps, checkpointing every kCheckpointEvery
    // iterations and at completion. The sink receives the iteration count
    // reached and the current synthetic state.
    MetricsLog run(const std::vector<trajstore::Trajectory<T>>& pool,
                   const std::function<void(long long, const SyntheticDataset<T>&)>& sink = {}) {
        if (pool.empty()) throw ConfigError("expert pool is empty");
        for (const auto& traj : pool) {
            if (traj.spec_digest != spec_.digest())
                throw ValidationError("expert trajectory was trained on a different network spec");
            cfg_.schedule.validate_against(traj.epochs(), cfg_.m_gap);
        }

        MetricsLog log;
        log.records.reserve(static_cast<std::size_t>(cfg_.iterations));
        for (long long i = 0; i < cfg_.iterations; ++i) {
            MetricsRecord rec = step(pool, i);
            if (rec.skipped)
                log.warnings.push_back("iteration " + std::to_string(i) +
                                       ": skipped degenerate expert pair at t = " +
                                       std::to_string(rec.t));
            log.records.push_back(rec);
            if (sink && ((i + 1) % kCheckpointEvery == 0 || i + 1 == cfg_.iterations))
                sink(i + 1, syn_);
        }
        return log;
    }

  private:
    diffnet::NetworkSpec spec_;
    SyntheticDataset<T> syn_;
    DistillConfig cfg_;
    Matrix<T> vel_img_;
    Rng rng_;
};

}  // namespace distillforge::distill
