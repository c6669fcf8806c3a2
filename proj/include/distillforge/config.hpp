#pragma once

// Flat `key = value` experiment configuration for the command-line driver.
// One file describes the whole pipeline: toy data, network, expert training,
// distillation, and evaluation. Unknown keys, bad values, and out-of-range
// settings are rejected with the offending line number where there is one.
//
// serialize() emits every key in a fixed order with lossless %.17g numerics,
// so parse(serialize(c)) == c and an echoed config reruns bit-exactly.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "distillforge/data.hpp"
#include "distillforge/distill.hpp"
#include "distillforge/evalharness.hpp"
#include "distillforge/net.hpp"
#include "distillforge/traj.hpp"

namespace distillforge::cli {

struct RunConfig {
    // ---- trajectory matching
    int N = 5;          // inner synthetic steps per iteration
    int M = 1;          // expert epoch gap being matched
    int T_minus = 0;    // earliest start epoch
    int T_init = 15;    // initial upper bound on the start epoch
    int T_plus = 20;    // final upper bound
    int interval = 100; // iterations per unit bound growth
    long long iterations = 500;
    int syn_batch = 256;
    int ipc = 3;        // synthetic images per class
    double lr_img = 10.0;
    double lr_label = 1.0;
    double lr_alpha = 1e-4;
    double alpha_init = 0.05;  // initial inner step size (the expert lr)
    std::string label_mode = "hard";  // hard | soft
    int experts = 5;
    std::uint64_t seed = 1;

    // ---- toy dataset
    int classes = 4;
    int per_class = 100;       // training examples per class
    int test_per_class = 50;   // held-out examples per class
    int channels = 2;
    int height = 8;
    int width = 8;
    double separation = 1.6;
    double noise = 0.25;
    std::uint64_t data_seed = 2;

    // ---- network
    std::string net = "mlp";          // mlp | conv
    std::string hidden = "32";        // comma-separated mlp widths; empty = linear
    std::string conv_channels = "4";  // comma-separated conv channel counts
    std::string activation = "tanh";  // tanh | relu | identity

    // ---- expert training
    int expert_epochs = 80;
    double expert_lr = 0.05;
    double expert_momentum = 0.9;
    int expert_batch = 64;

    // ---- evaluation
    int eval_epochs = 20;
    double eval_lr = 0.05;
    double eval_momentum = 0.9;
    int eval_batch = 64;
    int eval_seeds = 5;
    std::uint64_t eval_base_seed = 1;

    bool operator==(const RunConfig&) const = default;

    // Parse `key = value` text; throws ConfigError naming the 1-based line.
    static RunConfig parse_text(const std::string& text);
    static RunConfig load(const std::filesystem::path& path);
    std::string serialize() const;

    // Cross-field checks, including everything the materialized sub-configs
    // would reject. Throws ConfigError.
    void validate() const;

    // ---- materialized sub-configs (validated fields assumed)
    datakit::ChannelLayout layout() const { return {channels, height, width}; }
    datakit::ToySpec toy_spec(int rows_per_class, std::uint64_t toy_seed) const;
    diffnet::NetworkSpec network() const;
    diffnet::LabelMode mode() const;
    trajstore::ExpertTrainConfig expert_config(std::uint64_t expert_seed) const;
    distill::DistillConfig distill_config() const;
    evalharness::EvalConfig eval_config() const;
};

}  // namespace distillforge::cli
