#include "distillforge/commands.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <string>
#include <vector>

#include "distillforge/config.hpp"
#include "distillforge/data.hpp"
#include "distillforge/distill.hpp"
#include "distillforge/errors.hpp"
#include "distillforge/evalharness.hpp"
#include "distillforge/export.hpp"
#include "distillforge/io.hpp"
#include "distillforge/kernels.hpp"
#include "distillforge/synthetic.hpp"
#include "distillforge/traj.hpp"
#include "distillforge/trajio.hpp"

namespace distillforge::cli {

namespace {

namespace fs = std::filesystem;

// ------------------------------------------------------------ shared plumbing

datakit::Dataset<double> make_train(const RunConfig& cfg) {
    auto ds = datakit::make_toy_dataset<double>(cfg.toy_spec(cfg.per_class, cfg.data_seed));
    datakit::normalize(ds);  // the training draw defines the normalization frame
    return ds;
}

datakit::Dataset<double> make_test(const RunConfig& cfg, const datakit::NormStats& train_stats) {
    auto ds = datakit::make_toy_dataset<double>(cfg.toy_spec(cfg.test_per_class, cfg.data_seed + 1));
    datakit::normalize(ds, train_stats);
    return ds;
}

fs::path expert_path(const fs::path& out, int k) {
    return out / "experts" / ("expert_" + std::to_string(k) + ".trjb");
}

void write_echo(const RunConfig& cfg, const fs::path& out, const std::string& name) {
    io::write_text_atomic(out / name, cfg.serialize());
}

std::vector<trajstore::Trajectory<double>> load_pool(const RunConfig& cfg, const fs::path& out,
                                                     const diffnet::NetworkSpec& spec,
                                                     const std::string& train_digest) {
    std::vector<trajstore::Trajectory<double>> pool;
    pool.reserve(static_cast<std::size_t>(cfg.experts));
    for (int k = 0; k < cfg.experts; ++k) {
        const fs::path p = expert_path(out, k);
        auto traj = trajstore::read_buffer<double>(p);
        if (traj.spec_digest != spec.digest() || traj.dataset_digest != train_digest)
            throw ValidationError(p.string() +
                                  " was trained on a different network or dataset; rerun "
                                  "gen-experts with the current config");
        pool.push_back(std::move(traj));
    }
    return pool;
}

distill::SyntheticDataset<double> init_syn(const RunConfig& cfg,
                                           const datakit::Dataset<double>& train,
                                           const diffnet::NetworkSpec& spec,
                                           const std::vector<trajstore::Trajectory<double>>& pool) {
    const std::uint64_t seed = Rng::mix(cfg.seed, 4);
    if (cfg.mode() == diffnet::LabelMode::hard)
        return distill::init_synthetic(train, cfg.ipc, diffnet::LabelMode::hard,
                                       cfg.alpha_init, seed);
    // soft labels start from the logits of a trained expert
    const std::vector<double>& theta = pool.front().snapshots.back();
    return distill::init_synthetic(train, cfg.ipc, diffnet::LabelMode::soft, cfg.alpha_init, seed,
                                   &spec, std::span<const double>(theta));
}

// ---------------------------------------------------------------- commands

int cmd_gen_experts(const RunConfig& cfg, const fs::path& out) {
    const auto train = make_train(cfg);
    const auto spec = cfg.network();
    fs::create_directories(out / "experts");

    // one task per expert; kernels run serially inside so the tasks are the
    // parallelism, not nested OpenMP regions
    std::vector<std::future<trajstore::EpochStats>> tasks;
    for (int k = 0; k < cfg.experts; ++k) {
        tasks.push_back(std::async(std::launch::async, [&, k] {
            kernels::ScopedSerial serial;
            const auto traj = trajstore::train_expert(spec, train, cfg.expert_config(cfg.seed + k));
            trajstore::write_buffer(traj, expert_path(out, k));
            return traj.epoch_stats.back();
        }));
    }
    for (int k = 0; k < cfg.experts; ++k) {
        const auto last = tasks[k].get();
        std::printf("expert %d: seed %llu, final loss %.4f, accuracy %.4f -> %s\n", k,
                    static_cast<unsigned long long>(cfg.seed + k), last.loss, last.accuracy,
                    expert_path(out, k).string().c_str());
    }
    write_echo(cfg, out, "echo_gen_experts.cfg");
    return 0;
}

int cmd_distill(const RunConfig& cfg, const fs::path& out) {
    const auto train = make_train(cfg);
    const auto spec = cfg.network();
    const auto pool = load_pool(cfg, out, spec, train.digest());

    auto syn = init_syn(cfg, train, spec, pool);
    const auto initial = syn;
    datakit::export_distilled(out / "checkpoints" / "ckpt_0", initial);

    distill::Distiller<double> dist(spec, std::move(syn), cfg.distill_config());
    const auto log = dist.run(pool, [&](long long i, const distill::SyntheticDataset<double>& s) {
        datakit::export_distilled(out / "checkpoints" / ("ckpt_" + std::to_string(i)), s);
    });

    io::write_text_atomic(out / "metrics.csv", log.to_csv());
    datakit::export_distilled(out / "distilled", dist.synthetic());
    datakit::export_image_grid(dist.synthetic(), out / "grid_final.ppm");
    datakit::export_image_grid_pair(initial, dist.synthetic(), out / "grid_initial_final.ppm");
    write_echo(cfg, out, "echo_distill.cfg");

    for (const auto& w : log.warnings) std::printf("warning: %s\n", w.c_str());
    const auto& last = log.records.back();
    std::printf("distill: %lld iterations, final matching loss %.6f, alpha %.6f -> %s\n",
                cfg.iterations, last.matching_loss, last.alpha,
                (out / "distilled").string().c_str());
    return 0;
}

int cmd_eval(const RunConfig& cfg, const fs::path& out) {
    const auto train = make_train(cfg);
    const auto test = make_test(cfg, train.stats);
    const auto syn = datakit::import_distilled<double>(out / "distilled");

    const auto mismatches = evalharness::label_consistency_check(syn);
    if (!mismatches.empty()) {
        for (const auto& m : mismatches)
            std::printf("label audit: row %d stores class %d, expected %d\n", m.index, m.stored,
                        m.expected);
        throw ValidationError("distilled artifact failed the label audit");
    }
    std::printf("label audit: ok (%d rows)\n", syn.classes * syn.ipc);

    const auto rep = evalharness::evaluate(syn.images, test, cfg.eval_config());
    const auto base = evalharness::baseline_random_subset(train, test, cfg.ipc, cfg.eval_config(),
                                                          Rng::mix(cfg.seed, 5));
    io::write_text_atomic(out / "eval_distilled.csv", rep.to_csv());
    io::write_text_atomic(out / "eval_baseline.csv", base.to_csv());
    write_echo(cfg, out, "echo_eval.cfg");

    std::printf("distilled: %.4f +/- %.4f over %d seeds\n", rep.mean, rep.stddev, cfg.eval_seeds);
    std::printf("baseline:  %.4f +/- %.4f (stratified random subset, ipc %d)\n", base.mean,
                base.stddev, cfg.ipc);
    return 0;
}

int cmd_ablate(const RunConfig& cfg, const fs::path& out) {
    const auto ranges = ablation_ranges(cfg.expert_epochs, cfg.M);
    const auto train = make_train(cfg);
    const auto test = make_test(cfg, train.stats);
    const auto spec = cfg.network();
    const auto pool = load_pool(cfg, out, spec, train.digest());

    std::string summary = "range, t_minus, t_init, t_plus, accuracy_mean, accuracy_std\n";
    for (const auto& r : ranges) {
        RunConfig rc = cfg;
        rc.T_minus = r.t_minus;
        rc.T_init = r.t_init;
        rc.T_plus = r.t_plus;
        rc.validate();

        const fs::path dir = out / "ablate" / r.name;
        fs::create_directories(dir);
        auto syn = init_syn(rc, train, spec, pool);
        const auto initial = syn;
        distill::Distiller<double> dist(spec, std::move(syn), rc.distill_config());
        const auto log = dist.run(pool);
        io::write_text_atomic(dir / "metrics.csv", log.to_csv());
        datakit::export_distilled(dir / "initial", initial);
        datakit::export_distilled(dir / "distilled", dist.synthetic());
        datakit::export_image_grid_pair(initial, dist.synthetic(),
                                        dir / "grid_initial_final.ppm");

        const auto rep = evalharness::evaluate(dist.synthetic().images, test, rc.eval_config());
        io::write_text_atomic(dir / "eval_distilled.csv", rep.to_csv());

        char row[160];
        std::snprintf(row, sizeof(row), "%s, %d, %d, %d, %.17g, %.17g\n", r.name.c_str(),
                      r.t_minus, r.t_init, r.t_plus, rep.mean, rep.stddev);
        summary += row;
        std::printf("%s range [%d, %d..%d]: accuracy %.4f +/- %.4f\n", r.name.c_str(), r.t_minus,
                    r.t_init, r.t_plus, rep.mean, rep.stddev);
    }
    io::write_text_atomic(out / "ablate" / "summary.csv", summary);
    write_echo(cfg, out, "echo_ablate.cfg");
    return 0;
}

int cmd_inspect(const fs::path& file) {
    const auto header = trajstore::read_buffer_header(file);
    std::printf("buffer:         %s\n", file.string().c_str());
    std::printf("version:        %u\n", header.version);
    std::printf("network digest: %s\n", header.spec_digest.c_str());
    std::printf("dataset digest: %s\n", header.dataset_digest.c_str());
    std::printf("seed:           %llu\n", static_cast<unsigned long long>(header.seed));
    std::printf("epochs:         %u (%u snapshots)\n", header.epochs, header.epochs + 1);
    std::printf("parameters:     %llu (%u-bit)\n", static_cast<unsigned long long>(header.params),
                header.dtype * 8u);

    const auto traj = trajstore::read_buffer<double>(file);
    const auto dist = trajstore::distance_profile(traj, 1);
    std::printf("epoch  loss      accuracy  step distance\n");
    for (int e = 0; e < traj.epochs(); ++e) {
        if (static_cast<int>(traj.epoch_stats.size()) == traj.epochs())
            std::printf("%5d  %8.4f  %8.4f  %.6e\n", e + 1, traj.epoch_stats[e].loss,
                        traj.epoch_stats[e].accuracy, dist[e]);
        else
            std::printf("%5d  %8s  %8s  %.6e\n", e + 1, "-", "-", dist[e]);
    }
    return 0;
}

int cmd_render(const fs::path& artifact, const fs::path& out_file) {
    const auto syn = datakit::import_distilled<double>(artifact);
    datakit::export_image_grid(syn, out_file);
    std::printf("rendered %d x %d grid (%d classes x %d per class) -> %s\n",
                syn.ipc * syn.layout.width, syn.classes * syn.layout.height, syn.classes, syn.ipc,
                out_file.string().c_str());
    return 0;
}

// ------------------------------------------------------------------ parsing

struct Overrides {
    std::uint64_t seed = 0;
    bool has_seed = false;
    std::string label_mode;
    std::string range;
    long long iterations = 0;
    bool has_iterations = false;
    int experts = 0;
    bool has_experts = false;
};

void apply_overrides(RunConfig& cfg, const Overrides& ov) {
    if (ov.has_seed) cfg.seed = ov.seed;
    if (!ov.label_mode.empty()) cfg.label_mode = ov.label_mode;
    if (ov.has_iterations) cfg.iterations = ov.iterations;
    if (ov.has_experts) cfg.experts = ov.experts;
    if (!ov.range.empty()) {
        int a = 0, b = 0, c = 0, used = 0;
        if (std::sscanf(ov.range.c_str(), "%d:%d:%d%n", &a, &b, &c, &used) != 3 ||
            used != static_cast<int>(ov.range.size()))
            throw ConfigError("--range wants T_minus:T_init:T_plus, got '" + ov.range + "'");
        cfg.T_minus = a;
        cfg.T_init = b;
        cfg.T_plus = c;
    }
    cfg.validate();
}

void apply_thread_cap() {
    const char* env = std::getenv("DISTILLFORGE_THREADS");
    if (!env) return;
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1)
        throw ConfigError(std::string("DISTILLFORGE_THREADS must be a positive integer, got '") +
                          env + "'");
    kernels::set_max_threads(static_cast<int>(n));
}

}  // namespace

std::vector<NamedRange> ablation_ranges(int epochs, int m_gap) {
    if (epochs < 1 || m_gap < 1) throw ConfigError("ablation needs epochs >= 1 and M >= 1");
    // anchor ranges for an 80-epoch run, scaled down proportionally
    const int anchors[3][3] = {{0, 15, 20}, {30, 45, 60}, {60, 75, 80}};
    const char* names[3] = {"early", "medium", "late"};
    const double s = static_cast<double>(epochs) / 80.0;

    std::vector<NamedRange> out;
    int prev_plus = -1;
    for (int i = 0; i < 3; ++i) {
        NamedRange r;
        r.name = names[i];
        r.t_minus = static_cast<int>(std::floor(anchors[i][0] * s));
        r.t_init = static_cast<int>(std::floor(anchors[i][1] * s));
        r.t_plus = static_cast<int>(std::floor(anchors[i][2] * s));
        r.t_plus = std::min(r.t_plus, epochs - m_gap);
        r.t_init = std::min(r.t_init, r.t_plus);
        if (r.t_minus <= prev_plus) r.t_minus = prev_plus + 1;  // keep ranges disjoint
        if (r.t_minus > r.t_init)
            throw ConfigError("expert run of " + std::to_string(epochs) +
                              " epochs is too short for the early/medium/late range split");
        prev_plus = r.t_plus;
        out.push_back(r);
    }
    return out;
}

int run_command(const std::vector<std::string>& args) {
    CLI::App app{"trajectory-matching dataset distillation on toy data"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    Overrides ov;

    auto add_common = [&](CLI::App* sub, bool with_overrides) {
        sub->add_option("--config", config_path, "experiment config file")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory")->required();
        if (with_overrides) {
            sub->add_option("--seed", ov.seed, "override the experiment seed")
                ->each([&](const std::string&) { ov.has_seed = true; });
            sub->add_option("--label-mode", ov.label_mode, "override label_mode (hard|soft)");
        }
    };

    auto* gen = app.add_subcommand("gen-experts", "train and save the expert trajectory pool");
    add_common(gen, true);
    gen->add_option("--experts", ov.experts, "override the pool size")
        ->each([&](const std::string&) { ov.has_experts = true; });

    auto* dis = app.add_subcommand("distill", "run trajectory-matching distillation");
    add_common(dis, true);
    dis->add_option("--range", ov.range, "override the matching range as T_minus:T_init:T_plus");
    dis->add_option("--iterations", ov.iterations, "override the outer iteration count")
        ->each([&](const std::string&) { ov.has_iterations = true; });

    auto* ev = app.add_subcommand("eval", "evaluate the distilled set against a random baseline");
    add_common(ev, true);

    auto* ab = app.add_subcommand("ablate", "compare early/medium/late matching ranges");
    add_common(ab, true);

    std::string buffer_path;
    auto* ins = app.add_subcommand("inspect-buffer", "print a trajectory buffer's header and stats");
    ins->add_option("file", buffer_path, "trajectory buffer (.trjb)")
        ->required()
        ->check(CLI::ExistingFile);

    std::string artifact_dir, render_out;
    auto* ren = app.add_subcommand("render", "render a distilled artifact as a PPM grid");
    ren->add_option("--artifact", artifact_dir, "distilled artifact directory")->required();
    ren->add_option("--out", render_out, "output .ppm path")->required();

    std::vector<std::string> argv_vec = args;
    std::vector<const char*> argv;
    argv.push_back("distillforge");
    for (const auto& a : argv_vec) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        apply_thread_cap();
        if (ins->parsed()) return cmd_inspect(buffer_path);
        if (ren->parsed()) return cmd_render(artifact_dir, render_out);

        RunConfig cfg = RunConfig::load(config_path);
        apply_overrides(cfg, ov);
        const fs::path out(out_dir);
        fs::create_directories(out);
        if (gen->parsed()) return cmd_gen_experts(cfg, out);
        if (dis->parsed()) return cmd_distill(cfg, out);
        if (ev->parsed()) return cmd_eval(cfg, out);
        if (ab->parsed()) return cmd_ablate(cfg, out);
        return 2;  // unreachable with require_subcommand(1)
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace distillforge::cli
