#include "distillforge/config.hpp"

#include <cerrno>
#include <climits>
#include <cstdio>
#include <cstdlib>
#include <cstring>

#include "distillforge/errors.hpp"
#include "distillforge/io.hpp"

namespace distillforge::cli {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

long long to_ll(const std::string& v, const char* key, int line) {
    char* end = nullptr;
    errno = 0;
    const long long x = std::strtoll(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0' || errno == ERANGE)
        throw ConfigError(std::string(key) + " wants an integer, got '" + v + "'", line);
    return x;
}

int to_int(const std::string& v, const char* key, int line) {
    const long long x = to_ll(v, key, line);
    if (x < INT_MIN || x > INT_MAX)
        throw ConfigError(std::string(key) + " is out of range", line);
    return static_cast<int>(x);
}

std::uint64_t to_u64(const std::string& v, const char* key, int line) {
    char* end = nullptr;
    errno = 0;
    const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0' || errno == ERANGE || v.find('-') != std::string::npos)
        throw ConfigError(std::string(key) + " wants a non-negative integer, got '" + v + "'",
                          line);
    return x;
}

double to_double(const std::string& v, const char* key, int line) {
    char* end = nullptr;
    errno = 0;
    const double x = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0' || errno == ERANGE)
        throw ConfigError(std::string(key) + " wants a number, got '" + v + "'", line);
    return x;
}

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Comma-separated positive ints; "none" means an empty list.
std::vector<int> to_int_list(const std::string& v, const char* key, int line) {
    std::vector<int> out;
    if (trim(v).empty() || trim(v) == "none") return out;
    std::size_t pos = 0;
    while (pos <= v.size()) {
        std::size_t comma = v.find(',', pos);
        if (comma == std::string::npos) comma = v.size();
        const std::string item = trim(v.substr(pos, comma - pos));
        out.push_back(to_int(item, key, line));
        if (out.back() < 1)
            throw ConfigError(std::string(key) + " entries must be >= 1", line);
        pos = comma + 1;
    }
    return out;
}

std::string join_ints(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

}  // namespace

RunConfig RunConfig::parse_text(const std::string& text) {
    RunConfig c;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;

        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;

        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected 'key = value', got '" + line + "'", line_no);
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("empty key", line_no);
        if (val.empty()) throw ConfigError("key '" + key + "' has no value", line_no);
        const char* k = key.c_str();
        const int ln = line_no;

        if (key == "N") c.N = to_int(val, k, ln);
        else if (key == "M") c.M = to_int(val, k, ln);
        else if (key == "T_minus") c.T_minus = to_int(val, k, ln);
        else if (key == "T_init") c.T_init = to_int(val, k, ln);
        else if (key == "T_plus") c.T_plus = to_int(val, k, ln);
        else if (key == "interval") c.interval = to_int(val, k, ln);
        else if (key == "iterations") c.iterations = to_ll(val, k, ln);
        else if (key == "syn_batch") c.syn_batch = to_int(val, k, ln);
        else if (key == "ipc") c.ipc = to_int(val, k, ln);
        else if (key == "lr_img") c.lr_img = to_double(val, k, ln);
        else if (key == "lr_label") c.lr_label = to_double(val, k, ln);
        else if (key == "lr_alpha") c.lr_alpha = to_double(val, k, ln);
        else if (key == "alpha_init") c.alpha_init = to_double(val, k, ln);
        else if (key == "label_mode") c.label_mode = val;
        else if (key == "experts") c.experts = to_int(val, k, ln);
        else if (key == "seed") c.seed = to_u64(val, k, ln);
        else if (key == "classes") c.classes = to_int(val, k, ln);
        else if (key == "per_class") c.per_class = to_int(val, k, ln);
        else if (key == "test_per_class") c.test_per_class = to_int(val, k, ln);
        else if (key == "channels") c.channels = to_int(val, k, ln);
        else if (key == "height") c.height = to_int(val, k, ln);
        else if (key == "width") c.width = to_int(val, k, ln);
        else if (key == "separation") c.separation = to_double(val, k, ln);
        else if (key == "noise") c.noise = to_double(val, k, ln);
        else if (key == "data_seed") c.data_seed = to_u64(val, k, ln);
        else if (key == "net") c.net = val;
        else if (key == "hidden") c.hidden = join_ints(to_int_list(val, k, ln));
        else if (key == "conv_channels") c.conv_channels = join_ints(to_int_list(val, k, ln));
        else if (key == "activation") c.activation = val;
        else if (key == "expert_epochs") c.expert_epochs = to_int(val, k, ln);
        else if (key == "expert_lr") c.expert_lr = to_double(val, k, ln);
        else if (key == "expert_momentum") c.expert_momentum = to_double(val, k, ln);
        else if (key == "expert_batch") c.expert_batch = to_int(val, k, ln);
        else if (key == "eval_epochs") c.eval_epochs = to_int(val, k, ln);
        else if (key == "eval_lr") c.eval_lr = to_double(val, k, ln);
        else if (key == "eval_momentum") c.eval_momentum = to_double(val, k, ln);
        else if (key == "eval_batch") c.eval_batch = to_int(val, k, ln);
        else if (key == "eval_seeds") c.eval_seeds = to_int(val, k, ln);
        else if (key == "eval_base_seed") c.eval_base_seed = to_u64(val, k, ln);
        else throw ConfigError("unknown key '" + key + "'", line_no);
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    return parse_text(io::read_text(path));
}

std::string RunConfig::serialize() const {
    std::string out;
    out += "# trajectory matching\n";
    out += "N = " + std::to_string(N) + "\n";
    out += "M = " + std::to_string(M) + "\n";
    out += "T_minus = " + std::to_string(T_minus) + "\n";
    out += "T_init = " + std::to_string(T_init) + "\n";
    out += "T_plus = " + std::to_string(T_plus) + "\n";
    out += "interval = " + std::to_string(interval) + "\n";
    out += "iterations = " + std::to_string(iterations) + "\n";
    out += "syn_batch = " + std::to_string(syn_batch) + "\n";
    out += "ipc = " + std::to_string(ipc) + "\n";
    out += "lr_img = " + g17(lr_img) + "\n";
    out += "lr_label = " + g17(lr_label) + "\n";
    out += "lr_alpha = " + g17(lr_alpha) + "\n";
    out += "alpha_init = " + g17(alpha_init) + "\n";
    out += "label_mode = " + label_mode + "\n";
    out += "experts = " + std::to_string(experts) + "\n";
    out += "seed = " + std::to_string(seed) + "\n";
    out += "\n# toy dataset\n";
    out += "classes = " + std::to_string(classes) + "\n";
    out += "per_class = " + std::to_string(per_class) + "\n";
    out += "test_per_class = " + std::to_string(test_per_class) + "\n";
    out += "channels = " + std::to_string(channels) + "\n";
    out += "height = " + std::to_string(height) + "\n";
    out += "width = " + std::to_string(width) + "\n";
    out += "separation = " + g17(separation) + "\n";
    out += "noise = " + g17(noise) + "\n";
    out += "data_seed = " + std::to_string(data_seed) + "\n";
    out += "\n# network\n";
    out += "net = " + net + "\n";
    out += "hidden = " + (hidden.empty() ? "none" : hidden) + "\n";
    out += "conv_channels = " + (conv_channels.empty() ? "none" : conv_channels) + "\n";
    out += "activation = " + activation + "\n";
    out += "\n# expert training\n";
    out += "expert_epochs = " + std::to_string(expert_epochs) + "\n";
    out += "expert_lr = " + g17(expert_lr) + "\n";
    out += "expert_momentum = " + g17(expert_momentum) + "\n";
    out += "expert_batch = " + std::to_string(expert_batch) + "\n";
    out += "\n# evaluation\n";
    out += "eval_epochs = " + std::to_string(eval_epochs) + "\n";
    out += "eval_lr = " + g17(eval_lr) + "\n";
    out += "eval_momentum = " + g17(eval_momentum) + "\n";
    out += "eval_batch = " + std::to_string(eval_batch) + "\n";
    out += "eval_seeds = " + std::to_string(eval_seeds) + "\n";
    out += "eval_base_seed = " + std::to_string(eval_base_seed) + "\n";
    return out;
}

void RunConfig::validate() const {
    if (label_mode != "hard" && label_mode != "soft")
        throw ConfigError("label_mode must be 'hard' or 'soft', got '" + label_mode + "'");
    if (net != "mlp" && net != "conv")
        throw ConfigError("net must be 'mlp' or 'conv', got '" + net + "'");
    if (activation != "tanh" && activation != "relu" && activation != "identity")
        throw ConfigError("activation must be tanh, relu, or identity, got '" + activation + "'");
    if (ipc < 1) throw ConfigError("ipc must be >= 1");
    if (test_per_class < 1) throw ConfigError("test_per_class must be >= 1");
    if (!(alpha_init > 0.0)) throw ConfigError("alpha_init must be positive");

    // every derived config must be constructible; re-badge the reasons so a
    // bad file always surfaces as a ConfigError
    try {
        toy_spec(per_class, data_seed).validate();
        toy_spec(test_per_class, data_seed + 1).validate();
        network().validate();
        expert_config(seed).validate();
        const auto dc = distill_config();
        dc.validate();
        dc.schedule.validate_against(expert_epochs, M);
        evalharness::EvalConfig ec = eval_config();
        ec.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
}

datakit::ToySpec RunConfig::toy_spec(int rows_per_class, std::uint64_t toy_seed) const {
    datakit::ToySpec ts;
    ts.classes = classes;
    ts.per_class = rows_per_class;
    ts.layout = layout();
    ts.separation = separation;
    ts.noise = noise;
    ts.seed = toy_seed;
    return ts;
}

diffnet::NetworkSpec RunConfig::network() const {
    diffnet::Activation act = diffnet::Activation::tanh;
    if (activation == "relu") act = diffnet::Activation::relu;
    else if (activation == "identity") act = diffnet::Activation::identity;
    if (net == "conv")
        return diffnet::NetworkSpec::convnet(channels, height, width,
                                             to_int_list(conv_channels, "conv_channels", 0),
                                             classes, act);
    return diffnet::NetworkSpec::mlp(layout().dim(), to_int_list(hidden, "hidden", 0), classes,
                                     act);
}

diffnet::LabelMode RunConfig::mode() const {
    return label_mode == "hard" ? diffnet::LabelMode::hard : diffnet::LabelMode::soft;
}

trajstore::ExpertTrainConfig RunConfig::expert_config(std::uint64_t expert_seed) const {
    trajstore::ExpertTrainConfig tc;
    tc.epochs = expert_epochs;
    tc.lr = expert_lr;
    tc.momentum = expert_momentum;
    tc.batch = expert_batch;
    tc.seed = expert_seed;
    return tc;
}

distill::DistillConfig RunConfig::distill_config() const {
    distill::DistillConfig dc;
    dc.n_inner = N;
    dc.m_gap = M;
    dc.schedule.t_minus = T_minus;
    dc.schedule.t_init = T_init;
    dc.schedule.t_plus = T_plus;
    dc.schedule.interval = interval;
    dc.iterations = iterations;
    dc.syn_batch = syn_batch;
    dc.lr_img = lr_img;
    dc.lr_label = lr_label;
    dc.lr_alpha = lr_alpha;
    dc.label_mode = mode();
    dc.experts = experts;
    dc.seed = seed;
    return dc;
}

evalharness::EvalConfig RunConfig::eval_config() const {
    evalharness::EvalConfig ec;
    ec.spec = network();
    ec.epochs = eval_epochs;
    ec.lr = eval_lr;
    ec.momentum = eval_momentum;
    ec.batch = eval_batch;
    ec.num_seeds = eval_seeds;
    ec.base_seed = eval_base_seed;
    return ec;
}

}  // namespace distillforge::cli
