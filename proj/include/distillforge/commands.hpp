#pragma once

// Command-line driver: gen-experts, distill, eval, ablate, inspect-buffer,
// render. Every command takes a `key = value` config file, applies any flag
// overrides, and echoes the effective configuration next to its outputs so a
// run can be reproduced bit-exactly from the echo alone.

#include <string>
#include <vector>

namespace distillforge::cli {

// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
int run_command(const std::vector<std::string>& args);

struct NamedRange {
    std::string name;
    int t_minus = 0;
    int t_init = 0;
    int t_plus = 0;
};

// Early / medium / late matching ranges scaled to an expert run of `epochs`
// epochs with snapshot gap `m_gap`. Ranges never overlap and never exceed
// epochs - m_gap.
std::vector<NamedRange> ablation_ranges(int epochs, int m_gap);

}  // namespace distillforge::cli
