#pragma once

// Class-major default labeling shared by the distillation loop, the
// exporter, and the evaluation harness: row i belongs to class i / ipc.

#include <vector>

#include "distillforge/errors.hpp"

namespace distillforge {

inline std::vector<int> default_labels(int classes, int ipc) {
    if (classes < 1 || ipc < 1) throw ValidationError("classes and ipc must be >= 1");
    std::vector<int> y(static_cast<std::size_t>(classes) * ipc);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i) / ipc;
    return y;
}

}  // namespace distillforge
