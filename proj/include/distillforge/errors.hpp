#pragma once

#include <stdexcept>
#include <string>

namespace distillforge {

// Shape/dimension disagreement between operands.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Precondition or invariant violation on otherwise well-formed data.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Inner or expert training produced non-finite parameters.
struct DivergenceError : NumericError {
    DivergenceError(const std::string& msg, int step_index)
        : NumericError(msg), step(step_index) {}
    int step;
};

// File-level failures (missing path, short read, write failure).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Binary buffer parsing; `code` distinguishes the failure class.
struct ParseError : std::runtime_error {
    enum class Code { bad_magic, bad_version, truncated, checksum_mismatch, malformed };
    ParseError(Code c, const std::string& msg) : std::runtime_error(msg), code(c) {}
    Code code;
};

// Text config parsing; `line` is 1-based, 0 when not tied to a line.
struct ConfigError : std::runtime_error {
    ConfigError(const std::string& msg, int line_number = 0)
        : std::runtime_error(line_number > 0 ? "line " + std::to_string(line_number) + ": " + msg
                                             : msg),
          line(line_number) {}
    int line;
};

}  // namespace distillforge
