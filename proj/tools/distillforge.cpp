#include <string>
#include <vector>

#include "distillforge/commands.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return distillforge::cli::run_command(args);
}
