#include <unistd.h>

#include <cstdlib>
#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) {
    hearth::cli::Options options;
    options.color = std::getenv("NO_COLOR") == nullptr && ::isatty(STDERR_FILENO);
    std::vector<std::string> args(argv, argv + argc);
    return hearth::cli::run(args, std::cout, std::cerr, options);
}
