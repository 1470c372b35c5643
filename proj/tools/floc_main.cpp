#include <vector>

#include "floc/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return floc::cli::run(args);
}
