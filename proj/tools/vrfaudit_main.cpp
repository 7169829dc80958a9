#include <iostream>

#include "vrfaudit/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return vrfaudit::cli::run(args, std::cout, std::cerr);
}
