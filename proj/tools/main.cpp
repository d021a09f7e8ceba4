#include <iostream>
#include <string>
#include <vector>

#include "kpgen/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return kpgen::cli::run(args, std::cout, std::cerr);
}
