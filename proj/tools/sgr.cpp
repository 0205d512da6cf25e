#include <string>
#include <vector>

#include "sgr/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return sgr::cli::run(args);
}
