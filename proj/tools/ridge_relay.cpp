#include <iostream>
#include <string>
#include <vector>

#include "ridge_relay/commands.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return ridge_relay::run_cli(args, std::cout, std::cerr);
}
