// SPDX-License-Identifier: Apache-2.0
#include "moelab/harness/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return moelab::harness::run_cli(args, std::cout, std::cerr);
}
