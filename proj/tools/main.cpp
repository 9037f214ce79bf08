#include <iostream>

#include "casejudge/cli.hpp"

int main(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return casejudge::cli::run_command(args, std::cout, std::cerr);
}
