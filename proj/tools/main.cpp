#include "fintool/cli.hpp"

int main(int argc, char** argv) { return fintool::cli::run(std::vector<std::string>(argv, argv + argc)); }
