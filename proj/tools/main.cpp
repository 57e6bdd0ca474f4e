#include "ecgcode/cli.hpp"

int main(int argc, char** argv) { return ecgcode::cli::run(argc, argv); }
