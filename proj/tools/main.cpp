#include "dyneformer/cli/cli.hpp"

int main(int argc, char** argv) { return dyneformer::cli::run(argc, argv); }
