#include "cli.hpp"

int main(int argc, char** argv) { return branchmoments::cli::run(argc, argv); }
