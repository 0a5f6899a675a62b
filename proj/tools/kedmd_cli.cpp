#include "kedmd/cli.hpp"

int main(int argc, char** argv) { return kedmd::cli::run(argc, argv); }
