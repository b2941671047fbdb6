#include "gdc/cli.hpp"

int main(int argc, char** argv) { return gdc::cli::run(argc, argv); }
