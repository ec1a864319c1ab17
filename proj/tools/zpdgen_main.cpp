#include "zpd/cli.hpp"

int main(int argc, char** argv) { return zpd::cli::run(argc, argv); }
