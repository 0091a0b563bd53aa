#include "mmvs/cli.hpp"

int main(int argc, char** argv) { return mmvs::run_cli(argc, argv); }
