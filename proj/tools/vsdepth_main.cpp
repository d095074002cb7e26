#include "vsdepth/cli.hpp"

int main(int argc, char** argv) { return vsdepth::run_cli(argc, argv); }
