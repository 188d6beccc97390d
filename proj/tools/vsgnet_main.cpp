#include "vsgnet/cli.hpp"

int main(int argc, char** argv) { return vsg::cli_main(argc, argv); }
